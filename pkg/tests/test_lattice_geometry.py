"""
Test Lattice Geometry
Presets, metric validation, minimal tree sizes and geometric constants
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clusterexp.errors import InputError
from clusterexp.models.lattice import PointMultiset
from clusterexp.services.lattice_geometry import (
    build_lattice,
    distances_from,
    explicit,
    geometric_constant_cg,
    geometric_constant_cg_prime,
    minimum_spanning_edges,
    torus1d,
    torus2d,
    tree_size,
)


class TestPresets:
    def test_ring_distances(self):
        ring = torus1d(6)
        assert ring.distance(0, 3) == 3
        assert ring.distance(0, 5) == 1
        assert ring.dof == 6

    def test_torus2d_ids_and_metric(self):
        torus = torus2d(3, components=2)
        assert torus.size == 9
        assert torus.dof == 18
        # (0, 0) -> (2, 2) wraps to one step in each direction
        assert torus.distance(0, 8) == 2
        assert torus.dof_index(4, 1) == 9

    def test_build_lattice_dispatch(self):
        assert build_lattice("torus1d", 4).size == 4
        with pytest.raises(InputError, match="needs a metric"):
            build_lattice("explicit")

    def test_explicit_rejects_triangle_violation(self):
        with pytest.raises(InputError, match="triangle"):
            explicit([[0, 1, 5], [1, 0, 1], [5, 1, 0]])

    def test_explicit_rejects_asymmetric(self):
        with pytest.raises(InputError, match="symmetric"):
            explicit([[0, 1], [2, 0]])

    def test_unknown_site_and_component(self):
        ring = torus1d(3)
        with pytest.raises(InputError, match="Unknown site"):
            ring.check_site(3)
        with pytest.raises(InputError, match="Unknown component"):
            ring.dof_index(0, 1)


class TestTreeSize:
    def test_singleton_is_zero(self):
        assert tree_size(torus1d(5), [2]) == 0.0

    def test_ring_three_points(self):
        # two unit edges span {0, 1, 2}
        assert tree_size(torus1d(6), [0, 1, 2]) == 2.0
        assert tree_size(torus1d(6), [0, 3]) == 3.0

    def test_empty_set_rejected(self):
        with pytest.raises(InputError):
            tree_size(torus1d(3), [])

    def test_ties_resolve_lexicographically(self):
        edges = minimum_spanning_edges(torus1d(3), [0, 1, 2])
        assert edges == ((0, 1), (0, 2))

    @settings(max_examples=50, deadline=None)
    @given(st.sets(st.integers(0, 7), min_size=1, max_size=8), st.integers(0, 7))
    def test_bounds_and_monotonicity(self, points, extra):
        ring = torus1d(8)
        size = tree_size(ring, points)
        diameter = max(ring.distance(a, b) for a in points for b in points)
        assert diameter <= size + 1e-12
        assert size <= (len(points) - 1) * diameter + 1e-12
        assert size <= tree_size(ring, points | {extra}) + 1e-12 or extra in points


class TestGeometricConstants:
    def test_cg_on_ring(self):
        m = 0.5
        expected = 1 + 2 * np.exp(-m) + 2 * np.exp(-2 * m) + np.exp(-3 * m)
        assert geometric_constant_cg(torus1d(6), m) == pytest.approx(expected)

    def test_cg_needs_positive_mass(self):
        with pytest.raises(InputError):
            geometric_constant_cg(torus1d(3), 0.0)

    def test_cg_prime_singleton_ball(self):
        report = geometric_constant_cg_prime(torus1d(8), 1.0, max_Q=2)
        assert report.singleton_ball == 3
        assert report.sup_ratio == pytest.approx(3.0)
        assert report.sup_ratio <= report.singleton_ball

    def test_distances_from(self):
        assert distances_from(torus1d(6), 0) == [(0.0, 0), (1.0, 1), (2.0, 2), (3.0, 3)]


def test_point_multiset_normalizes_order():
    a = PointMultiset.of([[1, 0], [0, 0], [1, 0]])
    b = PointMultiset.of([[1, 0], [1, 0], [0, 0]])
    assert a == b
    assert a.multiplicity((1, 0)) == 2
    assert a.support() == frozenset({0, 1})
    assert a.compose(PointMultiset.of([[2, 0]])).degree == 4
