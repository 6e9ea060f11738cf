"""
Tests for polymer activities
"""

import numpy as np
import pytest
from scipy.special import erf
from scipy.stats import norm

from clusterexp.errors import InputError, NumericError, ResourceError
from clusterexp.models.expansion import DerivativeBackend
from clusterexp.models.graphs import InterpolationPoint
from clusterexp.models.run_config import QuadratureSection
from clusterexp.services.activities import (
    ActivityEvaluator,
    PolymerIntegrand,
    activity,
    as_source_batch,
    box_tail_estimate,
    build_large_field_tables,
    build_polymer_tables,
    enumerate_polymers,
    large_field_activities,
    polymer_Z,
    site_regions,
)
from clusterexp.services.mayer import partition_sum
from tests.conftest import make_model

J_PAIR = np.array([[0.3], [-0.2]])


def gaussian_logZ(model, J):
    C = model.covariance.matrix.real
    flat = J.ravel()
    return 0.5 * flat @ C @ flat


class TestSourceBatch:
    def test_single_source_becomes_batch(self, pair_gaussian_model):
        assert as_source_batch(J_PAIR, pair_gaussian_model).shape == (1, 2, 1)

    def test_batch_kept(self, pair_gaussian_model):
        batch = np.zeros((4, 2, 1))
        assert as_source_batch(batch, pair_gaussian_model).shape == (4, 2, 1)

    def test_wrong_shape(self, pair_gaussian_model):
        with pytest.raises(InputError):
            as_source_batch(np.zeros((3, 1)), pair_gaussian_model)


class TestPolymers:
    def test_enumeration_order(self):
        polymers = enumerate_polymers([2, 0, 1], 2)
        assert polymers == [
            frozenset({0}), frozenset({1}), frozenset({2}),
            frozenset({0, 1}), frozenset({0, 2}), frozenset({1, 2}),
        ]

    def test_size_capped_by_lattice(self):
        assert len(enumerate_polymers(range(3), 10)) == 7

    def test_split_radius_must_sit_inside_the_box(self, quartic_model):
        assert len(site_regions(quartic_model, 2.0)) == 2
        with pytest.raises(InputError):
            site_regions(quartic_model, 6.0)

    def test_dimension_cap(self):
        model = make_model(10)
        with pytest.raises(ResourceError):
            PolymerIntegrand(model, range(9))


class TestGaussianActivities:
    def test_polymer_Z_at_full_coupling(self, pair_gaussian_model):
        point = InterpolationPoint.constant([0, 1], 1.0)
        Z = polymer_Z(pair_gaussian_model, [0, 1], point, J_PAIR)
        assert Z[0] == pytest.approx(np.exp(gaussian_logZ(pair_gaussian_model, J_PAIR)), rel=1e-6)

    def test_polymer_Z_decoupled(self, pair_gaussian_model):
        point = InterpolationPoint.constant([0, 1], 0.0)
        Z = polymer_Z(pair_gaussian_model, [0, 1], point, J_PAIR)
        C = pair_gaussian_model.covariance.matrix.real
        expected = np.exp(0.5 * (C[0, 0] * 0.09 + C[1, 1] * 0.04))
        assert Z[0] == pytest.approx(expected, rel=1e-6)

    def test_single_site(self, pair_gaussian_model):
        values, residual = activity(pair_gaussian_model, [0], J_PAIR)
        C = pair_gaussian_model.covariance.matrix.real
        assert values[0] == pytest.approx(np.exp(0.5 * C[0, 0] * 0.09), rel=1e-6)
        assert residual < 1e-7

    def test_pair(self, pair_gaussian_model):
        values, residual = activity(pair_gaussian_model, [0, 1], J_PAIR)
        C = pair_gaussian_model.covariance.matrix.real
        expected = np.exp(gaussian_logZ(pair_gaussian_model, J_PAIR)) - np.exp(0.5 * (C[0, 0] * 0.09 + C[1, 1] * 0.04))
        assert values[0] == pytest.approx(expected, abs=1e-6)
        assert residual < 1e-6

    def test_pair_vanishes_without_source(self, pair_gaussian_model):
        values, _ = activity(pair_gaussian_model, [0, 1], pair_gaussian_model.zero_source())
        assert abs(values[0]) < 1e-8

    def test_ibp_backend_matches_closed_form(self, pair_gaussian_model):
        C = pair_gaussian_model.covariance.matrix.real
        expected = np.exp(gaussian_logZ(pair_gaussian_model, J_PAIR)) - np.exp(0.5 * (C[0, 0] * 0.09 + C[1, 1] * 0.04))
        values, _ = activity(pair_gaussian_model, [0, 1], J_PAIR, backend=DerivativeBackend.IBP)
        assert values[0] == pytest.approx(expected, abs=1e-6)

    def test_partition_sum_identity(self, pair_gaussian_model):
        table = build_polymer_tables(pair_gaussian_model, J_PAIR, 2)[0]
        total = partition_sum(table.entries, [0, 1])
        assert total == pytest.approx(np.exp(gaussian_logZ(pair_gaussian_model, J_PAIR)), rel=1e-6)


class TestQuarticActivities:
    def test_backends_agree(self, pair_quartic_model):
        fd, _ = activity(pair_quartic_model, [0, 1], J_PAIR)
        # the evaluator cross-checks against fd and raises on disagreement
        ibp, _ = ActivityEvaluator(pair_quartic_model, DerivativeBackend.IBP).activity([0, 1], J_PAIR)
        assert ibp[0, 0] == pytest.approx(fd[0], abs=1e-6)

    def test_unknown_backend(self, pair_quartic_model):
        with pytest.raises(InputError):
            ActivityEvaluator(pair_quartic_model, "symbolic")

    def test_batch_matches_single_sources(self, pair_quartic_model):
        batch = np.stack([J_PAIR, -J_PAIR, np.zeros_like(J_PAIR)])
        tables = build_polymer_tables(pair_quartic_model, batch, 2)
        assert len(tables) == 3
        single = build_polymer_tables(pair_quartic_model, -J_PAIR, 2)[0]
        for X, value in single.entries.items():
            assert tables[1].entries[X] == pytest.approx(value, rel=1e-10, abs=1e-14)
        assert set(tables[0].residuals) == set(tables[0].entries)


FINE_QUADRATURE = QuadratureSection(radial_order=16, panels=2, s_order=6, s_max_order=12)


class TestLargeFieldActivities:
    def test_patterns_add_up_to_the_full_activity(self):
        model = make_model(2, v2=0.05, R=5.0, r=2.0, quadrature=FINE_QUADRATURE)
        for sites in ([0], [0, 1]):
            small, large, _ = large_field_activities(model, sites, J_PAIR)
            full, _ = activity(model, sites, J_PAIR)
            assert len(large) == 2 ** len(sites) - 1
            assert small[0] + sum(v[0] for v in large.values()) == pytest.approx(full[0], rel=1e-6, abs=1e-9)

    def test_small_field_is_the_dominant_part(self):
        model = make_model(2, v2=0.05, R=5.0, r=2.0)
        small, large, _ = large_field_activities(model, [0], J_PAIR)
        assert abs(small[0]) > 10 * abs(large[frozenset({0})][0])

    def test_tables_keyed_by_polymer_and_label(self):
        model = make_model(2, v2=0.05, R=5.0, r=2.0)
        table = build_large_field_tables(model, J_PAIR, 2)[0]
        assert set(table.small_field) == {frozenset({0}), frozenset({1}), frozenset({0, 1})}
        assert (frozenset({0, 1}), frozenset({1})) in table.large_field
        assert len(table.large_field) == 1 + 1 + 3
        assert table.r == 2.0 and table.R == 5.0

    def test_needs_small_field_radius(self, pair_quartic_model):
        with pytest.raises(InputError):
            build_large_field_tables(pair_quartic_model, J_PAIR, 2)

    def test_split_panels_follow_the_unsplit_width(self):
        model = make_model(2, v2=0.05, R=5.0, r=2.0)
        whole = PolymerIntegrand(model, [0])
        split = PolymerIntegrand(model, [0], split_radius=2.0)
        # 4 panels of width 2.5 unsplit; ball [-2, 2] and each side of the annulus get 2
        assert whole.nodes == 4 * 8
        assert split.nodes == (2 + 2 * 2) * 8


class TestQuadratureResiduals:
    def test_coarse_rule_is_a_numeric_error(self):
        coarse = QuadratureSection(radial_order=2, panels=1, s_order=6, s_max_order=12)
        model = make_model(2, quadrature=coarse)
        with pytest.raises(NumericError) as e:
            activity(model, [0], J_PAIR)
        assert e.value.payload["sites"] == [0]
        assert e.value.payload["residual"] > e.value.payload["allowed"]

    def test_refining_one_site_doubles_its_nodes(self, pair_quartic_model):
        base = PolymerIntegrand(pair_quartic_model, [0, 1])
        refined = PolymerIntegrand(pair_quartic_model, [0, 1], refine_site=1)
        assert refined.nodes == 2 * base.nodes

    def test_rule_residual_is_part_of_the_activity_residual(self, pair_quartic_model):
        evaluator = ActivityEvaluator(pair_quartic_model)
        J_batch = as_source_batch(J_PAIR, pair_quartic_model)
        rule = evaluator.rule_residual([0, 1], J_batch)
        _, residual = evaluator.activity([0, 1], J_PAIR)
        assert rule < 1e-6
        assert residual >= rule

    def test_tables_record_the_residuals(self, pair_quartic_model):
        table = build_polymer_tables(pair_quartic_model, J_PAIR, 2)[0]
        assert table.residuals[frozenset({0})] < 1e-6
        assert table.max_residual() < 1e-6

    def test_tail_estimate_for_an_unbounded_box(self, pair_gaussian_model):
        # box of 5 sigmas, N = 1: two-sided normal tail per site
        assert box_tail_estimate(pair_gaussian_model) == pytest.approx(2 * 2 * norm.sf(5.0), rel=1e-6)

    def test_no_tail_estimate_with_a_boundary(self, pair_quartic_model):
        assert box_tail_estimate(pair_quartic_model) is None


class TestSingleSiteClosedForms:
    """One site, N = 1, C = 1, V = 0, J = 0: Gaussian masses of intervals."""

    def test_polymer_Z_on_the_ball(self):
        model = make_model(1, R=2.0)
        point = InterpolationPoint.constant([0], 1.0)
        Z = polymer_Z(model, [0], point, model.zero_source())
        assert Z[0] == pytest.approx(erf(2.0 / np.sqrt(2.0)), rel=1e-9)

    def test_small_and_large_field_parts(self):
        model = make_model(1, R=2.0, r=1.0)
        small, large, residual = large_field_activities(model, [0], model.zero_source())
        assert small[0] == pytest.approx(erf(1.0 / np.sqrt(2.0)), rel=1e-9)
        assert large[frozenset({0})][0] == pytest.approx(erf(2.0 / np.sqrt(2.0)) - erf(1.0 / np.sqrt(2.0)), rel=1e-9)
        assert residual < 1e-9

    def test_unit_variance(self):
        model = make_model(1, R=2.0)
        assert model.covariance.matrix.real[0, 0] == pytest.approx(1.0)
