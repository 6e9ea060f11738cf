"""
Tests for the cluster engine: log Z(J) and truncated correlations
"""

import numpy as np
import pytest

from clusterexp.errors import InputError, ResourceError
from clusterexp.models.expansion import ExpansionMode, LargeFieldTables, PolymerTable, Truncation
from clusterexp.services.cluster_engine import (
    ClusterEngine,
    expand,
    mayer_logZ,
    mayer_logZ_large_field,
    truncated_correlation,
)
from clusterexp.services.oracle import brute_force_logZ, oracle_correlations
from tests.conftest import make_model

J_PAIR = np.array([[0.3], [-0.2]])
PAIR_ACTIVITIES = {frozenset({0}): 2.0, frozenset({1}): 3.0, frozenset({0, 1}): 0.6}


def gaussian_logZ(model, J):
    flat = np.asarray(J, dtype=float).ravel()
    return 0.5 * flat @ model.covariance.matrix.real @ flat


class TestGaussianPair:
    def test_logZ_at_a_source(self, pair_gaussian_model):
        result = ClusterEngine(pair_gaussian_model, 2, 4).expand(J_PAIR)[0]
        assert result.mode == ExpansionMode.PLAIN
        assert result.logZ == pytest.approx(gaussian_logZ(pair_gaussian_model, J_PAIR), abs=1e-6)
        assert len(result.logZ_partial) == 4
        assert set(result.W) == {"0,1"}

    def test_logZ_without_source(self, pair_gaussian_model):
        result = ClusterEngine(pair_gaussian_model, 2, 2).expand()[0]
        assert abs(result.logZ) < 1e-6

    def test_tail_estimate_only_for_an_unbounded_box(self, pair_gaussian_model, pair_quartic_model):
        unbounded = ClusterEngine(pair_gaussian_model, 2, 2).expand()[0]
        assert 0 < unbounded.diagnostics.tail_estimate < 1e-5
        bounded = ClusterEngine(pair_quartic_model, 2, 2).expand()[0]
        assert bounded.diagnostics.tail_estimate is None

    def test_diagnostics(self, pair_gaussian_model):
        result = ClusterEngine(pair_gaussian_model, 2, 4).expand(J_PAIR)[0]
        diagnostics = result.diagnostics
        assert diagnostics.identity_gap < 1e-6
        assert diagnostics.ursell_check < 1e-10
        assert len(diagnostics.last_term_magnitudes) == 4
        assert not diagnostics.branch_crossing

    def test_identity_gap_needs_the_full_polymer(self, pair_gaussian_model):
        result = ClusterEngine(pair_gaussian_model, 1, 2).expand(J_PAIR)[0]
        assert result.diagnostics.identity_gap is None

    def test_batch_of_sources(self, pair_gaussian_model):
        batch = np.stack([J_PAIR, 2 * J_PAIR])
        values = ClusterEngine(pair_gaussian_model, 2, 3).logZ(batch)
        expected = [gaussian_logZ(pair_gaussian_model, J) for J in batch]
        assert values.real == pytest.approx(expected, abs=1e-6)

    def test_two_point(self, pair_gaussian_model):
        C = pair_gaussian_model.covariance.matrix.real
        engine = ClusterEngine(pair_gaussian_model, 2, 4)
        off, diag = engine.correlations([[(0, 0), (1, 0)], [(0, 0), (0, 0)]])
        assert off.value == pytest.approx(C[0, 1], abs=1e-5)
        assert diag.value == pytest.approx(C[0, 0], abs=1e-5)
        assert off.step == 0.05
        assert not off.noise_dominated

    def test_odd_correlations_vanish(self, pair_gaussian_model):
        engine = ClusterEngine(pair_gaussian_model, 2, 4)
        one, three = engine.correlations([[(1, 0)], [(0, 0), (0, 0), (1, 0)]])
        assert abs(one.value) < 1e-6
        assert abs(three.value) < 1e-4

    def test_profile(self, pair_gaussian_model):
        C = pair_gaussian_model.covariance.matrix.real
        profile = ClusterEngine(pair_gaussian_model, 2, 4).two_point_profile(0)
        assert sorted(profile) == [0.0, 1.0]
        assert profile[1.0].value == pytest.approx(C[0, 1], abs=1e-5)

    def test_module_level_helpers(self, pair_gaussian_model):
        truncation = Truncation(max_polymer_size=2, max_mayer_order=3, quadrature_budget=10_000)
        result = expand(pair_gaussian_model, J_PAIR, truncation)
        assert result.truncation.max_mayer_order == 3
        assert result.logZ == pytest.approx(gaussian_logZ(pair_gaussian_model, J_PAIR), abs=1e-6)
        corr = truncated_correlation(pair_gaussian_model, [(0, 0), (1, 0)], truncation)
        assert corr.value == pytest.approx(pair_gaussian_model.covariance.matrix.real[0, 1], abs=1e-5)


class TestQuarticPair:
    def test_matches_brute_force(self, pair_quartic_model):
        engine = ClusterEngine(pair_quartic_model, 2, 4).expand(J_PAIR)[0]
        reference = brute_force_logZ(pair_quartic_model, J_PAIR)
        assert engine.logZ == pytest.approx(reference.logZ, abs=1e-6)

    def test_correlation_matches_brute_force(self, pair_quartic_model):
        requests = [[(0, 0), (1, 0)], [(0, 0), (0, 0)]]
        mine = ClusterEngine(pair_quartic_model, 2, 4).correlations(requests)
        theirs = oracle_correlations(pair_quartic_model, requests)
        for a, b in zip(mine, theirs):
            assert a.value == pytest.approx(b.value, abs=1e-5)

    def test_interaction_lowers_the_variance(self, pair_quartic_model):
        diag = ClusterEngine(pair_quartic_model, 2, 4).correlation([(0, 0), (0, 0)])
        assert 0 < diag.value.real < pair_quartic_model.covariance.matrix.real[0, 0]


class TestLargeFieldPair:
    def test_agrees_with_plain_mode(self):
        model = make_model(2, v2=0.05, R=5.0, r=2.0)
        plain = ClusterEngine(model, 2, 4).expand(J_PAIR)[0]
        large = ClusterEngine(model, 2, 4, mode=ExpansionMode.LARGE_FIELD).expand(J_PAIR)[0]
        assert large.mode == ExpansionMode.LARGE_FIELD
        assert large.logZ == pytest.approx(plain.logZ, abs=1e-5)
        assert large.diagnostics.identity_gap < 1e-8
        assert 1e-4 < large.diagnostics.small_field_gap < 0.1
        assert "0" in large.V and "0,1" in large.V

    def test_small_field_gap_shrinks_with_radius(self):
        gaps = []
        for r in (1.0, 2.0, 3.0):
            model = make_model(2, v2=0.05, R=5.0, r=r)
            result = ClusterEngine(model, 2, 2, mode=ExpansionMode.LARGE_FIELD).expand()[0]
            gaps.append(result.diagnostics.small_field_gap)
        assert gaps[0] > gaps[1] > gaps[2]

    def test_correlation_agrees_with_plain_mode(self):
        model = make_model(2, v2=0.05, R=5.0, r=2.0)
        plain = ClusterEngine(model, 2, 4).correlation([(0, 0), (1, 0)])
        large = ClusterEngine(model, 2, 4, mode=ExpansionMode.LARGE_FIELD).correlation([(0, 0), (1, 0)])
        assert large.value == pytest.approx(plain.value, abs=1e-5)

    def test_site_cap(self):
        model = make_model(5, v2=0.05, R=5.0, r=2.0)
        with pytest.raises(ResourceError):
            ClusterEngine(model, 1, 2, mode=ExpansionMode.LARGE_FIELD).expand()


class TestTableEntryPoints:
    def test_plain_series_from_a_table(self):
        table = PolymerTable(J=np.zeros((2, 1)), entries=PAIR_ACTIVITIES)
        result = mayer_logZ(table, 4)
        assert result.logZ == pytest.approx(np.log(6.6))
        assert result.W["0,1"] == pytest.approx(np.log(1.1))
        assert result.logZ_partial[0] == pytest.approx(np.log(6.0) + 0.1)
        assert result.truncation.max_polymer_size == 2
        assert result.diagnostics.ursell_check < 1e-12

    def test_large_field_series_from_tables(self):
        tables = LargeFieldTables(
            J=np.zeros((2, 1)),
            small_field=PAIR_ACTIVITIES,
            large_field={(frozenset({0}), frozenset({0})): 0.5},
            r=2.0,
            R=5.0,
        )
        result = mayer_logZ_large_field(tables, 4)
        assert result.mode == ExpansionMode.LARGE_FIELD
        assert result.logZ == pytest.approx(np.log(8.1))
        assert result.logZ_small_field == pytest.approx(np.log(6.6))
        assert result.diagnostics.small_field_gap == pytest.approx(np.log(8.1 / 6.6))
        assert result.diagnostics.identity_gap < 1e-12

    def test_large_field_pieces_on_every_site(self):
        tables = LargeFieldTables(
            J=np.zeros((2, 1)),
            small_field={frozenset({0}): 0.9, frozenset({1}): 0.9, frozenset({0, 1}): 0.01},
            large_field={
                (frozenset({0}), frozenset({0})): 0.05,
                (frozenset({1}), frozenset({1})): 0.05,
            },
            r=2.0,
            R=5.0,
        )
        result = mayer_logZ_large_field(tables, 3)
        # full single-site activities 0.95, pair unchanged
        assert result.logZ == pytest.approx(np.log(0.9125))
        assert result.logZ_small_field == pytest.approx(np.log(0.82))
        assert result.L
        assert sum(result.L.values()) == pytest.approx(np.log(0.9125 / 0.82))
        assert result.diagnostics.identity_gap < 1e-12


class TestValidation:
    def test_unknown_mode(self, pair_gaussian_model):
        with pytest.raises(InputError):
            ClusterEngine(pair_gaussian_model, mode="resummed")

    def test_caps(self, pair_gaussian_model):
        with pytest.raises(InputError):
            ClusterEngine(pair_gaussian_model, 0, 2)
        with pytest.raises(InputError):
            ClusterEngine(pair_gaussian_model, 2, 0)

    def test_large_field_needs_radius(self, pair_quartic_model):
        with pytest.raises(InputError):
            ClusterEngine(pair_quartic_model, mode=ExpansionMode.LARGE_FIELD)

    def test_correlation_order(self, pair_gaussian_model):
        engine = ClusterEngine(pair_gaussian_model, 2, 2)
        with pytest.raises(InputError):
            engine.correlation([(0, 0)] * 5)
        with pytest.raises(InputError):
            engine.correlation([])

    def test_unknown_site(self, pair_gaussian_model):
        with pytest.raises(InputError):
            ClusterEngine(pair_gaussian_model, 2, 2).correlation([(0, 0), (7, 0)])

    def test_no_requests(self, pair_gaussian_model):
        assert ClusterEngine(pair_gaussian_model, 2, 2).correlations([]) == []


@pytest.mark.slow
class TestRingOfThree:
    def test_gaussian_logZ(self, gaussian_model, rng):
        J = rng.normal(scale=0.3, size=(3, 1))
        result = ClusterEngine(gaussian_model, 3, 4).expand(J)[0]
        assert result.logZ == pytest.approx(gaussian_logZ(gaussian_model, J), abs=1e-6)

    def test_gaussian_correlations(self, gaussian_model):
        C = gaussian_model.covariance.matrix.real
        results = ClusterEngine(gaussian_model, 3, 4).correlations(
            [[(0, 0), (1, 0)], [(0, 0), (1, 0), (2, 0)], [(0, 0), (0, 0), (1, 0), (1, 0)]]
        )
        assert results[0].value == pytest.approx(C[0, 1], abs=1e-5)
        assert abs(results[1].value) < 1e-4
        assert abs(results[2].value) < 1e-3

    def test_quartic_against_brute_force(self, quartic_model):
        result = ClusterEngine(quartic_model, 3, 4).expand()[0]
        reference = brute_force_logZ(quartic_model)
        assert abs(result.logZ - reference.logZ) <= 1e-3
        errors = [abs(p - reference.logZ) for p in result.logZ_partial]
        floor = 10 * reference.residual + 1e-9
        for k in (2, 3):
            assert errors[k] <= max(errors[k - 1] / 2, floor)

    def test_modes_agree(self, large_field_model):
        plain = ClusterEngine(large_field_model, 3, 4).expand()[0]
        large = ClusterEngine(large_field_model, 3, 4, mode=ExpansionMode.LARGE_FIELD).expand()[0]
        assert abs(plain.logZ - large.logZ) <= 2e-3

    def test_small_field_gap_shrinks_with_radius(self):
        gaps = []
        for r in (1.0, 2.0, 3.0):
            model = make_model(3, v2=0.05, R=5.0, r=r)
            result = ClusterEngine(model, 3, 4, mode=ExpansionMode.LARGE_FIELD).expand()[0]
            gaps.append(result.diagnostics.small_field_gap)
        assert gaps[0] > gaps[1] > gaps[2]
