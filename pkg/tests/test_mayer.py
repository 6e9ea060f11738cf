"""
Tests for the Mayer assembly on hand-made activity tables
"""

import itertools
import math

import numpy as np
import pytest

from clusterexp.errors import InputError, NormalizationError, ResourceError
from clusterexp.models.expansion import LargeFieldTables
from clusterexp.services.mayer import (
    PolymerGas,
    explicit_ursell_orders,
    large_field_series,
    log_series,
    mayer_series,
    mobius_transform,
    normalized_activities,
    partition_sum,
    ursell_gap,
    zeta_transform,
)


def P(*sites):
    return frozenset(sites)


@pytest.fixture
def pair_table():
    return {P(0): 2.0, P(1): 3.0, P(0, 1): 0.6}


@pytest.fixture
def triangle_table():
    return {
        P(0): 1.0, P(1): 0.9, P(2): 1.1,
        P(0, 1): 0.02, P(0, 2): 0.015, P(1, 2): -0.01,
        P(0, 1, 2): 0.01,
    }


class TestSubsetTransforms:
    def test_zeta(self):
        assert zeta_transform(np.array([1.0, 2.0, 3.0, 4.0]), 2) == pytest.approx([1, 3, 4, 10])

    def test_mobius_inverts_zeta(self, rng):
        values = rng.normal(size=8) + 1j * rng.normal(size=8)
        assert mobius_transform(zeta_transform(values, 3), 3) == pytest.approx(values)

    def test_transform_along_an_axis(self, rng):
        values = rng.normal(size=(3, 4))
        out = zeta_transform(values, 2, axis=1)
        for row in range(3):
            assert out[row] == pytest.approx(zeta_transform(values[row], 2))

    def test_log_series(self):
        q = log_series(np.array([1.0, 1.0]), 4)
        assert q == pytest.approx([0, 1, -1 / 2, 1 / 3, -1 / 4])

    def test_log_series_of_a_square(self):
        # log (1 + t)^2
        q = log_series(np.array([1.0, 2.0, 1.0]), 3)
        assert q == pytest.approx([0, 2, -1, 2 / 3])


class TestNormalization:
    def test_normalized_pair(self, pair_table):
        singles, normalized = normalized_activities(pair_table)
        assert singles == {0: 2.0, 1: 3.0}
        assert normalized[P(0, 1)] == pytest.approx(0.1)

    def test_vanishing_single_site(self):
        with pytest.raises(NormalizationError):
            normalized_activities({P(0): 0.0, P(1): 1.0, P(0, 1): 0.1})

    def test_missing_single_site(self):
        with pytest.raises(NormalizationError):
            normalized_activities({P(0): 1.0, P(0, 1): 0.1})


class TestPolymerGas:
    def test_no_two_disjoint_pairs_on_three_sites(self):
        gas = PolymerGas([0, 1, 2], {P(0, 1): 0.1, P(1, 2): 0.2, P(0, 2): 0.3}, 2)
        assert gas.polynomial(0b111) == pytest.approx([1, 0.6, 0])
        assert gas.polynomial(0b011) == pytest.approx([1, 0.1, 0])

    def test_disjoint_pairs_on_four_sites(self):
        gas = PolymerGas([0, 1, 2, 3], {P(0, 1): 0.1, P(2, 3): 0.2}, 2)
        assert gas.polynomial(0b1111) == pytest.approx([1, 0.3, 0.02])

    def test_polymer_outside_ground_set(self):
        with pytest.raises(InputError):
            PolymerGas([0, 1], {P(0, 2): 0.1}, 2)


class TestMayerSeries:
    def test_two_sites(self, pair_table):
        series = mayer_series(pair_table, 4)
        assert series.logZ == pytest.approx(math.log(6.6))
        assert series.W[P(0, 1)] == pytest.approx(math.log(1.1))
        expected = [(-1) ** (k + 1) * 0.1 ** k / k for k in range(1, 5)]
        assert series.order_terms == pytest.approx(expected)
        assert series.single_logs[1] == pytest.approx(math.log(3.0))

    def test_partial_sums_close_in_on_the_resummed_value(self, pair_table):
        series = mayer_series(pair_table, 4)
        errors = [abs(p - series.logZ) for p in series.partial_sums()]
        for k in (1, 2, 3):
            assert errors[k] <= errors[k - 1] / 2
        assert series.resummation_gap == pytest.approx(errors[-1])
        assert not series.branch_crossing

    def test_resummed_log_matches_partition_sum(self, triangle_table):
        series = mayer_series(triangle_table, 3)
        assert series.logZ == pytest.approx(np.log(partition_sum(triangle_table, [0, 1, 2])), rel=1e-12)

    def test_W_sums_to_the_gas_log(self, triangle_table):
        series = mayer_series(triangle_table, 3)
        assert sum(series.W.values()) == pytest.approx(series.log_gas, rel=1e-12)
        assert set(series.W) == {P(0, 1), P(0, 2), P(1, 2), P(0, 1, 2)}

    def test_W_orders_add_up_to_order_terms(self, triangle_table):
        series = mayer_series(triangle_table, 4)
        total = sum(series.W_orders.values())
        assert total == pytest.approx(series.order_terms)

    def test_orders_match_ursell_sums(self, triangle_table):
        series = mayer_series(triangle_table, 4)
        _, normalized = normalized_activities(triangle_table)
        explicit = explicit_ursell_orders(normalized, 4)
        assert explicit == pytest.approx(list(series.order_terms), abs=1e-14)
        assert ursell_gap(series, normalized, 4) < 1e-14

    def test_single_sites_only(self):
        series = mayer_series({P(0): 2.0, P(1): 0.5}, 2)
        assert series.logZ == pytest.approx(0.0, abs=1e-15)
        assert all(abs(w) < 1e-15 for w in series.W.values())

    def test_order_must_be_positive(self, pair_table):
        with pytest.raises(InputError):
            mayer_series(pair_table, 0)

    def test_ursell_cap(self, pair_table):
        _, normalized = normalized_activities(pair_table)
        with pytest.raises(ResourceError):
            explicit_ursell_orders(normalized, 7, cap=6)


class TestPartitionSum:
    def test_pair(self, pair_table):
        assert partition_sum(pair_table, [0, 1]) == pytest.approx(6.6)

    def test_three_sites(self, triangle_table):
        t = triangle_table
        expected = (
            t[P(0)] * t[P(1)] * t[P(2)]
            + t[P(0, 1)] * t[P(2)]
            + t[P(0, 2)] * t[P(1)]
            + t[P(1, 2)] * t[P(0)]
            + t[P(0, 1, 2)]
        )
        assert partition_sum(t, [0, 1, 2]) == pytest.approx(expected)


def large_field_tables(small_field, sites):
    large = {}
    for size in range(1, len(sites) + 1):
        for X in itertools.combinations(sites, size):
            for q_size in range(1, size + 1):
                for Q in itertools.combinations(X, q_size):
                    large[(P(*X), P(*Q))] = 0.01 / (size + q_size)
    return LargeFieldTables(J=np.zeros((len(sites), 1)), small_field=small_field, large_field=large)


def full_activities(tables):
    full = dict(tables.small_field)
    for (X, _), b in tables.large_field.items():
        full[X] = full.get(X, 0.0) + b
    return full


class TestLargeFieldSeries:
    def test_matches_plain_assembly_of_the_full_activities(self, triangle_table):
        tables = large_field_tables(triangle_table, [0, 1, 2])
        series = large_field_series(tables, 4)
        direct = partition_sum(full_activities(tables), [0, 1, 2])
        assert series.identity_gap < 1e-12
        assert series.logZ == pytest.approx(np.log(direct), rel=1e-10)

    def test_small_field_part(self, triangle_table):
        tables = large_field_tables(triangle_table, [0, 1, 2])
        series = large_field_series(tables, 4)
        assert series.logZ_small_field == pytest.approx(np.log(partition_sum(triangle_table, [0, 1, 2])), rel=1e-12)
        assert series.V[P(0)] == pytest.approx(0.0, abs=1e-15)
        assert series.V[P(1)] == pytest.approx(math.log(0.9))

    def test_partial_sums(self, triangle_table):
        tables = large_field_tables(triangle_table, [0, 1, 2])
        series = large_field_series(tables, 4)
        partials = series.partial_sums()
        assert len(partials) == 4
        assert abs(partials[-1] - series.logZ) < 1e-5

    def test_union_marked_logs_sum_to_the_gas_log(self, triangle_table):
        tables = large_field_tables(triangle_table, [0, 1, 2])
        series = large_field_series(tables, 4)
        assert sum(series.L.values()) == pytest.approx(series.log_gas, rel=1e-10)
        assert all(X for (_, X, _) in series.L)

    def test_site_cap(self):
        sites = list(range(5))
        tables = LargeFieldTables(J=np.zeros((5, 1)), small_field={P(x): 1.0 for x in sites})
        with pytest.raises(ResourceError):
            large_field_series(tables, 2)
