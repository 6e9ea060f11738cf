"""
Tests for the brute-force oracle and decay fits
"""

import numpy as np
import pytest
from scipy import integrate

from clusterexp.errors import InputError, NumericError, ResourceError
from clusterexp.models.oracle import OracleScheme
from clusterexp.models.run_config import QuadratureSection
from clusterexp.services.cluster_engine import ClusterEngine
from clusterexp.services.oracle import (
    brute_force_batch,
    brute_force_logZ,
    decay_fit,
    gaussian_two_point_profile,
    oracle_correlations,
    resolve_scheme,
)
from tests.conftest import make_model

J_PAIR = np.array([[0.3], [-0.2]])


class TestSchemes:
    def test_auto_picks_cubature_for_small_lattices(self, pair_gaussian_model):
        assert resolve_scheme(pair_gaussian_model) == OracleScheme.CUBATURE

    def test_auto_falls_back_to_sampling(self):
        assert resolve_scheme(make_model(10)) == OracleScheme.QMC

    def test_forced_cubature_over_cap(self):
        with pytest.raises(ResourceError):
            resolve_scheme(make_model(10), OracleScheme.CUBATURE)

    def test_unknown_scheme(self, pair_gaussian_model):
        with pytest.raises(InputError):
            resolve_scheme(pair_gaussian_model, "monte-carlo")


class TestGaussianOracle:
    def test_cubature(self, pair_gaussian_model):
        C = pair_gaussian_model.covariance.matrix.real
        result = brute_force_logZ(pair_gaussian_model, J_PAIR)
        assert result.method == OracleScheme.CUBATURE
        assert result.dimension == 2
        assert result.nodes == 32 * 32
        assert result.logZ == pytest.approx(0.5 * J_PAIR.ravel() @ C @ J_PAIR.ravel(), abs=1e-6)

    def test_zero_source_by_default(self, gaussian_model):
        assert abs(brute_force_logZ(gaussian_model).logZ) < 1e-6

    def test_batch(self, pair_gaussian_model):
        results = brute_force_batch(pair_gaussian_model, np.stack([J_PAIR, -J_PAIR]))
        assert len(results) == 2
        assert results[0].logZ == pytest.approx(results[1].logZ, abs=1e-10)

    def test_sampling(self, pair_gaussian_model):
        C = pair_gaussian_model.covariance.matrix.real
        result = brute_force_logZ(pair_gaussian_model, J_PAIR, OracleScheme.QMC, qmc_log2_points=14, seed=7)
        assert result.method == OracleScheme.QMC
        assert result.nodes == 2 * 2 ** 14
        assert result.logZ.real == pytest.approx(0.5 * J_PAIR.ravel() @ C @ J_PAIR.ravel(), abs=1e-2)
        assert result.residual < 1e-2

    def test_correlations(self, pair_gaussian_model):
        C = pair_gaussian_model.covariance.matrix.real
        off, diag = oracle_correlations(pair_gaussian_model, [[(0, 0), (1, 0)], [(1, 0), (1, 0)]])
        assert off.value == pytest.approx(C[0, 1], abs=1e-5)
        assert diag.value == pytest.approx(C[1, 1], abs=1e-5)

    def test_empty_correlation_request(self, pair_gaussian_model):
        assert oracle_correlations(pair_gaussian_model, []) == []
        with pytest.raises(InputError):
            oracle_correlations(pair_gaussian_model, [[]])


ONE_SITE_QUADRATURE = QuadratureSection(radial_order=16, panels=4, s_order=6, s_max_order=12)


def one_site_quartic_logZ(box: float) -> float:
    """log of int_{-box}^{box} e^{-t^2/2 - t^4/10} dt / sqrt(2 pi) by adaptive quadrature"""
    value, _ = integrate.quad(
        lambda t: np.exp(-0.5 * t * t - 0.1 * t ** 4) / np.sqrt(2.0 * np.pi), -box, box, epsabs=1e-14, epsrel=1e-12
    )
    return float(np.log(value))


class TestSingleSiteQuartic:
    """One site, N = 1, C = 1, V = -0.1 phi^4, R = infinity"""

    def test_cubature_matches_adaptive_quadrature(self):
        model = make_model(1, v2=0.1, quadrature=ONE_SITE_QUADRATURE)
        result = brute_force_logZ(model)
        assert result.method == OracleScheme.CUBATURE
        assert result.dimension == 1
        assert result.logZ == pytest.approx(one_site_quartic_logZ(model.box_half_width), abs=1e-9)

    def test_engine_matches_adaptive_quadrature(self):
        model = make_model(1, v2=0.1, quadrature=ONE_SITE_QUADRATURE)
        result = ClusterEngine(model, 1, 1).expand()[0]
        assert result.logZ == pytest.approx(one_site_quartic_logZ(model.box_half_width), abs=1e-9)
        assert result.diagnostics.tail_estimate < 1e-5


class TestDecay:
    def test_gaussian_profile(self, gaussian_model):
        profile = gaussian_two_point_profile(gaussian_model)
        assert profile == {0.0: pytest.approx(0.5), 1.0: pytest.approx(0.25)}

    def test_exact_exponential(self):
        fit = decay_fit({d: 2.0 * np.exp(-0.5 * d) for d in range(5)})
        assert fit.mass == pytest.approx(0.5)
        assert fit.intercept == pytest.approx(np.log(2.0))
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.points == 5
        assert fit.accepted

    def test_ring_of_six_gaussian_chain(self):
        profile = gaussian_two_point_profile(make_model(6))
        fit = decay_fit(profile)
        assert fit.points == 4
        assert fit.r_squared >= 0.95
        assert fit.accepted

    def test_noise_floor_drops_points(self):
        values = {0: 1.0, 1: 0.5, 2: 0.25, 3: 1e-14}
        assert decay_fit(values).points == 3

    def test_too_few_points(self):
        with pytest.raises(NumericError):
            decay_fit({0: 1.0, 1: 0.5})

    def test_flat_profile(self):
        fit = decay_fit({0: 0.3, 1: 0.3, 2: 0.3})
        assert fit.mass == 0.0
        assert fit.r_squared == 0.0
        assert not fit.accepted

    def test_growing_profile_is_rejected(self):
        fit = decay_fit({0: 0.1, 1: 0.2, 2: 0.4})
        assert fit.mass < 0
        assert not fit.accepted
