"""
Test Covariance
Validation, Hadamard interpolation, spectral envelopes and presets
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from clusterexp.errors import InputError, ModelError
from clusterexp.models.graphs import InterpolationPoint
from clusterexp.services.covariance import (
    build_laplacian_covariance,
    build_many_boson_covariance,
    check_matrix,
    complex_to_real_covariance,
    gaussian_box_bound_check,
    gaussian_normalizer,
    hadamard_interpolate,
    make_covariance,
    many_boson_inverse,
    random_normal_covariance,
    spectral_envelope_check,
    validate,
)
from clusterexp.services.graph_combinatorics import random_forest_point
from clusterexp.services.lattice_geometry import torus1d


class TestValidation:
    def test_laplacian_ring(self, laplacian_ring3):
        report = validate(laplacian_ring3)
        assert report.valid
        # -Delta + 1 on Z/3 has spectrum {1, 4, 4}
        assert report.mu == pytest.approx(1.0)
        assert report.a_min == pytest.approx(0.25)
        assert report.symmetry_defect == 0.0

    def test_rejects_asymmetric(self):
        with pytest.raises(ModelError, match="not symmetric"):
            check_matrix(np.array([[1.0, 0.2], [0.0, 1.0]]))

    def test_rejects_non_normal(self):
        # symmetric but not normal: C C^* != C^* C
        matrix = np.array([[1.0, 1j], [1j, -1.0]]) + 2.0 * np.eye(2)
        with pytest.raises(ModelError, match="not normal"):
            check_matrix(matrix)

    def test_rejects_wrong_half_plane(self):
        with pytest.raises(ModelError, match="not positive"):
            check_matrix(-np.eye(2))

    def test_shape_mismatch(self, ring3):
        with pytest.raises(InputError, match="3x3"):
            make_covariance(ring3, np.eye(2))

    def test_laplacian_needs_positive_mass(self, ring3):
        with pytest.raises(InputError):
            build_laplacian_covariance(ring3, 0.0)

    def test_random_normal_is_valid(self, rng):
        covariance = random_normal_covariance(torus1d(4), rng)
        report = validate(covariance)
        assert report.valid
        assert report.normality_defect < 1e-10
        assert not covariance.is_real


class TestInterpolation:
    def test_constant_one_is_identity(self, laplacian_ring3):
        point = InterpolationPoint.constant(range(3), 1.0)
        assert_allclose(hadamard_interpolate(laplacian_ring3, point).matrix, laplacian_ring3.matrix)

    def test_zero_point_decouples_sites(self, laplacian_ring3):
        point = InterpolationPoint.constant(range(3), 0.0)
        interpolated = hadamard_interpolate(laplacian_ring3, point).matrix
        assert_allclose(interpolated, np.diag(np.diag(laplacian_ring3.matrix)))

    def test_restricted_ground_set(self, laplacian_ring3):
        point = InterpolationPoint.constant([0, 2], 0.5)
        interpolated = hadamard_interpolate(laplacian_ring3, point).matrix
        assert interpolated.shape == (2, 2)
        assert interpolated[0, 1] == pytest.approx(0.5 * laplacian_ring3.matrix[0, 2])


class TestSpectralEnvelope:
    def test_forest_points_stay_inside(self, rng):
        covariance = random_normal_covariance(torus1d(4), rng)
        for _ in range(200):
            report = spectral_envelope_check(covariance, random_forest_point(range(4), rng))
            assert report.contained

    @pytest.mark.slow
    def test_thousand_forest_points(self, rng):
        covariance = random_normal_covariance(torus1d(4), rng)
        reports = [spectral_envelope_check(covariance, random_forest_point(range(4), rng)) for _ in range(1000)]
        assert all(r.contained for r in reports)
        assert min(min(r.margin, r.inverse_margin) for r in reports) >= -1e-10

    def test_bounds_reported(self, laplacian_ring3):
        report = spectral_envelope_check(laplacian_ring3, InterpolationPoint.constant(range(3), 1.0))
        assert report.inverse_bounds == pytest.approx([1.0, 4.0])
        assert report.bounds == pytest.approx([0.25, 1.0])


class TestNormalizer:
    def test_scalar(self):
        assert gaussian_normalizer(np.array([[2.0]])) == pytest.approx((4 * np.pi) ** -0.5)

    def test_empty_block(self):
        assert gaussian_normalizer(np.zeros((0, 0))) == 1.0

    def test_matches_determinant(self, laplacian_ring3):
        expected = np.linalg.det(2 * np.pi * laplacian_ring3.matrix.real) ** -0.5
        assert gaussian_normalizer(laplacian_ring3.matrix) == pytest.approx(expected)

    def test_rejects_left_half_plane(self):
        with pytest.raises(ModelError):
            gaussian_normalizer(np.array([[-1.0]]))


class TestManyBoson:
    def test_three_by_three_preset(self):
        space = torus1d(3)
        covariance = build_many_boson_covariance(space, 1.0, -0.5, 3.0)
        assert covariance.lattice.size == 9
        assert covariance.lattice.components == 2
        assert validate(covariance).valid
        spectrum = np.linalg.eigvals(many_boson_inverse(space, 1.0, -0.5, 3.0))
        assert spectrum.real.min() >= 1.0 - math.exp(-0.5) - 1e-8

    def test_beta_must_be_multiple_of_theta(self):
        with pytest.raises(InputError, match="multiple"):
            many_boson_inverse(torus1d(3), 1.0, -0.5, 2.5)

    def test_chemical_potential_must_be_negative(self):
        with pytest.raises(InputError, match="negative"):
            many_boson_inverse(torus1d(3), 1.0, 0.1, 3.0)

    def test_real_field_form_spectrum(self, rng):
        c = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        real_field = complex_to_real_covariance(c)
        expected = np.concatenate([np.linalg.eigvals(c), np.linalg.eigvals(c.T)])
        got = np.linalg.eigvals(real_field)
        assert_allclose(np.sort_complex(got), np.sort_complex(expected), atol=1e-10)


def test_gaussian_box_integral_shrinks_with_radius(laplacian_ring3):
    point = InterpolationPoint.constant([0], 1.0)
    small = gaussian_box_bound_check(laplacian_ring3, point, [0], r=1.0, radial_order=8, panels=2)
    large = gaussian_box_bound_check(laplacian_ring3, point, [0], r=2.0, radial_order=8, panels=2)
    assert 0 < large.measured < small.measured
    assert large.bound == pytest.approx(np.exp(-laplacian_ring3.mu))
