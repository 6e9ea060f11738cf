"""
Test Finite Differences
Central mixed partials, Richardson extrapolation and step halving
"""

import numpy as np
import pytest

from clusterexp.errors import NumericError
from clusterexp.utils.finite_difference import central_stencil, combine_stencil, mixed_partial, stencil_points


def exp_mix(points):
    return np.exp(points[:, 0] + 2.0 * points[:, 1])


def test_first_derivative():
    value, error = mixed_partial(exp_mix, np.zeros(2), [1], 0.05)
    assert value == pytest.approx(2.0, abs=1e-6)
    assert 0 < error < 2e-3


def test_mixed_second_derivative():
    value, _ = mixed_partial(exp_mix, np.zeros(2), [0, 1], 0.05)
    assert value == pytest.approx(2.0, abs=1e-5)


def test_repeated_axis():
    value, _ = mixed_partial(exp_mix, np.zeros(2), [0, 0], 0.05)
    assert value == pytest.approx(1.0, abs=1e-5)


def test_no_axes_returns_value():
    value, error = mixed_partial(exp_mix, np.array([0.5, 0.0]), [], 0.05)
    assert value == pytest.approx(np.exp(0.5))
    assert error == 0.0


def test_without_richardson_error_is_nan():
    value, error = mixed_partial(exp_mix, np.zeros(2), [0], 0.01, richardson=False)
    assert value == pytest.approx(1.0, abs=1e-4)
    assert np.isnan(error)


def test_richardson_beats_plain_step():
    plain, _ = mixed_partial(exp_mix, np.zeros(2), [0, 1], 0.1, richardson=False)
    extrapolated, _ = mixed_partial(exp_mix, np.zeros(2), [0, 1], 0.1)
    assert abs(extrapolated - 2.0) < abs(plain - 2.0)


def test_step_halved_until_valid():
    x0 = np.array([0.01, 0.0])
    value, _ = mixed_partial(exp_mix, x0, [0], 0.05, valid=lambda points: bool(np.all(points[:, 0] >= 0)))
    assert value == pytest.approx(np.exp(0.01), abs=1e-6)


def test_no_valid_step():
    with pytest.raises(NumericError, match="admissible"):
        mixed_partial(exp_mix, np.zeros(2), [0], 0.05, valid=lambda points: False)


def test_non_finite_values_carry_step():
    with pytest.raises(NumericError) as excinfo:
        mixed_partial(lambda p: np.full(len(p), np.nan), np.zeros(1), [0], 0.05)
    assert excinfo.value.payload["step"] == 0.05


def test_stencil_layout():
    offsets, weights = central_stencil([0, 1], 3, 0.1)
    assert offsets.shape == (4, 3)
    assert np.all(offsets[:, 2] == 0)
    assert weights.sum() == pytest.approx(0.0)
    points, levels = stencil_points(np.zeros(3), [0, 1], 0.1)
    assert len(points) == 8
    assert [len(level) for level in levels] == [4, 4]


def test_vector_valued_function():
    def f(points):
        return np.stack([np.exp(points[:, 0]), np.sin(points[:, 0])], axis=1)

    points, levels = stencil_points(np.zeros(1), [0], 0.05)
    value, error = combine_stencil(f(points), levels)
    assert value == pytest.approx([1.0, 1.0], abs=1e-6)
    assert error.shape == (2,)
