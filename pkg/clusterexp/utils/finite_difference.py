"""
Finite Differences
Central mixed partial derivatives with one level of Richardson extrapolation.
The same stencil serves the engine's s-derivatives, the engine's
J-derivatives and the oracle's J-derivatives.
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from clusterexp.errors import NumericError

logger = logging.getLogger(__name__)

MAX_STEP_HALVINGS = 8


def central_stencil(axes: Sequence[int], dim: int, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Offsets and weights of the product central difference along `axes`.

    Repeated axes are allowed: the stencil is the operator product of the
    one-dimensional central differences, so an axis listed twice gives
    (f(x+2h) - 2f(x) + f(x-2h)) / (4h^2).

    Returns:
        (offsets (2^n, dim), weights (2^n,))
    """
    n = len(axes)
    signs = np.array(np.meshgrid(*([[1.0, -1.0]] * n), indexing="ij")).reshape(n, -1).T if n else np.zeros((1, 0))
    offsets = np.zeros((len(signs), dim))
    for column, axis in enumerate(axes):
        offsets[:, axis] += h * signs[:, column]
    weights = np.prod(signs, axis=1) / (2.0 * h) ** n
    return offsets, weights


def stencil_points(
    x0: np.ndarray, axes: Sequence[int], h: float, richardson: bool = True
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Evaluation points of the stencil at steps h (and h/2 with Richardson).

    Returns:
        (points, weights per step level); the points of each level follow
        each other in `points`
    """
    x0 = np.asarray(x0, dtype=float)
    offsets, weights = central_stencil(axes, x0.shape[0], h)
    levels = [weights]
    points = x0[None, :] + offsets
    if richardson:
        offsets2, weights2 = central_stencil(axes, x0.shape[0], h / 2.0)
        points = np.concatenate([points, x0[None, :] + offsets2])
        levels.append(weights2)
    return points, levels


def combine_stencil(values: np.ndarray, levels: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Derivative from stencil values: (4 D(h/2) - D(h)) / 3 with error
    |result - D(h/2)| under Richardson, plain D(h) (error NaN) otherwise.
    """
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise NumericError("Non-finite values in finite-difference stencil")
    n_points = len(levels[0])
    d_h = np.tensordot(levels[0], values[:n_points], axes=(0, 0))
    if len(levels) == 1:
        return d_h, np.full(np.shape(d_h), np.nan)
    d_h2 = np.tensordot(levels[1], values[n_points:], axes=(0, 0))
    extrapolated = (4.0 * d_h2 - d_h) / 3.0
    return extrapolated, np.abs(extrapolated - d_h2)


def mixed_partial(
    f: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    axes: Sequence[int],
    h: float,
    richardson: bool = True,
    valid: Optional[Callable[[np.ndarray], bool]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mixed partial derivative of a vectorized function.

    Args:
        f: Maps points (P, dim) to values (P,) or (P, k)
        x0: Expansion point (dim,)
        axes: Coordinate index per derivative (repeats allowed)
        h: Initial step
        richardson: Combine steps h and h/2 as (4 D(h/2) - D(h)) / 3
        valid: Optional predicate on the stencil points; the step is halved
            until it accepts them

    Returns:
        (value, error_estimate)
    """
    x0 = np.asarray(x0, dtype=float)
    if not axes:
        value = np.asarray(f(x0[None, :]))[0]
        return value, np.zeros_like(np.abs(value))

    step = h
    for _ in range(MAX_STEP_HALVINGS + 1):
        points, levels = stencil_points(x0, axes, step, richardson)
        if valid is None or valid(points):
            break
        logger.debug(f"finite-difference stencil rejected at step {step:.3e}, halving")
        step /= 2.0
    else:
        raise NumericError(
            "No admissible finite-difference step found",
            {"initial_step": h, "halvings": MAX_STEP_HALVINGS},
        )

    try:
        return combine_stencil(f(points), levels)
    except NumericError as e:
        e.payload["step"] = step
        raise
