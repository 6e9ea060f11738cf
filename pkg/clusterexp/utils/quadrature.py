"""
Quadrature Utilities
Gauss-Legendre rules, per-site ball/annulus/shell rules in hyperspherical
coordinates, tensor grids over sites and the Gauss-Legendre cube rule.
"""

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from clusterexp.errors import ResourceError


@dataclass(frozen=True, eq=False)
class SiteRule:
    """Quadrature rule for one site's field vector phi(x) in R^N"""
    nodes: np.ndarray    # (k, N)
    weights: np.ndarray  # (k,)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def components(self) -> int:
        return self.nodes.shape[1]


@dataclass(frozen=True, eq=False)
class ShellRule:
    """Rule on the sphere |phi| = radius; normals are the unit vectors omega"""
    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    radius: float


@dataclass(frozen=True)
class SiteRegion:
    """
    Integration region for one site: inner < |phi| <= outer.

    `outer_is_boundary` is False when `outer` only truncates an unbounded
    region (R = infinity); such a cut carries no surface term.
    """
    inner: float
    outer: float
    outer_is_boundary: bool = True

    @property
    def is_ball(self) -> bool:
        return self.inner <= 0.0


def gauss_legendre(a: float, b: float, order: int, panels: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre nodes and weights on [a, b].

    Args:
        a, b: Interval end points
        order: Nodes per panel
        panels: Number of equal panels

    Returns:
        (nodes, weights)
    """
    x, w = leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _sphere_directions(components: int, angular_order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit vectors and surface weights (d omega) on S^{N-1}, N >= 2."""
    m = max(angular_order, 4)
    # azimuth: periodic trapezoid
    phi = 2.0 * np.pi * np.arange(2 * m) / (2 * m)
    w_phi = np.full(2 * m, 2.0 * np.pi / (2 * m))
    polar_rules = []
    for k in range(1, components - 1):
        theta, w_theta = gauss_legendre(0.0, np.pi, m)
        polar_rules.append((theta, w_theta * np.sin(theta) ** (components - 1 - k)))

    directions = []
    weights = []
    for combo in itertools.product(*[range(len(t)) for t, _ in polar_rules], range(len(phi))):
        *polar_idx, az = combo
        vec = np.empty(components)
        weight = w_phi[az]
        sin_prod = 1.0
        for axis, idx in enumerate(polar_idx):
            theta, w_theta = polar_rules[axis]
            vec[axis] = sin_prod * np.cos(theta[idx])
            sin_prod *= np.sin(theta[idx])
            weight *= w_theta[idx]
        vec[components - 2] = sin_prod * np.cos(phi[az])
        vec[components - 1] = sin_prod * np.sin(phi[az])
        directions.append(vec)
        weights.append(weight)
    return np.array(directions), np.array(weights)


def _panel_count(width: float, panels: int, panel_width: Optional[float]) -> int:
    if panel_width is None:
        return panels
    return max(1, int(np.ceil(width / panel_width - 1e-9)))


def site_rule(
    components: int,
    region: SiteRegion,
    radial_order: int = 16,
    panels: int = 4,
    angular_order: int = 8,
    panel_width: Optional[float] = None,
) -> SiteRule:
    """
    Rule for the per-site region inner < |phi(x)| <= outer.

    N = 1 uses composite Gauss-Legendre on the (one or two) intervals;
    N >= 2 uses radial Gauss-Legendre with weight rho^{N-1} times a
    spherical rule, so the characteristic function is resolved exactly.

    With `panel_width` each interval gets as many panels as it takes to keep
    them no wider than that, so the pieces of a split region are resolved
    like the unsplit one. Without it the ball gets 2 * panels (N = 1) and
    every other interval `panels`.
    """
    inner, outer = max(region.inner, 0.0), region.outer
    if outer <= inner:
        return SiteRule(np.zeros((0, components)), np.zeros(0))

    if components == 1:
        if inner == 0.0:
            count = 2 * panels if panel_width is None else _panel_count(2.0 * outer, panels, panel_width)
            nodes, weights = gauss_legendre(-outer, outer, radial_order, count)
        else:
            pos, w = gauss_legendre(inner, outer, radial_order, _panel_count(outer - inner, panels, panel_width))
            nodes = np.concatenate([-pos[::-1], pos])
            weights = np.concatenate([w[::-1], w])
        return SiteRule(nodes[:, None], weights)

    rho, w_rho = gauss_legendre(inner, outer, radial_order, _panel_count(outer - inner, panels, panel_width))
    w_rho = w_rho * rho ** (components - 1)
    directions, w_dir = _sphere_directions(components, angular_order)
    nodes = (rho[:, None, None] * directions[None, :, :]).reshape(-1, components)
    weights = (w_rho[:, None] * w_dir[None, :]).ravel()
    return SiteRule(nodes, weights)


def shell_rule(components: int, radius: float, angular_order: int = 8) -> ShellRule:
    """Surface rule for |phi| = radius with weights rho^{N-1} d omega."""
    if components == 1:
        normals = np.array([[1.0], [-1.0]])
        return ShellRule(radius * normals, np.ones(2), normals, radius)
    directions, w_dir = _sphere_directions(components, angular_order)
    return ShellRule(radius * directions, w_dir * radius ** (components - 1), directions, radius)


def tensor_size(rules: Sequence[SiteRule]) -> int:
    return int(np.prod([r.size for r in rules], dtype=np.int64)) if rules else 1


def tensor_product(rules: Sequence[SiteRule], node_budget: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Full tensor grid over sites.

    Returns:
        (points, weights): points has shape (M, sum of components), site-major
    """
    total = tensor_size(rules)
    if node_budget is not None and total > node_budget:
        raise ResourceError(
            f"Tensor grid of {total} nodes exceeds budget {node_budget}",
            {"nodes": total, "budget": node_budget},
        )
    points = np.zeros((1, 0))
    weights = np.ones(1)
    for rule in rules:
        points = np.concatenate(
            [np.repeat(points, rule.size, axis=0), np.tile(rule.nodes, (len(weights), 1))],
            axis=1,
        )
        weights = np.outer(weights, rule.weights).ravel()
    return points, weights


def iter_tensor_chunks(rules: Sequence[SiteRule], chunk_size: int = 200_000) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Tensor grid streamed in chunks of at most chunk_size nodes."""
    shape = tuple(r.size for r in rules)
    total = tensor_size(rules)
    for start in range(0, total, chunk_size):
        flat = np.arange(start, min(start + chunk_size, total))
        idx = np.unravel_index(flat, shape)
        points = np.concatenate([rule.nodes[i] for rule, i in zip(rules, idx)], axis=1)
        weights = np.ones(len(flat))
        for rule, i in zip(rules, idx):
            weights = weights * rule.weights[i]
        yield points, weights


def cube_rule(dim: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule on [0,1]^dim."""
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = gauss_legendre(0.0, 1.0, order)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return points, weights
