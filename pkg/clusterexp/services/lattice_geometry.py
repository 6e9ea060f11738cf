"""
Lattice Geometry Service
Lattice presets, minimal tree sizes and the geometric constants c_g, c_g'
"""

import itertools
import logging
from typing import Iterable, List, Optional, Tuple

import networkx as nx
import numpy as np

from clusterexp.errors import InputError
from clusterexp.models.graphs import Edge
from clusterexp.models.lattice import (
    GrowthConstantReport,
    Lattice,
    LatticeKind,
    LatticePreset,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_Q = 3


def _ring_distance(i: int, j: int, L: int) -> int:
    k = abs(i - j) % L
    return min(k, L - k)


def torus1d(L: int, components: int = 1) -> Lattice:
    """Z/L ring with unit edges."""
    if L < 1:
        raise InputError(f"Ring side must be >= 1, got {L}")
    idx = np.arange(L)
    metric = np.array([[_ring_distance(i, j, L) for j in idx] for i in idx], dtype=float)
    return Lattice(tuple(range(L)), metric, components, LatticePreset(LatticeKind.TORUS_1D, side=L))


def torus2d(L: int, components: int = 1) -> Lattice:
    """
    (Z/L)^2 with the graph (l1) distance; site (i, j) has id i*L + j.
    """
    if L < 1:
        raise InputError(f"Torus side must be >= 1, got {L}")
    coords = [(i, j) for i in range(L) for j in range(L)]
    metric = np.array(
        [[_ring_distance(a[0], b[0], L) + _ring_distance(a[1], b[1], L) for b in coords] for a in coords],
        dtype=float,
    )
    return Lattice(tuple(range(L * L)), metric, components, LatticePreset(LatticeKind.TORUS_2D, side=L))


def explicit(metric: Iterable[Iterable[float]], components: int = 1) -> Lattice:
    """Lattice from a user metric table (validated on construction)."""
    table = np.array(metric, dtype=float)
    if table.ndim != 2:
        raise InputError("Metric table must be a matrix")
    return Lattice(tuple(range(table.shape[0])), table, components, LatticePreset(LatticeKind.EXPLICIT))


def build_lattice(kind: str, L: int = 1, components: int = 1, metric=None) -> Lattice:
    """Dispatch on the config's lattice kind."""
    if kind == LatticeKind.TORUS_1D:
        return torus1d(L, components)
    if kind == LatticeKind.TORUS_2D:
        return torus2d(L, components)
    if kind == LatticeKind.EXPLICIT:
        if metric is None:
            raise InputError("Explicit lattice needs a metric table")
        return explicit(metric, components)
    raise InputError(f"Unknown lattice kind: {kind}")


def minimum_spanning_edges(lattice: Lattice, points: Iterable[int]) -> Tuple[Edge, ...]:
    """
    Minimum spanning tree of the complete graph on `points` weighted by d.

    Edges are offered to Kruskal's loop in lexicographic order and the sort
    by weight is stable, so ties resolve lexicographically.
    """
    sites = sorted(set(lattice.check_sites(points)))
    if len(sites) < 2:
        return ()
    graph = nx.Graph()
    graph.add_nodes_from(sites)
    for a, b in itertools.combinations(sites, 2):
        graph.add_edge(a, b, weight=float(lattice.metric[a, b]))
    edges = nx.minimum_spanning_edges(graph, algorithm="kruskal", weight="weight", data=False)
    return tuple(sorted((min(a, b), max(a, b)) for a, b in edges))


def tree_size(lattice: Lattice, points: Iterable[int]) -> float:
    """
    Minimal size d_t of a tree on the given sites.

    Args:
        lattice: Metric space
        points: Nonempty collection of sites

    Returns:
        Total edge length of a minimum spanning tree; 0 for a singleton
    """
    points = list(points)
    if not points:
        raise InputError("tree_size needs a nonempty set of sites")
    return float(sum(lattice.metric[a, b] for a, b in minimum_spanning_edges(lattice, points)))


def geometric_constant_cg(lattice: Lattice, m: float) -> float:
    """c_g(m) = sup_x sum_x' exp(-m d(x, x'))"""
    if m <= 0:
        raise InputError(f"c_g needs m > 0, got {m}")
    return float(np.max(np.exp(-m * lattice.metric).sum(axis=1)))


def geometric_constant_cg_prime(lattice: Lattice, a: float, max_Q: int = DEFAULT_MAX_Q) -> GrowthConstantReport:
    """
    c_g'(a) = sup_Q |{x: d(x, Q) <= a}| / |Q| by brute force over |Q| <= max_Q.

    For vertex-transitive presets the singleton-ball size |{x: d(x, x0) <= a}|
    is reported as well; it bounds the ratio from above.
    """
    if a <= 0:
        raise InputError(f"c_g' needs a > 0, got {a}")
    if max_Q < 1:
        raise InputError(f"max_Q must be >= 1, got {max_Q}")

    within = lattice.metric <= a + 1e-12
    best, best_Q = 0.0, [0]
    for size in range(1, min(max_Q, lattice.size) + 1):
        for Q in itertools.combinations(lattice.sites, size):
            neighborhood = int(np.count_nonzero(np.any(within[list(Q)], axis=0)))
            ratio = neighborhood / size
            if ratio > best:
                best, best_Q = ratio, list(Q)

    singleton_ball: Optional[int] = None
    if lattice.preset.vertex_transitive:
        singleton_ball = int(np.count_nonzero(within[0]))

    logger.debug(f"c_g'({a}) = {best} over |Q| <= {max_Q}")
    return GrowthConstantReport(a=a, max_Q=max_Q, sup_ratio=best, maximizer=best_Q, singleton_ball=singleton_ball)


def distances_from(lattice: Lattice, source: int) -> List[Tuple[float, int]]:
    """(distance, site) pairs sorted by distance, one site per distinct distance."""
    source = lattice.check_site(source)
    seen = {}
    for site in lattice.sites:
        d = round(float(lattice.metric[source, site]), 12)
        seen.setdefault(d, site)
    return sorted(seen.items())
