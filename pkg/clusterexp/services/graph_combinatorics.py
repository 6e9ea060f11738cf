"""
Graph Combinatorics Service
Partitions, spanning trees, Ursell functions, Kruskal weights and the BKAR
forest interpolation formula
"""

import itertools
import logging
import math
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from clusterexp.config import get_settings
from clusterexp.errors import InputError, NumericError, ResourceError
from clusterexp.models.graphs import Edge, Forest, InterpolationPoint, Partition, normalize_edge
from clusterexp.utils.finite_difference import mixed_partial
from clusterexp.utils.quadrature import cube_rule

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Counting
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def bell_number(n: int) -> int:
    """Bell numbers by the recursion B(n+1) = sum_k C(n,k) B(k)."""
    if n < 0:
        raise InputError(f"Bell number needs n >= 0, got {n}")
    if n == 0:
        return 1
    return sum(math.comb(n - 1, k) * bell_number(k) for k in range(n))


def cayley_count(q: int) -> int:
    """Number of labeled trees on q vertices: q^(q-2)."""
    if q < 1:
        raise InputError(f"Cayley count needs q >= 1, got {q}")
    return 1 if q <= 2 else q ** (q - 2)


def _check_cap(size: int, cap: int, what: str) -> None:
    if size > cap:
        raise ResourceError(f"{what} of size {size} exceeds cap {cap}", {"size": size, "cap": cap})


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def _restricted_growth(elements: Sequence[int]) -> Iterator[List[List[int]]]:
    if not elements:
        yield []
        return
    first, rest = elements[0], elements[1:]
    for blocks in _restricted_growth(rest):
        yield [[first]] + blocks
        for i in range(len(blocks)):
            yield blocks[:i] + [[first] + blocks[i]] + blocks[i + 1:]


def enumerate_partitions(ground: Iterable[int], cap: Optional[int] = None) -> Iterator[Partition]:
    """
    Every set partition of `ground` exactly once.

    Raises:
        ResourceError: |ground| above the partition cap
    """
    elements = sorted(set(ground))
    _check_cap(len(elements), cap or get_settings().partition_cap, "Partition ground set")
    for blocks in _restricted_growth(elements):
        yield Partition(frozenset(frozenset(b) for b in blocks))


def enumerate_trees(vertices: Iterable[int], cap: Optional[int] = None) -> Iterator[Forest]:
    """
    Every labeled spanning tree on `vertices` exactly once (Pruefer codes).

    Raises:
        ResourceError: more vertices than the tree cap
    """
    labels = sorted(set(vertices))
    q = len(labels)
    _check_cap(q, cap or get_settings().tree_cap, "Tree vertex set")
    if q == 0:
        return
    if q == 1:
        yield Forest.empty(labels)
        return
    for code in itertools.product(range(q), repeat=q - 2):
        tree = nx.from_prufer_sequence(list(code)) if code else nx.path_graph(2)
        yield Forest(frozenset(labels), frozenset((labels[a], labels[b]) for a, b in tree.edges()))


def enumerate_forests(ground: Iterable[int], cap: Optional[int] = None) -> Iterator[Tuple[Partition, Forest]]:
    """All forests on `ground`, grouped as (components partition, forest)."""
    ground = sorted(set(ground))
    for partition in enumerate_partitions(ground, cap):
        per_block = [list(enumerate_trees(block)) for block in partition.sorted_blocks()]
        for trees in itertools.product(*per_block):
            edges = frozenset().union(*[t.edges for t in trees])
            yield partition, Forest(frozenset(ground), edges)


# ---------------------------------------------------------------------------
# Graphs of set families
# ---------------------------------------------------------------------------

def incidence_graph(sets: Sequence[Iterable[int]]) -> nx.Graph:
    """Graph on indices 0..n-1 with an edge when the sets intersect."""
    frozen = [frozenset(s) for s in sets]
    graph = nx.Graph()
    graph.add_nodes_from(range(len(frozen)))
    for i, j in itertools.combinations(range(len(frozen)), 2):
        if frozen[i] & frozen[j]:
            graph.add_edge(i, j)
    return graph


def connected_subgraph_sum(graph: nx.Graph) -> int:
    """
    sum over connected spanning subgraphs g of (-1)^|g|.

    Uses the subset recursion c(S) = a(S) - sum_{B: min S in B, B != S}
    c(B) a(S \\ B), where a(S) = [G[S] has no edges] is the alternating sum
    over all spanning subgraphs of G[S].
    """
    nodes = sorted(graph.nodes())
    n = len(nodes)
    if n == 0:
        return 0
    index = {v: i for i, v in enumerate(nodes)}
    edge_masks = [(1 << index[a]) | (1 << index[b]) for a, b in graph.edges()]

    def no_edges(mask: int) -> int:
        return int(not any((mask & e) == e for e in edge_masks))

    c = {}
    for mask in range(1, 1 << n):
        low = mask & -mask
        total = no_edges(mask)
        sub = (mask - 1) & mask
        while sub:
            if sub & low:
                total -= c[sub] * no_edges(mask ^ sub)
            sub = (sub - 1) & mask
        c[mask] = total
    return c[(1 << n) - 1]


def ursell_graph_sum(sets: Sequence[Iterable[int]], cap: Optional[int] = None) -> int:
    """
    Ursell function rho(X_1..X_n) of an ordered family (repeats allowed).

    Returns:
        Exact integer; 1 for n = 1, 0 when the incidence graph is disconnected
    """
    n = len(sets)
    if n < 1:
        raise InputError("Ursell function needs at least one set")
    _check_cap(n, cap or get_settings().ursell_cap, "Ursell family")
    if n == 1:
        return 1
    graph = incidence_graph(sets)
    if not nx.is_connected(graph):
        return 0
    return connected_subgraph_sum(graph)


def spanning_tree_count(graph: nx.Graph, cap: Optional[int] = None) -> int:
    """
    Exact number of spanning trees via the matrix-tree theorem.
    The reduced Laplacian determinant is computed by fraction-free
    (Bareiss) elimination in integer arithmetic.
    """
    n = graph.number_of_nodes()
    _check_cap(n, cap or get_settings().spanning_count_cap, "Spanning-tree graph")
    if n <= 1:
        return 1
    nodes = sorted(graph.nodes())
    laplacian = nx.laplacian_matrix(graph, nodelist=nodes).toarray()
    m = [[int(v) for v in row[1:]] for row in laplacian[1:]]
    size = n - 1
    sign, prev = 1, 1
    for k in range(size - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, size) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, size):
            for j in range(k + 1, size):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[size - 1][size - 1]


# ---------------------------------------------------------------------------
# Kruskal weights
# ---------------------------------------------------------------------------

def _edge_key(edges: Iterable[Tuple[int, int]]) -> FrozenSet[Edge]:
    return frozenset(normalize_edge(a, b) for a, b in edges)


def kruskal_distribution(graph: nx.Graph, cap: Optional[int] = None) -> Dict[FrozenSet[Edge], Fraction]:
    """
    w(T, g) for every spanning tree T of a connected graph g: the share of
    edge orderings for which the greedy loop-free selection returns T.
    """
    edges = sorted(_edge_key(graph.edges()))
    _check_cap(len(edges), cap or get_settings().kruskal_edge_cap, "Kruskal edge set")
    if not nx.is_connected(graph):
        raise InputError("Kruskal weights need a connected graph")

    counts: Dict[FrozenSet[Edge], int] = {}
    for order in itertools.permutations(edges):
        components = nx.utils.UnionFind(graph.nodes())
        chosen = []
        for a, b in order:
            if components[a] != components[b]:
                components.union(a, b)
                chosen.append((a, b))
        key = frozenset(chosen)
        counts[key] = counts.get(key, 0) + 1

    total = math.factorial(len(edges))
    return {tree: Fraction(c, total) for tree, c in counts.items()}


def kruskal_weight(tree: Forest, graph: nx.Graph, cap: Optional[int] = None) -> Fraction:
    """
    Exact Kruskal weight w(T, g).

    Raises:
        InputError: T is not a spanning tree of g
    """
    edges = _edge_key(graph.edges())
    if not tree.edges <= edges or set(tree.vertex_set) != set(graph.nodes()) or not tree.is_spanning_tree():
        raise InputError("T must be a spanning tree of g")
    return kruskal_distribution(graph, cap).get(tree.edges, Fraction(0))


# ---------------------------------------------------------------------------
# BKAR interpolation
# ---------------------------------------------------------------------------

def interpolation_table(forest: Forest, edge_values: Dict[Edge, float], ground: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Pair table of s^F over the sorted ground set: the minimum of the edge
    values along the F path, 0 across components, 1 on the diagonal.
    """
    ground = sorted(ground if ground is not None else forest.vertex_set)
    index = {v: i for i, v in enumerate(ground)}
    table = np.zeros((len(ground), len(ground)))
    np.fill_diagonal(table, 1.0)
    graph = forest.graph
    for root in forest.vertex_set:
        # depth-first walk carrying the running minimum from the root
        stack = [(root, None, np.inf)]
        while stack:
            vertex, parent, running = stack.pop()
            if vertex != root:
                table[index[root], index[vertex]] = running
            for nxt in graph.neighbors(vertex):
                if nxt != parent:
                    stack.append((nxt, vertex, min(running, edge_values[normalize_edge(vertex, nxt)])))
    return table


def bkar_interpolate(forest: Forest, edge_values: Dict[Edge, float]) -> InterpolationPoint:
    """
    s^F for a forest with values on its edges.

    Raises:
        InputError: an edge of F has no value
    """
    values = {normalize_edge(a, b): float(v) for (a, b), v in edge_values.items()}
    missing = forest.edges - set(values)
    if missing:
        raise InputError(f"Missing edge values for {sorted(missing)}")
    return InterpolationPoint(tuple(sorted(forest.vertex_set)), interpolation_table(forest, values))


def random_forest_point(ground: Iterable[int], rng: np.random.Generator, keep_probability: float = 0.5) -> InterpolationPoint:
    """
    Random s^F: a uniform random spanning tree (random Pruefer code) with
    each edge kept with the given probability and uniform edge values.
    """
    ground = sorted(ground)
    q = len(ground)
    if q == 1:
        return InterpolationPoint.constant(ground, 1.0)
    if q == 2:
        tree_edges = [(0, 1)]
    else:
        tree_edges = list(nx.from_prufer_sequence(rng.integers(0, q, size=q - 2).tolist()).edges())
    kept = [normalize_edge(ground[a], ground[b]) for a, b in tree_edges if rng.random() < keep_probability]
    forest = Forest(frozenset(ground), frozenset(kept))
    return bkar_interpolate(forest, {e: float(rng.random()) for e in kept})


def tree_integral_orders(k: int, order: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Cubature on [0,1]^k split into the k! ordering simplices, each mapped
    from the cube by the Duffy transform. Piecewise polynomials in
    min(s_a, s_b, ...) become polynomials on each piece, so the rule is exact
    for them once the order covers the degree.
    """
    if k == 0:
        yield np.zeros((1, 0)), np.ones(1)
        return
    u, w = cube_rule(k, order)
    # t_{k-1} = u_{k-1}, t_j = t_{j+1} u_j: 0 <= t_0 <= ... <= t_{k-1} <= 1
    t = np.empty_like(u)
    t[:, k - 1] = u[:, k - 1]
    jac = np.ones(len(w))
    for j in range(k - 2, -1, -1):
        t[:, j] = t[:, j + 1] * u[:, j]
        jac = jac * t[:, j + 1]
    for perm in itertools.permutations(range(k)):
        s = np.empty_like(t)
        s[:, list(perm)] = t
        yield s, w * jac


def integrate_simplices(
    f: Callable[[np.ndarray], np.ndarray],
    k: int,
    order: int = 8,
    rel_tol: float = 1e-8,
    max_order: int = 16,
    abs_tol: float = 1e-14,
    fail_tol: Optional[float] = None,
) -> Tuple[np.ndarray, float]:
    """
    Integral over [0,1]^k of f on the ordering-simplex rule, doubling the
    order until the change is below tolerance. Integrands of the form
    g(s^F) for a forest F are smooth on every simplex.

    Returns:
        (value, residual)

    Raises:
        NumericError: with fail_tol set, the last change at max_order
            exceeds fail_tol * max(1, |value|)
    """
    def integrate(rule_order: int) -> np.ndarray:
        total = None
        for points, weights in tree_integral_orders(k, rule_order):
            part = np.tensordot(weights, np.asarray(f(points)), axes=(0, 0))
            total = part if total is None else total + part
        return total

    value = integrate(order)
    if k == 0:
        return value, 0.0
    residual = float("inf")
    while order < max_order:
        order *= 2
        refined = integrate(order)
        residual = float(np.max(np.abs(refined - value)))
        value = refined
        if residual <= max(rel_tol * float(np.max(np.abs(refined))), abs_tol):
            return value, residual

    scale = max(1.0, float(np.max(np.abs(value))))
    if fail_tol is not None and residual > max(fail_tol * scale, abs_tol):
        raise NumericError(
            f"s-cubature did not converge by order {order}",
            {"residual": residual, "order": order, "dimension": k},
        )
    logger.debug(f"s-cubature stopped at order {order} with change {residual:.2e}")
    return value, residual


def ursell_tree_integral(
    tree: Forest,
    sets: Sequence[Iterable[int]],
    order: int = 8,
    tolerance: float = 1e-10,
) -> float:
    """
    rho(T; X_1..X_n) = (-1)^{n-1} [T in G] integral over [0,1]^T of
    prod_{l in G \\ T} (1 - s^T(l)).

    Args:
        tree: Spanning tree on the indices 0..n-1
        sets: The family X_1..X_n
        order: Gauss-Legendre order per axis on each ordering simplex
        tolerance: Allowed change when the order is doubled

    Raises:
        NumericError: the doubled-order check moves by more than tolerance
    """
    n = len(sets)
    if tree.vertex_set != frozenset(range(n)) or not tree.is_spanning_tree():
        raise InputError("T must be a spanning tree on the family indices")
    graph = incidence_graph(sets)
    graph_edges = _edge_key(graph.edges())
    if not tree.edges <= graph_edges:
        return 0.0

    tree_edges = tree.sorted_edges
    column = {e: i for i, e in enumerate(tree_edges)}
    non_tree = sorted(graph_edges - tree.edges)
    paths = [[column[e] for e in tree.path(a, b)] for a, b in non_tree]

    def integrate(rule_order: int) -> float:
        total = 0.0
        for s, w in tree_integral_orders(len(tree_edges), rule_order):
            values = np.ones(len(w))
            for cols in paths:
                values = values * (1.0 - np.min(s[:, cols], axis=1))
            total += float(np.dot(w, values))
        return total

    value = integrate(order)
    check = integrate(2 * order)
    if abs(check - value) > tolerance:
        raise NumericError(
            "Tree-weighted Ursell integral did not converge",
            {"residual": abs(check - value), "order": order},
        )
    return (-1.0) ** (n - 1) * check


DerivativeCallable = Callable[[InterpolationPoint, Tuple[Edge, ...]], complex]


def bkar_forest_formula(
    H: Callable[[InterpolationPoint], complex],
    ground: Iterable[int],
    derivative: Optional[DerivativeCallable] = None,
    fd_step: float = 1e-4,
    s_order: int = 8,
    s_max_order: int = 16,
    rel_tol: float = 1e-8,
    cap: Optional[int] = None,
) -> complex:
    """
    Reconstruct H(1) from the Taylor forest formula

        H(1) = sum_F integral_{[0,1]^F} (prod_{l in F} d/ds(l) H)(s^F) ds.

    Args:
        H: Function of the pair table (an InterpolationPoint on `ground`)
        ground: Site set, at most the BKAR site cap
        derivative: Exact mixed derivative callable; finite differences with
            one Richardson level when None
        fd_step: Finite-difference step in the s coordinates
        s_order, s_max_order, rel_tol: Adaptive s-cubature controls

    Raises:
        ResourceError: ground set above cap
        NumericError: derivative backend produced non-finite values
    """
    ground = tuple(sorted(set(ground)))
    _check_cap(len(ground), cap or get_settings().bkar_site_cap, "BKAR ground set")
    total = 0j

    for _, forest in enumerate_forests(ground):
        edges = forest.sorted_edges
        k = len(edges)

        def integrand(u: np.ndarray) -> np.ndarray:
            out = np.empty(len(u), dtype=complex)
            for row, coords in enumerate(u):
                base = interpolation_table(forest, dict(zip(edges, coords)), ground)
                if derivative is not None:
                    out[row] = derivative(InterpolationPoint(ground, base), edges)
                else:
                    out[row] = _fd_forest_derivative(H, ground, base, edges, coords, fd_step)
            if not np.all(np.isfinite(out)):
                raise NumericError("Derivative backend returned non-finite values", {"forest": [list(e) for e in edges]})
            return out

        value, residual = integrate_simplices(integrand, k, s_order, rel_tol, s_max_order)
        logger.debug(f"forest {edges}: {complex(value):.6g} (residual {residual:.2e})")
        total += complex(value)

    return total


def _fd_forest_derivative(H, ground, base: np.ndarray, edges, coords, h: float) -> complex:
    """Mixed partial of H in the forest-edge coordinates, other pairs held at s^F."""
    index = {v: i for i, v in enumerate(ground)}
    pairs = [(index[a], index[b]) for a, b in edges]

    def evaluate(points: np.ndarray) -> np.ndarray:
        values = np.empty(len(points), dtype=complex)
        for p, point in enumerate(points):
            table = base.copy()
            for (i, j), v in zip(pairs, point):
                table[i, j] = table[j, i] = v
            values[p] = H(InterpolationPoint(ground, table))
        return values

    step = min([h] + [min(c, 1.0 - c) / 2.0 for c in coords if 0.0 < c < 1.0])
    value, _ = mixed_partial(evaluate, np.asarray(coords, dtype=float), list(range(len(edges))), step)
    return complex(value)
