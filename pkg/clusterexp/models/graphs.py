"""
Graph Models
Forests, set partitions and BKAR interpolation points
"""

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Tuple

import networkx as nx
import numpy as np

from clusterexp.errors import InputError

Edge = Tuple[int, int]  # stored with the smaller vertex first


def normalize_edge(a: int, b: int) -> Edge:
    if a == b:
        raise InputError(f"Loop edge ({a}, {b}) is not allowed")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Forest:
    """Acyclic graph on a finite vertex set"""
    vertex_set: FrozenSet[int]
    edges: FrozenSet[Edge]

    def __post_init__(self):
        vertices = frozenset(int(v) for v in self.vertex_set)
        edges = frozenset(normalize_edge(int(a), int(b)) for a, b in self.edges)
        for a, b in edges:
            if a not in vertices or b not in vertices:
                raise InputError(f"Edge ({a}, {b}) leaves the vertex set")
        if edges and not nx.is_forest(self.to_networkx(vertices, edges)):
            raise InputError("Edge set contains a cycle")
        object.__setattr__(self, "vertex_set", vertices)
        object.__setattr__(self, "edges", edges)

    @staticmethod
    def to_networkx(vertices: Iterable[int], edges: Iterable[Edge]) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(vertices)
        graph.add_edges_from(edges)
        return graph

    @classmethod
    def empty(cls, vertices: Iterable[int]) -> "Forest":
        return cls(frozenset(vertices), frozenset())

    @property
    def graph(self) -> nx.Graph:
        return self.to_networkx(self.vertex_set, self.edges)

    @property
    def sorted_edges(self) -> Tuple[Edge, ...]:
        return tuple(sorted(self.edges))

    def components(self) -> "Partition":
        """P(F): vertex sets of the trees of F"""
        return Partition(frozenset(frozenset(c) for c in nx.connected_components(self.graph)))

    def is_spanning_tree(self) -> bool:
        return len(self.edges) == len(self.vertex_set) - 1 and nx.is_connected(self.graph)

    def path(self, x: int, y: int) -> Tuple[Edge, ...]:
        """Edges on the F path linking x and y; empty if x == y or not connected."""
        if x == y:
            return ()
        try:
            nodes = nx.shortest_path(self.graph, x, y)
        except nx.NetworkXNoPath:
            return ()
        return tuple(normalize_edge(a, b) for a, b in zip(nodes[:-1], nodes[1:]))


@dataclass(frozen=True)
class Partition:
    """Set partition: disjoint nonempty blocks covering the ground set"""
    blocks: FrozenSet[FrozenSet[int]]

    def __post_init__(self):
        blocks = frozenset(frozenset(b) for b in self.blocks)
        seen: set = set()
        for block in blocks:
            if not block:
                raise InputError("Partition blocks must be nonempty")
            if seen & block:
                raise InputError("Partition blocks must be disjoint")
            seen |= block
        object.__setattr__(self, "blocks", blocks)

    @property
    def ground(self) -> FrozenSet[int]:
        return frozenset().union(*self.blocks) if self.blocks else frozenset()

    def __len__(self) -> int:
        return len(self.blocks)

    def sorted_blocks(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(sorted(tuple(sorted(b)) for b in self.blocks))

    def block_of(self, site: int) -> FrozenSet[int]:
        for block in self.blocks:
            if site in block:
                return block
        raise InputError(f"Site {site} is not in the partition ground set")


@dataclass(frozen=True, eq=False)
class InterpolationPoint:
    """
    Pair weights s({x,y}) in [0,1] on a ground set, stored as a symmetric
    matrix over the sorted ground set with unit diagonal.
    """
    ground_set: Tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        ground = tuple(sorted(int(s) for s in self.ground_set))
        values = np.array(self.values, dtype=float)
        n = len(ground)
        if values.shape != (n, n):
            raise InputError(f"Interpolation table must be {n}x{n}, got {values.shape}")
        if np.max(np.abs(values - values.T), initial=0.0) > 0:
            raise InputError("Interpolation table must be symmetric")
        np.fill_diagonal(values, 1.0)
        values.setflags(write=False)
        object.__setattr__(self, "ground_set", ground)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, ground: Iterable[int], value: float) -> "InterpolationPoint":
        ground = tuple(sorted(ground))
        return cls(ground, np.full((len(ground), len(ground)), float(value)))

    @classmethod
    def from_pairs(cls, ground: Iterable[int], pairs: Dict[Edge, float]) -> "InterpolationPoint":
        ground = tuple(sorted(ground))
        index = {s: i for i, s in enumerate(ground)}
        values = np.zeros((len(ground), len(ground)))
        for (a, b), v in pairs.items():
            values[index[a], index[b]] = values[index[b], index[a]] = v
        return cls(ground, values)

    @property
    def index(self) -> Dict[int, int]:
        return {s: i for i, s in enumerate(self.ground_set)}

    def value(self, x: int, y: int) -> float:
        idx = self.index
        return float(self.values[idx[x], idx[y]])

    def in_unit_cube(self, tolerance: float = 0.0) -> bool:
        return bool(np.all(self.values >= -tolerance) and np.all(self.values <= 1.0 + tolerance))

    def restrict(self, sites: Iterable[int]) -> "InterpolationPoint":
        sites = tuple(sorted(sites))
        idx = self.index
        rows = [idx[s] for s in sites]
        return InterpolationPoint(sites, self.values[np.ix_(rows, rows)])

    def partition(self) -> Partition:
        """P(s): components of the graph with an edge where s > 0"""
        graph = nx.Graph()
        graph.add_nodes_from(self.ground_set)
        n = len(self.ground_set)
        for i in range(n):
            for j in range(i + 1, n):
                if self.values[i, j] > 0:
                    graph.add_edge(self.ground_set[i], self.ground_set[j])
        return Partition(frozenset(frozenset(c) for c in nx.connected_components(graph)))
