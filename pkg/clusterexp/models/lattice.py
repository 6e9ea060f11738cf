"""
Lattice Models
Finite metric site sets and multisets of (site, component) points
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from clusterexp.errors import InputError

Point = Tuple[int, int]  # (site, component), components counted from 0

METRIC_TOLERANCE = 1e-12


class LatticeKind:
    """Lattice preset kinds"""
    TORUS_1D = "torus1d"
    TORUS_2D = "torus2d"
    EXPLICIT = "explicit"

    @classmethod
    def all(cls) -> List[str]:
        return [cls.TORUS_1D, cls.TORUS_2D, cls.EXPLICIT]


@dataclass(frozen=True)
class LatticePreset:
    """Descriptor of how a lattice was generated"""
    kind: str
    side: Optional[int] = None
    spacing: Tuple[float, ...] = (1.0,)

    @property
    def vertex_transitive(self) -> bool:
        return self.kind in (LatticeKind.TORUS_1D, LatticeKind.TORUS_2D)


@dataclass(frozen=True, eq=False)
class Lattice:
    """
    Finite site set with a metric and N field components per site.

    Sites are the integers 0..n-1; torus2d site (i, j) has id i*L + j.
    The metric table is validated on construction.
    """
    sites: Tuple[int, ...]
    metric: np.ndarray
    components: int = 1
    preset: LatticePreset = field(default_factory=lambda: LatticePreset(LatticeKind.EXPLICIT))

    def __post_init__(self):
        n = len(self.sites)
        if n < 1:
            raise InputError("Lattice needs at least one site")
        if self.components < 1:
            raise InputError(f"Component count must be >= 1, got {self.components}")
        if tuple(self.sites) != tuple(range(n)):
            raise InputError("Sites must be the integers 0..n-1")

        metric = np.array(self.metric, dtype=float)
        if metric.shape != (n, n):
            raise InputError(f"Metric table must be {n}x{n}, got {metric.shape}")
        if np.any(metric < -METRIC_TOLERANCE):
            raise InputError("Metric table has negative entries")
        if np.max(np.abs(np.diag(metric)), initial=0.0) > METRIC_TOLERANCE:
            raise InputError("Metric table must have zero diagonal")
        if np.max(np.abs(metric - metric.T), initial=0.0) > METRIC_TOLERANCE:
            raise InputError("Metric table must be symmetric")
        # d(x,z) <= d(x,y) + d(y,z) for all triples
        violation = metric[:, None, :] - (metric[:, :, None] + metric[None, :, :])
        if np.max(violation, initial=0.0) > 1e-9:
            raise InputError("Metric table violates the triangle inequality")

        metric.setflags(write=False)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "sites", tuple(self.sites))

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def dof(self) -> int:
        """Number of real field variables: |sites| * N"""
        return self.size * self.components

    def check_site(self, site: int) -> int:
        if not isinstance(site, (int, np.integer)) or not 0 <= int(site) < self.size:
            raise InputError(f"Unknown site: {site!r}", {"lattice_size": self.size})
        return int(site)

    def check_sites(self, sites: Iterable[int]) -> Tuple[int, ...]:
        return tuple(self.check_site(s) for s in sites)

    def distance(self, x: int, y: int) -> float:
        return float(self.metric[self.check_site(x), self.check_site(y)])

    def dof_index(self, site: int, component: int) -> int:
        """Row of (site, component) in site-major covariance ordering."""
        if not 0 <= component < self.components:
            raise InputError(f"Unknown component {component} (N={self.components})")
        return self.check_site(site) * self.components + component

    def dof_indices(self, sites: Iterable[int]) -> np.ndarray:
        """All covariance rows belonging to the given sites, site-major."""
        n = self.components
        return np.array([s * n + m for s in sites for m in range(n)], dtype=int)

    def with_metric(self, metric: np.ndarray) -> "Lattice":
        return Lattice(self.sites, metric, self.components, LatticePreset(LatticeKind.EXPLICIT))


@dataclass(frozen=True)
class PointMultiset:
    """
    Unordered sequence of (site, component) points with multiplicities.
    Stored sorted so equal multisets compare and hash equal.
    """
    entries: Tuple[Point, ...] = ()

    def __post_init__(self):
        normalized = tuple(sorted((int(s), int(c)) for s, c in self.entries))
        object.__setattr__(self, "entries", normalized)

    @classmethod
    def of(cls, points: Iterable[Iterable[int]]) -> "PointMultiset":
        return cls(tuple(tuple(p) for p in points))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def degree(self) -> int:
        """Number of entries counted with multiplicity"""
        return len(self.entries)

    def support(self) -> frozenset:
        return frozenset(s for s, _ in self.entries)

    def multiplicities(self) -> Dict[Point, int]:
        return dict(Counter(self.entries))

    def multiplicity(self, point: Point) -> int:
        return self.entries.count(tuple(point))

    def compose(self, other: "PointMultiset") -> "PointMultiset":
        """Concatenation of the two sequences"""
        return PointMultiset(self.entries + other.entries)

    def validate_against(self, lattice: Lattice) -> None:
        for site, comp in self.entries:
            lattice.dof_index(site, comp)


class GrowthConstantReport(BaseModel):
    """c_g'(a): neighborhood growth ratio sup_Q |{x: d(x,Q) <= a}| / |Q|"""
    a: float
    max_Q: int
    sup_ratio: float
    maximizer: List[int]
    singleton_ball: Optional[int] = None
