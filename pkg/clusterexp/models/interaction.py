"""
Interaction Models
Power-series kernels, two-body potentials, single-site polynomials and the
reports of the factorization and positivity checks
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from clusterexp.errors import InputError
from clusterexp.models.lattice import PointMultiset


@dataclass(frozen=True)
class KernelTerm:
    """One coefficient v1(xi; zeta) of the power series"""
    xi: PointMultiset
    zeta: PointMultiset
    coeff: complex

    @property
    def support(self) -> frozenset:
        return self.xi.support() | self.zeta.support()


@dataclass(frozen=True)
class PowerSeriesKernel:
    """
    Sparse power series V1(phi; J) = sum v1(xi; zeta) phi^xi J^zeta.
    Terms with equal (xi, zeta) are merged on construction.
    """
    terms: Tuple[KernelTerm, ...] = ()

    def __post_init__(self):
        merged: Dict[Tuple[PointMultiset, PointMultiset], complex] = {}
        for term in self.terms:
            if term.xi.degree == 0 and term.zeta.degree == 0:
                raise InputError("Power series kernel must have no constant term")
            key = (term.xi, term.zeta)
            merged[key] = merged.get(key, 0j) + complex(term.coeff)
        terms = tuple(
            KernelTerm(xi, zeta, c)
            for (xi, zeta), c in sorted(merged.items(), key=lambda kv: (kv[0][0].entries, kv[0][1].entries))
            if c != 0
        )
        object.__setattr__(self, "terms", terms)

    def __len__(self) -> int:
        return len(self.terms)

    def restricted(self, sites) -> "PowerSeriesKernel":
        """Terms whose support lies inside the given sites."""
        sites = frozenset(sites)
        return PowerSeriesKernel(tuple(t for t in self.terms if t.support <= sites))

    @property
    def min_phi_degree(self) -> int:
        return min((t.xi.degree for t in self.terms), default=0)


@dataclass(frozen=True, eq=False)
class TwoBodyPotential:
    """
    V2(phi; J) = -sum_x (sum_y v_half(x,y) |phi(y)|^2)^2 - a J(x).phi(x).
    a = -1 couples the source as exp(<J, phi>).
    """
    v_half: np.ndarray
    source_coeff: float = -1.0
    degree: int = 2
    c_v: float = 1.0
    v2_scale: float = 0.0

    def __post_init__(self):
        v_half = np.array(self.v_half, dtype=float)
        if v_half.ndim != 2 or v_half.shape[0] != v_half.shape[1]:
            raise InputError(f"v_half must be square, got shape {v_half.shape}")
        if np.max(np.abs(v_half - v_half.T), initial=0.0) > 1e-12:
            raise InputError("v_half must be symmetric")
        v_half.setflags(write=False)
        object.__setattr__(self, "v_half", v_half)

    @classmethod
    def source_only(cls, n_sites: int, source_coeff: float = -1.0) -> "TwoBodyPotential":
        return cls(np.zeros((n_sites, n_sites)), source_coeff)

    @property
    def is_quartic_free(self) -> bool:
        return bool(np.all(self.v_half == 0))


@dataclass(frozen=True)
class SingleSitePolynomial:
    """
    p(lambda_phi |phi(x)|) = sum_k coeffs[k-1] (lambda_phi |phi(x)|)^{2k}
    summed over `sites` (all sites when None). No s-dependence.
    """
    coeffs: Tuple[float, ...]
    lambda_phi: float = 1.0
    sites: Optional[Tuple[int, ...]] = None

    @property
    def degree(self) -> int:
        return 2 * len(self.coeffs)


@dataclass(frozen=True, eq=False)
class Interaction:
    """V = V1 + V2 (+ single-site polynomial)"""
    kernel: PowerSeriesKernel = field(default_factory=PowerSeriesKernel)
    two_body: Optional[TwoBodyPotential] = None
    single_site: Optional[SingleSitePolynomial] = None

    @property
    def source_coeff(self) -> float:
        return self.two_body.source_coeff if self.two_body is not None else -1.0

    @property
    def is_gaussian(self) -> bool:
        """True when V is the pure source term."""
        no_two_body = self.two_body is None or self.two_body.is_quartic_free
        return not self.kernel.terms and no_two_body and self.single_site is None


class FactorizationReport(BaseModel):
    """Global interpolated interaction against the sum over partition blocks"""
    blocks: List[List[int]]
    draws: int
    max_discrepancy: float
    holds: bool


class PositivityReport(BaseModel):
    """Sampled stability bound Re V2(phi; s; 0) <= -lambda^{2M} c_pos sum |phi|^{2M} + c_pos' |X|"""
    samples: int
    lambda_phi: float
    c_pos: float
    c_pos_prime: float
    min_margin: float
    spectral_min_eigenvalue: float
    spectral_threshold: float
    spectral_condition_holds: bool
    holds: bool
