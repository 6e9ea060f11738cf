"""
Expansion Models
Polymer activity tables and the results of the Mayer assembly
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from clusterexp.utils.serialization import ComplexValue

Polymer = FrozenSet[int]
LargeFieldKey = Tuple[Polymer, Polymer]          # (X, Q), Q nonempty subset of X
TripleKey = Tuple[Polymer, Polymer, Polymer]     # (Z, X, Q)


class ExpansionMode:
    """Mayer assembly modes"""
    PLAIN = "plain"
    LARGE_FIELD = "large_field"

    @classmethod
    def all(cls) -> List[str]:
        return [cls.PLAIN, cls.LARGE_FIELD]


class DerivativeBackend:
    """s-derivative backends for activities"""
    FD = "fd"
    IBP = "ibp"

    @classmethod
    def all(cls) -> List[str]:
        return [cls.FD, cls.IBP]


@dataclass
class PolymerTable:
    """
    Activities A(X; J) at one source J, singletons included.
    `residuals` holds the s-cubature change per polymer.
    """
    J: np.ndarray
    entries: Dict[Polymer, complex] = field(default_factory=dict)
    residuals: Dict[Polymer, float] = field(default_factory=dict)

    @property
    def single_site(self) -> Dict[int, complex]:
        return {next(iter(X)): a for X, a in self.entries.items() if len(X) == 1}

    @property
    def sites(self) -> FrozenSet[int]:
        return frozenset().union(*self.entries.keys()) if self.entries else frozenset()

    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)


@dataclass
class LargeFieldTables:
    """Small-field activities A_s(Z; J) and large-field activities B(X, Q; J)"""
    J: np.ndarray
    small_field: Dict[Polymer, complex] = field(default_factory=dict)
    large_field: Dict[LargeFieldKey, complex] = field(default_factory=dict)
    residuals: Dict[str, float] = field(default_factory=dict)
    r: float = 0.0
    R: float = float("inf")

    @property
    def sites(self) -> FrozenSet[int]:
        return frozenset().union(*self.small_field.keys()) if self.small_field else frozenset()

    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)


class Truncation(BaseModel):
    """Truncation levels of one expansion run"""
    max_polymer_size: int
    max_mayer_order: int
    quadrature_budget: int


class ExpansionDiagnostics(BaseModel):
    """Truncation and quadrature diagnostics"""
    last_term_magnitudes: List[float] = Field(default_factory=list, description="|order-k contribution| per order")
    truncation_estimate: float = 0.0
    resummation_gap: float = Field(0.0, description="|resummed - last partial sum|")
    quadrature_residual: float = 0.0
    branch_crossing: bool = False
    ursell_check: Optional[float] = Field(None, description="Max per-order gap to the explicit Ursell sum")
    identity_gap: Optional[float] = Field(None, description="Polymer-gas identity check gap")
    small_field_gap: Optional[float] = Field(None, description="|log Z - log Z_s| in large-field mode")
    tail_estimate: Optional[float] = Field(None, description="Gaussian mass outside the integration box when R is infinite")


class ExpansionResult(BaseModel):
    """log Z(J) from the Mayer series with per-polymer contributions"""
    mode: str
    logZ: ComplexValue
    logZ_partial: List[ComplexValue]
    W: Dict[str, ComplexValue] = Field(default_factory=dict, description="W(X;J) keyed by sorted site list")
    V: Dict[str, ComplexValue] = Field(default_factory=dict, description="Small-field V(Z;J), large-field mode")
    L: Dict[str, ComplexValue] = Field(default_factory=dict, description="L(Z,X,Q;J) keyed 'Z|X|Q', large-field mode")
    logZ_small_field: Optional[ComplexValue] = None
    truncation: Truncation
    diagnostics: ExpansionDiagnostics = Field(default_factory=ExpansionDiagnostics)


class CorrelationResult(BaseModel):
    """Truncated correlation as a mixed J-derivative of log Z at J = 0"""
    points: List[List[int]]
    value: ComplexValue
    error: float
    step: float
    noise_dominated: bool
