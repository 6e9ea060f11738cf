"""
Run Configuration Models
Pydantic schema of the single JSON file that describes one experiment.
Every section has defaults, so `{}` is a valid configuration.
"""

from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from clusterexp.models.covariance import CovarianceKind
from clusterexp.models.expansion import DerivativeBackend, ExpansionMode
from clusterexp.models.hypotheses import HypothesisParams
from clusterexp.models.lattice import LatticeKind
from clusterexp.models.oracle import OracleScheme


class LatticeSection(BaseModel):
    """{"kind": torus1d | torus2d | explicit, "L": int, "N": int, "metric": matrix}"""
    kind: str = LatticeKind.TORUS_1D
    L: int = Field(3, ge=1)
    N: int = Field(1, ge=1)
    metric: Optional[List[List[float]]] = None

    @field_validator("kind")
    @classmethod
    def validate_kind(cls, v: str) -> str:
        if v not in LatticeKind.all():
            raise ValueError(f"Lattice kind must be one of: {', '.join(LatticeKind.all())}")
        return v

    @model_validator(mode="after")
    def explicit_needs_metric(self):
        if self.kind == LatticeKind.EXPLICIT and self.metric is None:
            raise ValueError("Explicit lattice needs a metric table")
        return self


class CovarianceSection(BaseModel):
    """Covariance preset; explicit matrices use [re, im] pairs"""
    kind: str = CovarianceKind.LAPLACIAN
    mass: float = Field(1.0, gt=0)
    matrix: Optional[List[List[List[float]]]] = None
    theta: float = Field(1.0, gt=0)
    mu_chem: float = Field(-0.5, lt=0)
    beta: float = Field(3.0, gt=0)
    hopping: float = Field(1.0, ge=0, description="Scale of the lattice-Laplacian dispersion")

    @field_validator("kind")
    @classmethod
    def validate_kind(cls, v: str) -> str:
        if v not in CovarianceKind.all():
            raise ValueError(f"Covariance kind must be one of: {', '.join(CovarianceKind.all())}")
        return v

    @model_validator(mode="after")
    def explicit_needs_matrix(self):
        if self.kind == CovarianceKind.EXPLICIT and self.matrix is None:
            raise ValueError("Explicit covariance needs a matrix")
        return self


class KernelTermSpec(BaseModel):
    """{"xi": [[site, comp], ...], "zeta": [[site, comp], ...], "coeff": [re, im]}"""
    xi: List[List[int]] = Field(default_factory=list)
    zeta: List[List[int]] = Field(default_factory=list)
    coeff: List[float] = Field(..., min_length=1, max_length=2)


class TwoBodySpec(BaseModel):
    """{"v_half": matrix} or {"v2": scale} for v_half = sqrt(v2) Id"""
    v_half: Optional[List[List[float]]] = None
    v2: float = Field(0.0, ge=0)
    a: float = -1.0
    M: int = Field(2, ge=1)
    c_v: float = Field(1.0, gt=0)


class SingleSiteSpec(BaseModel):
    """p(lambda |phi|) = sum_k coeffs[k-1] (lambda |phi|)^{2k}"""
    coeffs: List[float] = Field(..., min_length=1)
    lambda_phi: float = Field(1.0, gt=0)
    sites: Optional[List[int]] = None


class InteractionSection(BaseModel):
    terms: List[KernelTermSpec] = Field(default_factory=list)
    two_body: Optional[TwoBodySpec] = None
    single_site: Optional[SingleSiteSpec] = None


class ExpansionSection(BaseModel):
    """Truncation, mode, backend and radii; R = null means infinity"""
    max_polymer_size: int = Field(3, ge=1)
    max_mayer_order: int = Field(4, ge=1)
    mode: str = ExpansionMode.PLAIN
    backend: str = DerivativeBackend.FD
    r: Optional[float] = Field(None, gt=0)
    R: Optional[float] = Field(None, gt=0)
    R_min: float = Field(0.0, ge=0, description="Lower bound of the box half-width when R is infinite")
    box_sigmas: float = Field(8.0, gt=0, description="Box half-width in units of mu^-1/2 when R is infinite")
    ursell_check: bool = True

    @field_validator("mode")
    @classmethod
    def validate_mode(cls, v: str) -> str:
        if v not in ExpansionMode.all():
            raise ValueError(f"Mode must be one of: {', '.join(ExpansionMode.all())}")
        return v

    @field_validator("backend")
    @classmethod
    def validate_backend(cls, v: str) -> str:
        if v not in DerivativeBackend.all():
            raise ValueError(f"Backend must be one of: {', '.join(DerivativeBackend.all())}")
        return v

    @model_validator(mode="after")
    def radii_ordered(self):
        if self.mode == ExpansionMode.LARGE_FIELD:
            if self.r is None:
                raise ValueError("Large-field mode needs the small-field radius r")
            if self.R is not None and not self.r < self.R:
                raise ValueError(f"Large-field mode needs r < R (r={self.r}, R={self.R})")
        return self


class QuadratureSection(BaseModel):
    """Per-site rules, s-cubature and finite-difference knobs"""
    radial_order: int = Field(16, ge=2)
    panels: int = Field(4, ge=1)
    angular_order: int = Field(8, ge=4)
    s_order: int = Field(8, ge=1)
    s_max_order: int = Field(16, ge=1)
    s_rel_tol: float = Field(1e-8, gt=0)
    residual_tol: float = Field(1e-5, gt=0, description="Quadrature change above this (relative) is a numeric error")
    fd_step: float = Field(1e-3, gt=0, lt=0.5)
    node_budget: int = Field(4_000_000, ge=1)

    @model_validator(mode="after")
    def s_orders_ordered(self):
        if self.s_max_order <= self.s_order:
            raise ValueError(f"s_max_order must exceed s_order to check convergence (got {self.s_max_order} <= {self.s_order})")
        return self


class CorrelationSection(BaseModel):
    """Correlations to compute and the J finite-difference step"""
    points: List[List[List[int]]] = Field(default_factory=list, description="Each entry: [[site, comp], ...]")
    fd_step: float = Field(0.05, gt=0)
    richardson: bool = True
    decay_source: int = Field(0, ge=0)
    decay_component: int = Field(0, ge=0)
    max_distance: Optional[float] = None


class OracleSection(BaseModel):
    scheme: str = OracleScheme.AUTO
    qmc_log2_points: int = Field(20, ge=4, le=26)
    chunk_size: int = Field(200_000, ge=1000)

    @field_validator("scheme")
    @classmethod
    def validate_scheme(cls, v: str) -> str:
        if v not in OracleScheme.all():
            raise ValueError(f"Oracle scheme must be one of: {', '.join(OracleScheme.all())}")
        return v


class OutputSection(BaseModel):
    directory: Optional[str] = None
    prefix: str = "run"
    formats: List[str] = Field(default_factory=lambda: ["json", "csv"])


class RunConfig(BaseModel):
    """One experiment"""
    lattice: LatticeSection = Field(default_factory=LatticeSection)
    covariance: CovarianceSection = Field(default_factory=CovarianceSection)
    interaction: InteractionSection = Field(default_factory=InteractionSection)
    expansion: ExpansionSection = Field(default_factory=ExpansionSection)
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)
    correlation: CorrelationSection = Field(default_factory=CorrelationSection)
    oracle: OracleSection = Field(default_factory=OracleSection)
    hypotheses: HypothesisParams = Field(default_factory=HypothesisParams)
    output: OutputSection = Field(default_factory=OutputSection)
    seed: Optional[int] = None
    workers: Optional[int] = Field(None, ge=1)

    model_config = {"extra": "forbid"}
