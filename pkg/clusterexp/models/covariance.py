"""
Covariance Models
Complex symmetric normal covariances, their Hadamard interpolations and
the reports produced when validating them
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from clusterexp.models.graphs import InterpolationPoint
from clusterexp.models.lattice import Lattice


class CovarianceKind:
    """Covariance preset kinds"""
    EXPLICIT = "explicit"
    LAPLACIAN = "laplacian"
    MANY_BOSON = "many_boson"

    @classmethod
    def all(cls) -> List[str]:
        return [cls.EXPLICIT, cls.LAPLACIAN, cls.MANY_BOSON]


@dataclass(frozen=True, eq=False)
class Covariance:
    """
    Covariance C on sites x components (site-major ordering).

    mu = lambda_min(Re C^-1) and a_min = lambda_min(Re C), with Re the
    entrywise real part, are computed once by services.covariance.
    """
    lattice: Lattice
    matrix: np.ndarray
    mu: float
    a_min: float
    inverse: np.ndarray
    decay_mass: Optional[float] = None
    kind: str = CovarianceKind.EXPLICIT

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_real(self) -> bool:
        return bool(np.max(np.abs(self.matrix.imag), initial=0.0) == 0.0)

    def block(self, sites) -> np.ndarray:
        """C restricted to the rows/columns of the given sites."""
        rows = self.lattice.dof_indices(sites)
        return self.matrix[np.ix_(rows, rows)]

    def entry(self, site_a: int, comp_a: int, site_b: int, comp_b: int) -> complex:
        return complex(self.matrix[self.lattice.dof_index(site_a, comp_a), self.lattice.dof_index(site_b, comp_b)])


@dataclass(frozen=True, eq=False)
class InterpolatedCovariance:
    """C_s on the ground set of `point`: (C_s)(x,y) = C(x,y) s({x,y})"""
    base: Covariance
    point: InterpolationPoint
    matrix: np.ndarray

    @property
    def sites(self):
        return self.point.ground_set


class ValidationReport(BaseModel):
    """Outcome of covariance validation"""
    size: int
    symmetry_defect: float
    normality_defect: float
    mu: float
    a_min: float
    valid: bool
    decay_mass: Optional[float] = None


class SpectralEnvelopeReport(BaseModel):
    """Containment of Re C_s^-1 and Re C_s spectra in the Hadamard envelopes"""
    inverse_eigenvalues: List[float]
    eigenvalues: List[float]
    inverse_bounds: List[float] = Field(..., description="[mu, 1/a_min]")
    bounds: List[float] = Field(..., description="[a_min, 1/mu]")
    inverse_margin: float = Field(..., description="Smallest distance inside the inverse envelope")
    margin: float = Field(..., description="Smallest distance inside the direct envelope")
    contained: bool


class GaussianBoundReport(BaseModel):
    """Measured Gaussian large-field box integral against c^|X| e^{-|Q| mu r^2 / 4}"""
    sites: List[int]
    large_field_sites: List[int]
    measured: float
    bound: float
    constant: float
    holds: bool
