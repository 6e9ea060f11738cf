"""
Model
A lattice, a covariance and an interaction with the integration radii and
quadrature knobs that define Z(J)
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from clusterexp.models.covariance import Covariance
from clusterexp.models.interaction import Interaction
from clusterexp.models.lattice import Lattice
from clusterexp.models.run_config import QuadratureSection


@dataclass(frozen=True, eq=False)
class Model:
    """
    Z(J) = integral dmu_C(phi) chi_R(phi) e^{V(phi; J)}.

    R = None means R = infinity: sites are integrated over the ball of radius
    `box_half_width` and the cut carries no boundary term. `r` is the
    small-field radius of the large-field decomposition.
    """
    lattice: Lattice
    covariance: Covariance
    interaction: Interaction
    R: Optional[float] = None
    r: Optional[float] = None
    R_min: float = 0.0
    box_sigmas: float = 8.0
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)

    @property
    def box_half_width(self) -> float:
        if self.R is not None:
            return float(self.R)
        return float(max(self.box_sigmas / np.sqrt(self.covariance.mu), self.R_min))

    @property
    def outer_is_boundary(self) -> bool:
        return self.R is not None

    def with_radii(self, R: Optional[float], r: Optional[float]) -> "Model":
        return dataclasses.replace(self, R=R, r=r)

    def zero_source(self) -> np.ndarray:
        return np.zeros((self.lattice.size, self.lattice.components))
