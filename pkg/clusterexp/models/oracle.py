"""
Oracle Models
Results of brute-force integration and decay fits
"""

from typing import List, Optional

from pydantic import BaseModel, Field

from clusterexp.utils.serialization import ComplexValue


class OracleScheme:
    """Brute-force integration schemes"""
    CUBATURE = "full-cubature"
    QMC = "quasi-monte-carlo"
    AUTO = "auto"

    @classmethod
    def all(cls) -> List[str]:
        return [cls.CUBATURE, cls.QMC, cls.AUTO]


class OracleResult(BaseModel):
    """Brute-force log Z with its residual estimate"""
    logZ: ComplexValue
    Z: ComplexValue
    method: str
    residual: float = Field(..., description="Estimated absolute error of log Z")
    nodes: int = Field(..., description="Cubature nodes or QMC samples")
    dimension: int


class DecayFit(BaseModel):
    """Least-squares fit of log|correlation| against distance"""
    mass: float
    intercept: float
    r_squared: float
    points: int
    accepted: bool
    stderr: Optional[float] = None
