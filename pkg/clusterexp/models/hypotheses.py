"""
Hypothesis Models
Parameters and report of the convergence-hypothesis checker
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator


class OmegaParams(BaseModel):
    """omega(r') = w^-delta ((1/v1 + r') / (1/v1 + R))^d"""
    w: float = Field(0.01, gt=0)
    delta: float = Field(0.0, ge=0)
    d: float = Field(1.0, ge=0)


class HypothesisParams(BaseModel):
    """Inputs of check_hypotheses; constants of the proof chain are user-supplied"""
    r: float = Field(2.0, gt=0)
    R: Optional[float] = Field(5.0, description="None means R = infinity")
    v1: float = Field(0.01, gt=0, description="frak v_1")
    v2: float = Field(0.05, ge=0, description="frak v_2")
    lambda_J: float = Field(1.0, gt=0)
    m: float = Field(0.1, gt=0)
    m_V: float = Field(0.1, gt=0)
    c_v: float = Field(1.0, gt=0)
    c_pos: float = Field(1.0, ge=0)
    c_pos_prime: float = Field(0.0, ge=0)
    c_blocact: float = Field(1.0, ge=1.0, description="Constant of the small-field activity bound")
    omega: OmegaParams = Field(default_factory=OmegaParams)
    mu: Optional[float] = Field(None, gt=0, description="Override of the covariance mass")
    r_grid: int = Field(16, ge=2)
    max_Q: int = Field(3, ge=1)

    @field_validator("R")
    @classmethod
    def check_radius(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and v <= 0:
            raise ValueError("R must be positive (or null for infinity)")
        return v

    @property
    def m_dot(self) -> float:
        """m-dot = 2m + 3m_V"""
        return 2.0 * self.m + 3.0 * self.m_V


class ConditionEntry(BaseModel):
    """One checked inequality lhs <= rhs (or lhs >= rhs, see `relation`)"""
    name: str
    lhs: float
    rhs: float
    relation: str = Field(..., description="'<=' or '>='")
    passed: bool = Field(..., alias="pass")
    margin: float
    note: Optional[str] = None

    model_config = {"populate_by_name": True}


class HypothesisReport(BaseModel):
    """All conditions with both sides numerically"""
    conditions: List[ConditionEntry]
    inputs: Dict[str, float | None]
    all_pass: bool
