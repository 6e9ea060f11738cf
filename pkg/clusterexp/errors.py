"""
Error Types
Exception hierarchy shared by services and the CLI.
Each error carries a payload code and the process exit code used by main.py.
"""

from typing import Any, Dict, Optional


class ClusterExpansionError(Exception):
    """Base class for all engine errors"""

    code = "CLUSTEREXP_ERROR"
    exit_code = 3

    def __init__(self, message: str, payload: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.payload = payload or {}

    def to_dict(self) -> Dict[str, Any]:
        """Error body printed by the CLI's global handler."""
        return {
            "error": {
                "code": self.code,
                "message": self.message,
                "details": self.payload,
            }
        }


class InputError(ClusterExpansionError):
    """Invalid argument: unknown site, out-of-range parameter, wrong shape"""
    code = "INPUT_ERROR"
    exit_code = 2


class ConfigError(ClusterExpansionError):
    """Run configuration violates its schema"""
    code = "CONFIG_ERROR"
    exit_code = 2


class ResourceError(ClusterExpansionError):
    """An enumeration or integration cap was exceeded"""
    code = "RESOURCE_ERROR"


class NumericError(ClusterExpansionError):
    """Quadrature, finite-difference or sampling failure"""
    code = "NUMERIC_ERROR"


class ModelError(ClusterExpansionError):
    """Covariance or model data violates a structural requirement"""
    code = "MODEL_ERROR"


class ConsistencyError(ClusterExpansionError):
    """Two independent routes to the same quantity disagree"""
    code = "CONSISTENCY_ERROR"


class StabilityError(ClusterExpansionError):
    """Positivity (stability) bound violated at a sampled field"""
    code = "STABILITY_ERROR"


class NormalizationError(ClusterExpansionError):
    """A single-site activity vanished, so activities cannot be normalized"""
    code = "NORMALIZATION_ERROR"
