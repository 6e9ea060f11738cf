"""
Numerical Utilities
"""

from clusterexp.utils.finite_difference import combine_stencil, mixed_partial, stencil_points
from clusterexp.utils.quadrature import gauss_legendre, site_rule, tensor_product
from clusterexp.utils.serialization import encode_complex, parse_complex, set_key, write_csv, write_json

__all__ = [
    "combine_stencil",
    "mixed_partial",
    "stencil_points",
    "gauss_legendre",
    "site_rule",
    "tensor_product",
    "encode_complex",
    "parse_complex",
    "set_key",
    "write_csv",
    "write_json",
]
