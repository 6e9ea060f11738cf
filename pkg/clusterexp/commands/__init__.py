"""
CLI Commands
"""

from clusterexp.commands import compare, decay, expand, hypotheses, oracle, selftest

__all__ = ["compare", "decay", "expand", "hypotheses", "oracle", "selftest"]
