"""
clusterexp - Cluster Expansion Engine
log Z(J) and truncated correlations of finite lattice spin systems via the
BKAR-interpolated polymer/Mayer expansion, with a brute-force oracle
"""

__version__ = "1.0.0"
__author__ = "clusterexp developers"
