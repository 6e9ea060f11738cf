"""
Shared Fixtures
Small rings, covariances and models with fast quadrature settings
"""

import os
import sys

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from clusterexp.models.interaction import Interaction, TwoBodyPotential
from clusterexp.models.model import Model
from clusterexp.models.run_config import QuadratureSection
from clusterexp.services.covariance import build_laplacian_covariance
from clusterexp.services.lattice_geometry import torus1d

FAST_QUADRATURE = QuadratureSection(radial_order=8, panels=2, s_order=6, s_max_order=12)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale runs (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ring3():
    return torus1d(3)


@pytest.fixture
def ring6():
    return torus1d(6)


@pytest.fixture
def laplacian_ring3(ring3):
    return build_laplacian_covariance(ring3, 1.0)


def make_model(
    L: int = 3,
    v2: float = 0.0,
    R=None,
    r=None,
    mass: float = 1.0,
    quadrature=FAST_QUADRATURE,
    box_sigmas: float = 5.0,
) -> Model:
    # 5 sigmas keeps the 8-node panels resolving the stiffest Gaussian mode
    lattice = torus1d(L)
    covariance = build_laplacian_covariance(lattice, mass)
    two_body = None
    if v2 > 0:
        two_body = TwoBodyPotential(np.sqrt(v2) * np.eye(L), -1.0, 2, 1.0, v2)
    return Model(lattice, covariance, Interaction(two_body=two_body), R=R, r=r, box_sigmas=box_sigmas, quadrature=quadrature)


@pytest.fixture
def gaussian_model():
    return make_model(3)


@pytest.fixture
def quartic_model():
    return make_model(3, v2=0.05, R=5.0)


@pytest.fixture
def large_field_model():
    return make_model(3, v2=0.05, R=5.0, r=2.0)


@pytest.fixture
def pair_gaussian_model():
    return make_model(2)


@pytest.fixture
def pair_quartic_model():
    return make_model(2, v2=0.05, R=5.0)
