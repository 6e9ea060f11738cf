"""
Model Builder Service
Turns a validated RunConfig into the lattice, covariance, interaction and
model objects the engine and the oracle work on
"""

import logging
from typing import Optional

import numpy as np

from clusterexp.errors import InputError
from clusterexp.models.covariance import Covariance, CovarianceKind
from clusterexp.models.interaction import (
    Interaction,
    KernelTerm,
    PowerSeriesKernel,
    SingleSitePolynomial,
    TwoBodyPotential,
)
from clusterexp.models.lattice import Lattice, PointMultiset
from clusterexp.models.model import Model
from clusterexp.models.run_config import CovarianceSection, InteractionSection, RunConfig
from clusterexp.services.covariance import (
    build_laplacian_covariance,
    build_many_boson_covariance,
    make_covariance,
)
from clusterexp.services.lattice_geometry import build_lattice
from clusterexp.utils.serialization import parse_complex

logger = logging.getLogger(__name__)


def build_covariance(section: CovarianceSection, space: Lattice) -> Covariance:
    """
    Covariance preset for the configured lattice. The many-boson preset
    replaces the lattice by its space-time lattice (N = 2).
    """
    if section.kind == CovarianceKind.LAPLACIAN:
        return build_laplacian_covariance(space, section.mass)
    if section.kind == CovarianceKind.MANY_BOSON:
        return build_many_boson_covariance(space, section.theta, section.mu_chem, section.beta, hopping=section.hopping)
    matrix = np.array([[parse_complex(v) for v in row] for row in section.matrix], dtype=complex)
    if matrix.shape != (space.dof, space.dof):
        raise InputError(f"Explicit covariance must be {space.dof}x{space.dof}, got {matrix.shape}")
    if np.max(np.abs(matrix.imag), initial=0.0) == 0.0:
        matrix = matrix.real
    return make_covariance(space, matrix, CovarianceKind.EXPLICIT)


def build_interaction(section: InteractionSection, lattice: Lattice) -> Interaction:
    terms = []
    for spec in section.terms:
        xi, zeta = PointMultiset.of(spec.xi), PointMultiset.of(spec.zeta)
        xi.validate_against(lattice)
        zeta.validate_against(lattice)
        coeff = complex(spec.coeff[0], spec.coeff[1] if len(spec.coeff) > 1 else 0.0)
        terms.append(KernelTerm(xi, zeta, coeff))

    two_body: Optional[TwoBodyPotential] = None
    if section.two_body is not None:
        spec = section.two_body
        if spec.v_half is not None:
            v_half = np.array(spec.v_half, dtype=float)
            if v_half.shape != (lattice.size, lattice.size):
                raise InputError(f"v_half must be {lattice.size}x{lattice.size}, got {v_half.shape}")
        else:
            v_half = np.sqrt(spec.v2) * np.eye(lattice.size)
        two_body = TwoBodyPotential(v_half, spec.a, spec.M, spec.c_v, spec.v2)

    single_site: Optional[SingleSitePolynomial] = None
    if section.single_site is not None:
        spec = section.single_site
        sites = tuple(lattice.check_sites(spec.sites)) if spec.sites is not None else None
        single_site = SingleSitePolynomial(tuple(spec.coeffs), spec.lambda_phi, sites)

    return Interaction(PowerSeriesKernel(tuple(terms)), two_body, single_site)


def build_model(config: RunConfig) -> Model:
    """
    Live model of a run configuration.

    Raises:
        InputError: inconsistent shapes or unknown sites
        ModelError: the covariance fails validation
    """
    lat = config.lattice
    space = build_lattice(lat.kind, lat.L, lat.N, lat.metric)
    covariance = build_covariance(config.covariance, space)
    lattice = covariance.lattice
    interaction = build_interaction(config.interaction, lattice)
    exp = config.expansion
    model = Model(
        lattice=lattice,
        covariance=covariance,
        interaction=interaction,
        R=exp.R,
        r=exp.r,
        R_min=exp.R_min,
        box_sigmas=exp.box_sigmas,
        quadrature=config.quadrature,
    )
    logger.info(
        f"Model: {lattice.size} sites, N={lattice.components}, covariance {covariance.kind} (mu={covariance.mu:.4g}), "
        f"R={'inf' if exp.R is None else exp.R}, r={exp.r}"
    )
    return model
