"""
Interaction Service
Interpolated evaluation of V1 (power series) and V2 (two-body square),
the factorization and positivity checks and the weighted kernel norm of V1
"""

import logging
from typing import Optional, Tuple

import numpy as np

from clusterexp.errors import ConsistencyError, InputError, StabilityError
from clusterexp.models.graphs import Edge, InterpolationPoint
from clusterexp.models.interaction import (
    FactorizationReport,
    Interaction,
    KernelTerm,
    PositivityReport,
    PowerSeriesKernel,
    SingleSitePolynomial,
    TwoBodyPotential,
)
from clusterexp.models.lattice import Lattice
from clusterexp.services.graph_combinatorics import random_forest_point
from clusterexp.services.lattice_geometry import minimum_spanning_edges, tree_size

logger = logging.getLogger(__name__)

FACTORIZATION_TOLERANCE = 1e-10


def _as_batch(array: np.ndarray, lattice: Lattice) -> Tuple[np.ndarray, bool]:
    """Field arrays are (sites, N) or (batch, sites, N)."""
    array = np.asarray(array)
    single = array.ndim == 2
    if single:
        array = array[None]
    if array.shape[1:] != (lattice.size, lattice.components):
        raise InputError(
            f"Field must have shape (..., {lattice.size}, {lattice.components}), got {array.shape}"
        )
    return array, single


def term_tree_edges(lattice: Lattice, term: KernelTerm) -> Tuple[Edge, ...]:
    """Deterministic MST of the term's support (lexicographic ties)."""
    return minimum_spanning_edges(lattice, term.support)


def tree_factor(lattice: Lattice, term: KernelTerm, point: InterpolationPoint) -> float:
    """prod of s(l) over the MST edges of the term's support"""
    factor = 1.0
    for a, b in term_tree_edges(lattice, term):
        factor *= point.value(a, b)
    return factor


def source_monomial(term: KernelTerm, J: np.ndarray) -> complex:
    value = 1.0 + 0j
    for site, comp in term.zeta.entries:
        value *= J[site, comp]
    return value


def eval_V1(
    kernel: PowerSeriesKernel,
    lattice: Lattice,
    phi: np.ndarray,
    point: InterpolationPoint,
    J: np.ndarray,
):
    """
    Interpolated power series: sum of v1(xi; zeta) phi^xi J^zeta times the
    s-product over the MST of supp(xi o zeta). Terms reaching outside the
    point's ground set are dropped.

    Args:
        kernel: Power series
        lattice: Metric space the supports live in
        phi: (sites, N) or (batch, sites, N)
        point: Interpolation point
        J: Source (sites, N)

    Returns:
        complex, or (batch,) complex array for batched phi
    """
    fields, single = _as_batch(phi, lattice)
    J = np.asarray(J)
    total = np.zeros(len(fields), dtype=complex)
    for term in kernel.restricted(point.ground_set).terms:
        weight = term.coeff * tree_factor(lattice, term, point) * source_monomial(term, J)
        if weight == 0:
            continue
        monomial = np.ones(len(fields))
        for site, comp in term.xi.entries:
            monomial = monomial * fields[:, site, comp]
        total += weight * monomial
    return complex(total[0]) if single else total


def eval_V2(
    potential: TwoBodyPotential,
    lattice: Lattice,
    phi: np.ndarray,
    point: InterpolationPoint,
    J: np.ndarray,
):
    """
    -sum_x (sum_x' v_half(x,x') s({x,x'})^2 |phi(x')|^2)^2 - a sum_x J(x).phi(x)
    over the point's ground set.
    """
    fields, single = _as_batch(phi, lattice)
    ground = list(point.ground_set)
    local = fields[:, ground, :]
    q = np.sum(local ** 2, axis=-1)
    K = potential.v_half[np.ix_(ground, ground)] * point.values ** 2
    U = q @ K.T
    value = -np.sum(U ** 2, axis=1) - potential.source_coeff * np.sum(np.asarray(J)[ground][None] * local, axis=(1, 2))
    value = value.astype(complex)
    return complex(value[0]) if single else value


def eval_single_site(polynomial: SingleSitePolynomial, lattice: Lattice, phi: np.ndarray, point: InterpolationPoint):
    """sum over sites of sum_k c_k (lambda |phi(x)|)^{2k}; s-independent"""
    fields, single = _as_batch(phi, lattice)
    sites = [x for x in point.ground_set if polynomial.sites is None or x in polynomial.sites]
    q = (polynomial.lambda_phi ** 2) * np.sum(fields[:, sites, :] ** 2, axis=-1)
    value = np.zeros(len(fields), dtype=complex)
    for k, c in enumerate(polynomial.coeffs, start=1):
        value += c * np.sum(q ** k, axis=1)
    return complex(value[0]) if single else value


def eval_V(interaction: Interaction, lattice: Lattice, phi: np.ndarray, point: InterpolationPoint, J: np.ndarray):
    """Full interpolated interaction V1 + V2 (+ single-site polynomial)."""
    two_body = interaction.two_body or TwoBodyPotential.source_only(lattice.size, interaction.source_coeff)
    value = eval_V1(interaction.kernel, lattice, phi, point, J) + eval_V2(two_body, lattice, phi, point, J)
    if interaction.single_site is not None:
        value = value + eval_single_site(interaction.single_site, lattice, phi, point)
    return value


def factorization_check(
    interaction: Interaction,
    lattice: Lattice,
    point: InterpolationPoint,
    draws: int = 20,
    seed: Optional[int] = None,
    tolerance: float = FACTORIZATION_TOLERANCE,
) -> FactorizationReport:
    """
    Compare V(phi; s; J) against the sum of its restrictions to the blocks
    of P(s) for random phi and J.

    Raises:
        ConsistencyError: discrepancy above tolerance
    """
    rng = np.random.default_rng(seed)
    blocks = point.partition().sorted_blocks()
    shape = (draws, lattice.size, lattice.components)
    phi = rng.normal(size=shape)
    J = rng.normal(size=shape[1:])

    whole = eval_V(interaction, lattice, phi, point, J)
    parts = sum(eval_V(interaction, lattice, phi, point.restrict(block), J) for block in blocks)
    discrepancy = float(np.max(np.abs(whole - parts)))
    scale = max(1.0, float(np.max(np.abs(whole))))
    holds = discrepancy <= tolerance * scale
    report = FactorizationReport(
        blocks=[list(b) for b in blocks], draws=draws, max_discrepancy=discrepancy, holds=holds
    )
    if not holds:
        raise ConsistencyError("Interpolated interaction does not factor over P(s)", report.model_dump())
    return report


def positivity_check(
    potential: TwoBodyPotential,
    lattice: Lattice,
    lambda_phi: float,
    samples: int = 1000,
    c_pos: float = 1.0,
    c_pos_prime: float = 0.0,
    field_scale: float = 2.0,
    seed: Optional[int] = None,
) -> PositivityReport:
    """
    Sampled stability bound at random forest points:
    Re V2(phi; s; 0) <= -lambda^{2M} c_pos sum_x |phi(x)|^{2M} + c_pos' |X|.
    Also reports the sufficient spectral condition
    lambda_min(v_half o s^2) >= c_v v2^{1/2}.

    Raises:
        InputError: lambda_phi <= 0
        StabilityError: violation at a sample (witness phi in the payload)
    """
    if lambda_phi <= 0:
        raise InputError(f"lambda_phi must be positive, got {lambda_phi}")
    rng = np.random.default_rng(seed)
    M = potential.degree
    zero_source = np.zeros((lattice.size, lattice.components))
    threshold = potential.c_v * np.sqrt(potential.v2_scale)

    min_margin = np.inf
    spectral_min = np.inf
    for sample in range(samples):
        point = random_forest_point(lattice.sites, rng)
        phi = field_scale * rng.normal(size=(lattice.size, lattice.components))
        lhs = eval_V2(potential, lattice, phi, point, zero_source).real
        norms = np.sum(phi ** 2, axis=-1) ** M
        rhs = -(lambda_phi ** (2 * M)) * c_pos * float(np.sum(norms)) + c_pos_prime * lattice.size
        margin = rhs - lhs
        if margin < -1e-10 * max(1.0, abs(rhs)):
            raise StabilityError(
                "Positivity bound violated",
                {"sample": sample, "phi": phi.tolist(), "lhs": lhs, "rhs": rhs},
            )
        min_margin = min(min_margin, margin)
        weighted = potential.v_half * point.values ** 2
        spectral_min = min(spectral_min, float(np.linalg.eigvalsh(weighted).min()))

    logger.info(f"Positivity: {samples} samples, min margin {min_margin:.3e}, spectral min {spectral_min:.3e}")
    return PositivityReport(
        samples=samples,
        lambda_phi=lambda_phi,
        c_pos=c_pos,
        c_pos_prime=c_pos_prime,
        min_margin=float(min_margin),
        spectral_min_eigenvalue=spectral_min,
        spectral_threshold=float(threshold),
        spectral_condition_holds=spectral_min >= threshold - 1e-12,
        holds=True,
    )


def v1_tree_norm(kernel: PowerSeriesKernel, lattice: Lattice, R_arg: float, lambda_J: float, m_dot: float) -> float:
    """
    sup_x sum over terms touching x of
    R^n(xi) lambda_J^-n(zeta) e^{m_dot d_t(xi o zeta)} |v1(xi; zeta)|
    """
    if R_arg <= 0 or lambda_J <= 0 or m_dot <= 0:
        raise InputError("v1_tree_norm needs positive R, lambda_J and m_dot")
    per_site = np.zeros(lattice.size)
    for term in kernel.terms:
        weight = (
            R_arg ** term.xi.degree
            * lambda_J ** (-term.zeta.degree)
            * np.exp(m_dot * tree_size(lattice, term.support))
            * abs(term.coeff)
        )
        for site in term.support:
            per_site[site] += weight
    return float(per_site.max(initial=0.0))
