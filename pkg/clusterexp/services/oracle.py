"""
Oracle Service
Brute-force log Z(J) by full tensor cubature or scrambled Sobol sampling over
the product box, correlations on the engine's finite-difference stencil, and
exponential decay fits
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.stats import qmc

from clusterexp.config import get_settings
from clusterexp.errors import InputError, NumericError, ResourceError
from clusterexp.models.expansion import CorrelationResult
from clusterexp.models.graphs import InterpolationPoint
from clusterexp.models.model import Model
from clusterexp.models.oracle import DecayFit, OracleResult, OracleScheme
from clusterexp.services.activities import as_source_batch
from clusterexp.services.covariance import gaussian_normalizer
from clusterexp.services.interaction import eval_V
from clusterexp.services.lattice_geometry import distances_from
from clusterexp.utils.finite_difference import combine_stencil, stencil_points
from clusterexp.utils.quadrature import SiteRegion, iter_tensor_chunks, site_rule, tensor_size

logger = logging.getLogger(__name__)

VANISHING_Z = 1e-12
QMC_BLOCK_LOG2 = 16
MIN_DECAY_POINTS = 3


class _FullIntegrand:
    """Gaussian weight times e^V over the whole lattice at s = 1"""

    def __init__(self, model: Model):
        self.model = model
        self.lattice = model.lattice
        matrix = model.covariance.matrix
        self.inverse = np.linalg.inv(matrix)
        self.normalizer = gaussian_normalizer(matrix)
        self.point = InterpolationPoint.constant(self.lattice.sites, 1.0)

    def values(self, phi: np.ndarray, J_batch: np.ndarray) -> np.ndarray:
        """(nodes, batch) integrand values without quadrature weights"""
        gaussian = -0.5 * np.einsum("pi,ij,pj->p", phi, self.inverse, phi)
        fields = phi.reshape(len(phi), self.lattice.size, self.lattice.components)
        out = np.empty((len(phi), len(J_batch)), dtype=complex)
        for b, J in enumerate(J_batch):
            out[:, b] = np.exp(gaussian + eval_V(self.model.interaction, self.lattice, fields, self.point, J))
        return out


def _site_rules(model: Model, radial_order: int, panels: int):
    quad = model.quadrature
    region = SiteRegion(0.0, model.box_half_width, model.outer_is_boundary)
    rule = site_rule(model.lattice.components, region, radial_order, panels, quad.angular_order)
    return [rule] * model.lattice.size


def _cubature_Z(model: Model, J_batch: np.ndarray, chunk_size: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """Z per source on the configured rule, with the change against a half-order rule."""
    quad = model.quadrature
    integrand = _FullIntegrand(model)

    def integrate(radial_order: int) -> Tuple[np.ndarray, int]:
        rules = _site_rules(model, radial_order, quad.panels)
        total = np.zeros(len(J_batch), dtype=complex)
        for points, weights in iter_tensor_chunks(rules, chunk_size):
            total += weights @ integrand.values(points, J_batch)
        return integrand.normalizer * total, tensor_size(rules)

    fine, nodes = integrate(quad.radial_order)
    coarse, _ = integrate(max(2, quad.radial_order // 2))
    return fine, np.abs(fine - coarse), nodes


def _qmc_Z(
    model: Model,
    J_batch: np.ndarray,
    log2_points: int,
    seed: int,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Z per source by uniform scrambled Sobol points on the product cube,
    restricted to the per-site balls; two independent scramblings give the
    estimate (their mean) and the residual (their spread).
    """
    lattice = model.lattice
    N, dim = lattice.components, lattice.dof
    half = model.box_half_width
    volume = (2.0 * half) ** dim
    integrand = _FullIntegrand(model)
    block = min(log2_points, QMC_BLOCK_LOG2)

    estimates = []
    for shift in range(2):
        sampler = qmc.Sobol(d=dim, scramble=True, seed=seed + shift)
        total = np.zeros(len(J_batch), dtype=complex)
        for _ in range(1 << (log2_points - block)):
            phi = half * (2.0 * sampler.random(1 << block) - 1.0)
            inside = np.all(np.linalg.norm(phi.reshape(-1, lattice.size, N), axis=-1) <= half, axis=1)
            total += inside.astype(float) @ integrand.values(phi, J_batch)
        estimates.append(integrand.normalizer * volume * total / (1 << log2_points))
        logger.debug(f"QMC scrambling {shift}: Z = {estimates[-1][0]:.8g}")
    Z = 0.5 * (estimates[0] + estimates[1])
    return Z, np.abs(estimates[0] - estimates[1]), 2 * (1 << log2_points)


def resolve_scheme(model: Model, scheme: str = OracleScheme.AUTO) -> str:
    """
    Full cubature when the dimension and tensor size fit, else Sobol sampling.

    Raises:
        ResourceError: dimension above the cap of the chosen scheme
    """
    if scheme not in OracleScheme.all():
        raise InputError(f"Unknown oracle scheme: {scheme}")
    settings = get_settings()
    dim = model.lattice.dof
    quad = model.quadrature
    nodes = tensor_size(_site_rules(model, quad.radial_order, quad.panels))
    fits_cubature = dim <= settings.cubature_dimension_cap and nodes <= quad.node_budget

    if scheme == OracleScheme.AUTO:
        scheme = OracleScheme.CUBATURE if fits_cubature else OracleScheme.QMC
    if scheme == OracleScheme.CUBATURE and not fits_cubature:
        raise ResourceError(
            f"Full cubature of dimension {dim} with {nodes} nodes exceeds the caps",
            {"dimension": dim, "nodes": nodes, "dimension_cap": settings.cubature_dimension_cap, "budget": quad.node_budget},
        )
    if scheme == OracleScheme.QMC and dim > settings.qmc_dimension_cap:
        raise ResourceError(
            f"Sampling dimension {dim} exceeds cap {settings.qmc_dimension_cap}",
            {"dimension": dim, "cap": settings.qmc_dimension_cap},
        )
    return scheme


def brute_force_batch(
    model: Model,
    J: np.ndarray,
    scheme: str = OracleScheme.AUTO,
    qmc_log2_points: int = 20,
    chunk_size: int = 200_000,
    seed: Optional[int] = None,
) -> List[OracleResult]:
    """
    Direct integral of dmu_C chi_R e^{V(phi; J)} for a batch of sources.

    Raises:
        ResourceError: dimension over cap
        NumericError: |Z| below 1e-12, so log Z is undefined
    """
    J_batch = as_source_batch(J, model)
    method = resolve_scheme(model, scheme)
    seed = get_settings().seed if seed is None else seed
    logger.info(f"Oracle: {method} in dimension {model.lattice.dof} for {len(J_batch)} source(s)")
    if method == OracleScheme.CUBATURE:
        Z, residual, nodes = _cubature_Z(model, J_batch, chunk_size)
    else:
        Z, residual, nodes = _qmc_Z(model, J_batch, qmc_log2_points, seed)

    results = []
    for z, err in zip(Z, residual):
        if not np.isfinite(z) or abs(z) < VANISHING_Z:
            raise NumericError(
                "Partition function vanishes; log Z is undefined",
                {"Z": [float(z.real), float(z.imag)], "method": method},
            )
        results.append(
            OracleResult(
                logZ=complex(np.log(z)),
                Z=complex(z),
                method=method,
                residual=float(err / abs(z)),
                nodes=nodes,
                dimension=model.lattice.dof,
            )
        )
    return results


def brute_force_logZ(
    model: Model,
    J: Optional[np.ndarray] = None,
    scheme: str = OracleScheme.AUTO,
    qmc_log2_points: int = 20,
    chunk_size: int = 200_000,
    seed: Optional[int] = None,
) -> OracleResult:
    """Brute-force log Z at one source (J = 0 when omitted)."""
    J = model.zero_source() if J is None else J
    return brute_force_batch(model, as_source_batch(J, model)[:1], scheme, qmc_log2_points, chunk_size, seed)[0]


def oracle_correlations(
    model: Model,
    requests: Sequence[Sequence[Tuple[int, int]]],
    fd_step: float = 0.05,
    richardson: bool = True,
    scheme: str = OracleScheme.AUTO,
    qmc_log2_points: int = 20,
    chunk_size: int = 200_000,
    seed: Optional[int] = None,
) -> List[CorrelationResult]:
    """
    Mixed J-derivatives of the brute-force log Z at J = 0 on the same
    stencil as the engine.
    """
    lattice = model.lattice
    origin = np.zeros(lattice.dof)
    stencils = []
    for points in requests:
        points = [tuple(int(v) for v in p) for p in points]
        if not points:
            raise InputError("Correlation needs at least one point")
        axes = [lattice.dof_index(site, comp) for site, comp in points]
        offsets, levels = stencil_points(origin, axes, fd_step, richardson)
        stencils.append((points, offsets, levels))
    if not stencils:
        return []

    stacked = np.concatenate([offsets for _, offsets, _ in stencils])
    unique, inverse = np.unique(np.round(stacked, 14), axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    J_batch = unique.reshape(len(unique), lattice.size, lattice.components)
    logZ = np.array(
        [r.logZ for r in brute_force_batch(model, J_batch, scheme, qmc_log2_points, chunk_size, seed)]
    )
    # unwrap so the stencil never straddles the branch cut
    logZ = logZ.real + 1j * np.unwrap(logZ.imag)

    results = []
    start = 0
    for points, offsets, levels in stencils:
        rows = inverse[start:start + len(offsets)]
        start += len(offsets)
        value, error = combine_stencil(logZ[rows], levels)
        value, error = complex(value), float(error)
        results.append(
            CorrelationResult(
                points=[list(p) for p in points],
                value=value,
                error=error,
                step=fd_step,
                noise_dominated=bool(np.isfinite(error) and error >= abs(value)),
            )
        )
    return results


def gaussian_two_point_profile(model: Model, source: int = 0, component: int = 0) -> Dict[float, float]:
    """|C((source, c), (y, c))| for one site y per distance: the V = 0 chain."""
    covariance = model.covariance
    return {
        d: float(abs(covariance.entry(source, component, site, component)))
        for d, site in distances_from(model.lattice, source)
    }


def decay_fit(
    values: Dict[float, float],
    noise_floor: float = 1e-12,
    min_r_squared: float = 0.95,
) -> DecayFit:
    """
    Least-squares slope of log|value| against distance.

    Args:
        values: distance -> correlation magnitude
        noise_floor: Magnitudes at or below it are dropped
        min_r_squared: Fit quality needed for `accepted`

    Raises:
        NumericError: fewer than three distances above the noise floor
    """
    usable = sorted((float(d), abs(v)) for d, v in values.items() if abs(v) > noise_floor)
    if len(usable) < MIN_DECAY_POINTS:
        raise NumericError(
            f"Decay fit needs {MIN_DECAY_POINTS} distances above the noise floor, got {len(usable)}",
            {"noise_floor": noise_floor, "usable": len(usable)},
        )
    distances = np.array([d for d, _ in usable])
    logs = np.log([v for _, v in usable])
    if np.ptp(logs) <= 1e-12 * max(1.0, float(np.max(np.abs(logs)))):
        # flat profile: no decay to fit
        logger.info(f"Decay fit: flat profile over {len(usable)} distances")
        return DecayFit(mass=0.0, intercept=float(logs[0]), r_squared=0.0, points=len(usable), accepted=False)

    fit = stats.linregress(distances, logs)
    r_squared = float(fit.rvalue ** 2)
    mass = float(-fit.slope)
    logger.info(f"Decay fit: mass {mass:.4g}, r^2 {r_squared:.4f} over {len(usable)} distances")
    return DecayFit(
        mass=mass,
        intercept=float(fit.intercept),
        r_squared=r_squared,
        points=len(usable),
        accepted=bool(r_squared >= min_r_squared and mass > 0),
        stderr=float(fit.stderr) if np.isfinite(fit.stderr) else None,
    )
