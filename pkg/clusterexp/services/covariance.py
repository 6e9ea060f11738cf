"""
Covariance Service
Validation, Hadamard interpolation, spectral envelopes, Gaussian
normalizers and the Laplacian / many-boson presets
"""

import logging
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import linalg, stats

from clusterexp.errors import InputError, ModelError
from clusterexp.models.covariance import (
    Covariance,
    CovarianceKind,
    GaussianBoundReport,
    InterpolatedCovariance,
    SpectralEnvelopeReport,
    ValidationReport,
)
from clusterexp.models.graphs import InterpolationPoint
from clusterexp.models.lattice import Lattice, LatticeKind, LatticePreset
from clusterexp.utils.quadrature import SiteRegion, iter_tensor_chunks, site_rule

logger = logging.getLogger(__name__)

NORMALITY_TOLERANCE = 1e-10


def _real_part_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues of the entrywise real part (symmetrized against roundoff)."""
    re = matrix.real
    return np.linalg.eigvalsh(0.5 * (re + re.T))


def check_matrix(matrix: np.ndarray) -> ValidationReport:
    """
    Symmetry and normality defects (relative to ||C||_F) plus mu and a_min.

    Raises:
        ModelError: not square, not symmetric or not normal beyond
            tolerance, or mu <= 0
    """
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ModelError(f"Covariance must be square, got shape {matrix.shape}")
    norm = np.linalg.norm(matrix) or 1.0
    symmetry = float(np.linalg.norm(matrix - matrix.T) / norm)
    adjoint = matrix.conj().T
    normality = float(np.linalg.norm(matrix @ adjoint - adjoint @ matrix) / norm ** 2)
    payload = {"symmetry_defect": symmetry, "normality_defect": normality}
    if symmetry > NORMALITY_TOLERANCE:
        raise ModelError("Covariance is not symmetric", payload)
    if normality > NORMALITY_TOLERANCE:
        raise ModelError("Covariance is not normal", payload)

    try:
        inverse = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        raise ModelError("Covariance is singular", payload)
    mu = float(np.min(_real_part_eigenvalues(inverse)))
    a_min = float(np.min(_real_part_eigenvalues(matrix)))
    if mu <= 0:
        raise ModelError(f"lambda_min(Re C^-1) = {mu:.3e} is not positive", {**payload, "mu": mu})
    return ValidationReport(
        size=matrix.shape[0],
        symmetry_defect=symmetry,
        normality_defect=normality,
        mu=mu,
        a_min=a_min,
        valid=True,
    )


def make_covariance(lattice: Lattice, matrix: np.ndarray, kind: str = CovarianceKind.EXPLICIT) -> Covariance:
    """Validate a matrix and wrap it with its cached spectral data."""
    matrix = np.array(matrix, dtype=complex)
    if matrix.shape != (lattice.dof, lattice.dof):
        raise InputError(f"Covariance must be {lattice.dof}x{lattice.dof}, got {matrix.shape}")
    report = check_matrix(matrix)
    matrix = 0.5 * (matrix + matrix.T)
    inverse = np.linalg.inv(matrix)
    matrix.setflags(write=False)
    inverse.setflags(write=False)
    covariance = Covariance(lattice, matrix, report.mu, report.a_min, inverse, kind=kind)
    mass = effective_decay_mass(covariance)
    logger.info(f"Covariance {kind}: dim={lattice.dof}, mu={report.mu:.6g}, a_min={report.a_min:.6g}")
    return Covariance(lattice, matrix, report.mu, report.a_min, inverse, decay_mass=mass, kind=kind)


def validate(covariance: Covariance) -> ValidationReport:
    report = check_matrix(covariance.matrix)
    report.decay_mass = covariance.decay_mass
    return report


def hadamard_interpolate(covariance: Covariance, point: InterpolationPoint) -> InterpolatedCovariance:
    """
    C_s on the ground set of `point`: every (component) entry between sites
    x and y is multiplied by s({x,y}); diagonal site blocks are unchanged.
    """
    sites = point.ground_set
    n = covariance.lattice.components
    weights = np.kron(point.values, np.ones((n, n)))
    return InterpolatedCovariance(covariance, point, covariance.block(sites) * weights)


def is_admissible(matrix: np.ndarray) -> bool:
    """Re C_s^-1 positive definite (acceptance rule for non-forest points)."""
    try:
        inverse = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        return False
    return bool(np.min(_real_part_eigenvalues(inverse)) > 0)


def spectral_envelope_check(
    covariance: Covariance,
    point: InterpolationPoint,
    tolerance: float = 1e-10,
) -> SpectralEnvelopeReport:
    """
    sigma(Re C_s^-1) in [mu, 1/a_min] and sigma(Re C_s) in [a_min, 1/mu].
    Containment failure is reported (contained = False) and logged.
    """
    interpolated = hadamard_interpolate(covariance, point).matrix
    inverse_eigs = _real_part_eigenvalues(np.linalg.inv(interpolated))
    eigs = _real_part_eigenvalues(interpolated)
    mu, a_min = covariance.mu, covariance.a_min
    inv_lo, inv_hi = mu, 1.0 / a_min if a_min > 0 else np.inf
    lo, hi = a_min, 1.0 / mu

    inverse_margin = float(min(inverse_eigs.min() - inv_lo, inv_hi - inverse_eigs.max()))
    margin = float(min(eigs.min() - lo, hi - eigs.max()))
    contained = inverse_margin >= -tolerance and margin >= -tolerance
    if not contained:
        logger.warning(f"Hadamard envelope violated: margins {inverse_margin:.3e}, {margin:.3e}")
    return SpectralEnvelopeReport(
        inverse_eigenvalues=inverse_eigs.tolist(),
        eigenvalues=eigs.tolist(),
        inverse_bounds=[inv_lo, float(inv_hi)],
        bounds=[lo, hi],
        inverse_margin=inverse_margin,
        margin=margin,
        contained=contained,
    )


def gaussian_normalizer(matrix: np.ndarray) -> complex:
    """
    det(2 pi C)^{-1/2} from principal logs of the eigenvalues.

    Raises:
        ModelError: an eigenvalue has Re <= 0
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if matrix.size == 0:
        return 1.0 + 0j
    eigenvalues = np.linalg.eigvals(matrix)
    if np.any(eigenvalues.real <= 0):
        raise ModelError(
            "Gaussian normalizer needs eigenvalues with positive real part",
            {"min_real": float(eigenvalues.real.min())},
        )
    return complex(np.exp(-0.5 * np.sum(np.log(2.0 * np.pi * eigenvalues))))


def _adjacency(lattice: Lattice) -> np.ndarray:
    return (np.abs(lattice.metric - 1.0) < 1e-12).astype(float)


def lattice_laplacian(lattice: Lattice) -> np.ndarray:
    """-Delta on the nearest-neighbour graph (pairs at distance 1)."""
    adjacency = _adjacency(lattice)
    if lattice.preset.vertex_transitive and lattice.preset.side == 2:
        # both ring neighbours along an axis coincide on Z/2
        adjacency = 2.0 * adjacency
    return np.diag(adjacency.sum(axis=1)) - adjacency


def build_laplacian_covariance(lattice: Lattice, mass: float) -> Covariance:
    """
    C = ((-Delta + mass) x Id_N)^-1; mu = mass.

    Raises:
        InputError: mass <= 0
    """
    if mass <= 0:
        raise InputError(f"Mass must be positive, got {mass}")
    inverse = np.kron(lattice_laplacian(lattice) + mass * np.eye(lattice.size), np.eye(lattice.components))
    return make_covariance(lattice, np.linalg.inv(inverse), CovarianceKind.LAPLACIAN)


def space_time_lattice(space: Lattice, n_tau: int, components: int = 2) -> Lattice:
    """Sites (tau, x) with id tau * |space| + x; metric = ring distance in tau + d."""
    tau = np.arange(n_tau)
    ring = np.abs(tau[:, None] - tau[None, :])
    ring = np.minimum(ring, n_tau - ring).astype(float)
    metric = ring[:, None, :, None] + space.metric[None, :, None, :]
    n = n_tau * space.size
    return Lattice(tuple(range(n)), metric.reshape(n, n), components, LatticePreset(LatticeKind.EXPLICIT))


def dispersion_matrix(space: Lattice, h_hat: Optional[Callable[[np.ndarray], float]] = None, hopping: float = 1.0) -> np.ndarray:
    """
    h on the space lattice. Default: hopping * (-Delta). A callable h_hat(k)
    is applied in Fourier space on torus presets.
    """
    if h_hat is None:
        return hopping * lattice_laplacian(space)
    if space.preset.kind == LatticeKind.TORUS_1D:
        L = space.size
        ks = [np.array([2 * np.pi * k / L]) for k in range(L)]
        coords = [np.array([x]) for x in range(L)]
    elif space.preset.kind == LatticeKind.TORUS_2D:
        L = space.preset.side
        ks = [2 * np.pi * np.array([a, b]) / L for a in range(L) for b in range(L)]
        coords = [np.array([i, j]) for i in range(L) for j in range(L)]
    else:
        raise InputError("A dispersion callable needs a torus space lattice")
    n = len(coords)
    h = np.zeros((n, n), dtype=complex)
    for k in ks:
        phase = np.exp(1j * np.array([k @ c for c in coords]))
        h += h_hat(k) * np.outer(phase, phase.conj())
    return (h / n).real


def many_boson_inverse(
    space: Lattice,
    theta: float,
    mu_chem: float,
    beta: float,
    h_hat: Optional[Callable[[np.ndarray], float]] = None,
    hopping: float = 1.0,
) -> np.ndarray:
    """
    Complex-field inverse propagator Id - delta_{tau + theta, tau'} j(theta)
    with j(theta) = exp(-theta (h - mu)), on the space-time sites.

    Raises:
        InputError: theta <= 0, mu_chem >= 0 or beta not a multiple of theta
    """
    if theta <= 0:
        raise InputError(f"theta must be positive, got {theta}")
    if mu_chem >= 0:
        raise InputError(f"Chemical potential must be negative, got {mu_chem}")
    n_tau = int(round(beta / theta))
    if n_tau < 1 or abs(n_tau * theta - beta) > 1e-9 * max(1.0, beta):
        raise InputError(f"beta={beta} is not a positive multiple of theta={theta}")

    h = dispersion_matrix(space, h_hat, hopping)
    j = linalg.expm(-theta * (h - mu_chem * np.eye(space.size)))
    shift = np.roll(np.eye(n_tau), 1, axis=1)  # shift[tau, tau + 1] = 1
    return np.eye(n_tau * space.size) - np.kron(shift, j)


def complex_to_real_covariance(complex_cov: np.ndarray) -> np.ndarray:
    """
    Real two-component field covariance of a complex field:
    1/2 [[C + C^T, i(C - C^T)], [-i(C - C^T), C + C^T]], reordered so that
    site x carries components (0, 1) at rows 2x, 2x + 1. Unitarily similar
    to diag(C, C^T).
    """
    c = np.asarray(complex_cov, dtype=complex)
    n = c.shape[0]
    sym, anti = c + c.T, c - c.T
    block = 0.5 * np.block([[sym, 1j * anti], [-1j * anti, sym]])
    order = np.array([k for x in range(n) for k in (x, n + x)])
    return block[np.ix_(order, order)]


def build_many_boson_covariance(
    space: Lattice,
    theta: float,
    mu_chem: float,
    beta: float,
    h_hat: Optional[Callable[[np.ndarray], float]] = None,
    hopping: float = 1.0,
) -> Covariance:
    """
    Many-boson propagator as a symmetric complex covariance of N = 2 real
    fields on the space-time lattice.

    Raises:
        ModelError: Re sigma(C^-1) dips below 1 - e^{theta mu_chem}
    """
    inverse = many_boson_inverse(space, theta, mu_chem, beta, h_hat, hopping)
    spectrum_min = float(np.min(np.linalg.eigvals(inverse).real))
    floor = 1.0 - np.exp(theta * mu_chem)
    if spectrum_min < floor - 1e-8:
        raise ModelError(
            "Many-boson inverse propagator spectrum leaves Re z >= 1 - e^{theta mu}",
            {"min_real": spectrum_min, "floor": float(floor)},
        )
    n_tau = int(round(beta / theta))
    lattice = space_time_lattice(space, n_tau, components=2)
    real_field = complex_to_real_covariance(np.linalg.inv(inverse))
    logger.info(f"Many-boson covariance: {n_tau}x{space.size} sites, min Re spectrum {spectrum_min:.6g}")
    return make_covariance(lattice, real_field, CovarianceKind.MANY_BOSON)


def effective_decay_mass(covariance: Covariance, source: int = 0, component: int = 0) -> Optional[float]:
    """
    Fitted decay rate of |C((source, c), (x, c))| against d(source, x); None
    with fewer than three distinct distances or vanishing entries.
    """
    lattice = covariance.lattice
    best = {}
    for site in lattice.sites:
        d = round(float(lattice.metric[source, site]), 12)
        value = abs(covariance.entry(source, component, site, component))
        best[d] = max(best.get(d, 0.0), value)
    distances = sorted(best)
    values = np.array([best[d] for d in distances])
    if len(distances) < 3 or np.any(values <= 1e-300):
        return None
    fit = stats.linregress(distances, np.log(values))
    return float(-fit.slope)


def gaussian_box_bound_check(
    covariance: Covariance,
    point: InterpolationPoint,
    large_field_sites: Iterable[int],
    r: float,
    constant: float = 1.0,
    radial_order: int = 16,
    panels: int = 4,
    angular_order: int = 8,
) -> GaussianBoundReport:
    """
    |det 2 pi C_s|^{-1/2} integral over {|phi(x)| > r on Q} of
    exp(-1/2 <phi, (Re C_s^-1 - mu/4) phi>), against c^|X| e^{-|Q| mu r^2/4}.
    """
    sites = point.ground_set
    Q = sorted(set(large_field_sites))
    if not set(Q) <= set(sites):
        raise InputError("Large-field sites must lie in the interpolation ground set")
    N = covariance.lattice.components
    interpolated = hadamard_interpolate(covariance, point).matrix
    inverse = np.linalg.inv(interpolated)
    re_inv = 0.5 * (inverse.real + inverse.real.T)
    A = re_inv - 0.25 * covariance.mu * np.eye(len(re_inv))
    width = r + 10.0 * np.sqrt(1.0 / np.linalg.eigvalsh(A).min())

    rules = [
        site_rule(N, SiteRegion(r if x in Q else 0.0, width), radial_order, panels, angular_order)
        for x in sites
    ]
    integral = 0.0
    for points, weights in iter_tensor_chunks(rules):
        quad = np.einsum("pi,ij,pj->p", points, A, points)
        integral += float(np.dot(weights, np.exp(-0.5 * quad)))
    measured = float(abs(np.linalg.det(2.0 * np.pi * interpolated)) ** -0.5 * integral)
    bound = float(constant ** len(sites) * np.exp(-len(Q) * covariance.mu * r * r / 4.0))
    return GaussianBoundReport(
        sites=list(sites),
        large_field_sites=Q,
        measured=measured,
        bound=bound,
        constant=constant,
        holds=measured <= bound,
    )


def random_normal_covariance(
    lattice: Lattice,
    rng: np.random.Generator,
    real_range=(0.5, 2.0),
    imag_scale: float = 0.5,
) -> Covariance:
    """
    O diag(lambda) O^T with a Haar-random real orthogonal O and eigenvalues
    of real part in `real_range`: complex symmetric, normal, with positive
    definite Re C and Re C^-1.
    """
    dim = lattice.dof
    orthogonal = stats.ortho_group.rvs(dim, random_state=rng) if dim > 1 else np.ones((1, 1))
    eigenvalues = rng.uniform(*real_range, size=dim) + 1j * imag_scale * rng.uniform(-1.0, 1.0, size=dim)
    matrix = orthogonal @ np.diag(eigenvalues) @ orthogonal.T
    return make_covariance(lattice, matrix, CovarianceKind.EXPLICIT)
