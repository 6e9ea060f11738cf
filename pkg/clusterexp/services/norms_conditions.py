"""
Norms and Conditions Service
Weighted kernel norms, the omega stability profile and the report of the
convergence hypotheses for a model
"""

import logging
from typing import Dict, List, Optional

import numpy as np

from clusterexp.config import get_settings
from clusterexp.errors import InputError, StabilityError
from clusterexp.models.hypotheses import ConditionEntry, HypothesisParams, HypothesisReport, OmegaParams
from clusterexp.models.lattice import Lattice
from clusterexp.models.model import Model
from clusterexp.services.interaction import positivity_check, v1_tree_norm
from clusterexp.services.lattice_geometry import geometric_constant_cg_prime

logger = logging.getLogger(__name__)

POSITIVITY_SAMPLES = 200


class NormFlavor:
    """Kernel norm flavors"""
    ONE_INF = "one-inf"
    INF = "inf"

    @classmethod
    def all(cls) -> List[str]:
        return [cls.ONE_INF, cls.INF]


def _distance_table(lattice: Lattice, shape) -> np.ndarray:
    if shape == (lattice.size, lattice.size):
        return lattice.metric
    if shape == (lattice.dof, lattice.dof):
        return np.kron(lattice.metric, np.ones((lattice.components, lattice.components)))
    raise InputError(f"Kernel of shape {shape} matches neither sites nor field components of the lattice")


def kernel_norm(A: np.ndarray, lattice: Lattice, m: float, flavor: str = NormFlavor.ONE_INF) -> float:
    """
    Exponentially weighted kernel norm.

    Args:
        A: Kernel over sites (|L| x |L|) or over (site, component) pairs
        lattice: Metric
        m: Decay weight, m >= 0
        flavor: "one-inf" for sup_x sum_y, "inf" for sup_{x,y}

    Returns:
        sup_x sum_y e^{m d(x,y)} |A(x,y)|, or sup_{x,y} e^{m d(x,y)} |A(x,y)|
    """
    if m < 0:
        raise InputError(f"Norm weight must be >= 0, got {m}")
    if flavor not in NormFlavor.all():
        raise InputError(f"Unknown norm flavor: {flavor}")
    A = np.asarray(A)
    weighted = np.exp(m * _distance_table(lattice, A.shape)) * np.abs(A)
    if flavor == NormFlavor.INF:
        return float(weighted.max(initial=0.0))
    return float(weighted.sum(axis=1).max(initial=0.0))


def omega_profile(r_prime: float, params: OmegaParams, v1: float, r: float, R: float) -> float:
    """
    omega(r') = w^-delta ((1/v1 + r') / (1/v1 + R))^d for r <= r' <= R.

    Raises:
        InputError: r' outside [r, R]
    """
    if not r - 1e-12 <= r_prime <= R + 1e-12:
        raise InputError(f"omega profile is defined on [{r}, {R}], got r'={r_prime}")
    ratio = (1.0 / v1 + r_prime) / (1.0 / v1 + R)
    return float(params.w ** (-params.delta) * ratio ** params.d)


def _entry(name: str, lhs: float, rhs: float, relation: str = "<=", note: Optional[str] = None) -> ConditionEntry:
    if relation == "<=":
        passed, margin = lhs <= rhs, rhs - lhs
    else:
        passed, margin = lhs >= rhs, lhs - rhs
    return ConditionEntry(
        name=name,
        lhs=float(lhs),
        rhs=float(rhs),
        relation=relation,
        passed=bool(passed),
        margin=float(margin),
        note=note,
    )


def single_site_variation(model: Model) -> float:
    """
    max_x of the total variation |mu_{C(x,x)}| of the one-site Gaussian
    measure: (|det C_xx| det Re C_xx^-1)^{-1/2}; equal to 1 for real C.
    """
    worst = 0.0
    for x in model.lattice.sites:
        block = model.covariance.block([x])
        re_inverse = np.linalg.inv(block).real
        re_inverse = 0.5 * (re_inverse + re_inverse.T)
        value = (abs(np.linalg.det(block)) * np.linalg.det(re_inverse)) ** -0.5
        worst = max(worst, float(value))
    return worst


def check_hypotheses(model: Model, params: HypothesisParams) -> HypothesisReport:
    """
    Evaluate the convergence hypotheses with both sides of every inequality.

    The kinetic-dominance condition mu r^2 >= 16 omega(R) c_g'(log omega(R) / m_V),
    the two-body bounds on v_half, the tree-decay bound of V1 against omega
    on a grid of r' in [r, R], and the small-field positivity scale. R = None
    (infinity) forces omega = 0, so V1 must vanish.
    """
    lattice = model.lattice
    mu = params.mu if params.mu is not None else model.covariance.mu
    r, R = params.r, params.R
    m_dot = params.m_dot
    conditions: List[ConditionEntry] = []

    if R is not None and not r < R:
        raise InputError(f"Hypotheses need r < R (r={r}, R={R})")

    # stability profile
    if R is None:
        omega_r = omega_R = 0.0
    else:
        omega_r = omega_profile(r, params.omega, params.v1, r, R)
        omega_R = omega_profile(R, params.omega, params.v1, r, R)
    conditions.append(_entry("omega_at_small_field_radius", omega_r, 1.0))

    # kinetic term dominates V1 on both field regions
    if omega_R > 0:
        a = np.log(omega_R) / params.m_V
        cg_prime = geometric_constant_cg_prime(lattice, a, params.max_Q).sup_ratio if a > 0 else 1.0
    else:
        a, cg_prime = 0.0, 1.0
    conditions.append(
        _entry(
            "kinetic_dominance",
            mu * r * r,
            16.0 * omega_R * cg_prime,
            ">=",
            note=f"c_g'({a:.4g}) = {cg_prime:.4g}",
        )
    )

    # two-body potential
    two_body = model.interaction.two_body
    v_half = two_body.v_half if two_body is not None else np.zeros((lattice.size, lattice.size))
    min_eig = float(np.linalg.eigvalsh(v_half).min()) if v_half.size else 0.0
    conditions.append(_entry("two_body_min_eigenvalue", min_eig, params.c_v * np.sqrt(params.v2), ">="))
    conditions.append(_entry("two_body_decay_norm", kernel_norm(v_half, lattice, 2.0 * m_dot), np.sqrt(params.v2)))
    conditions.append(
        _entry("source_coupling", abs(model.interaction.source_coeff), params.lambda_J * params.v2 ** 0.25)
    )

    if two_body is not None and params.v2 > 0:
        lambda_phi = np.sqrt(params.c_v) * params.v2 ** 0.25
        try:
            report = positivity_check(
                two_body,
                lattice,
                lambda_phi,
                POSITIVITY_SAMPLES,
                params.c_pos,
                params.c_pos_prime,
                seed=get_settings().seed,
            )
            conditions.append(_entry("two_body_positivity", report.min_margin, 0.0, ">=", note=f"lambda_phi = {lambda_phi:.4g}"))
        except StabilityError as e:
            conditions.append(
                _entry("two_body_positivity", e.payload["rhs"] - e.payload["lhs"], 0.0, ">=", note="violated at a sampled field")
            )

    # tree-decay norm of V1 against omega on [r, R]
    kernel = model.interaction.kernel
    if R is None:
        lhs = v1_tree_norm(kernel, lattice, r + 1.0 / params.v1, params.lambda_J, m_dot)
        conditions.append(_entry("v1_tree_norm", lhs, 0.0, note="R = infinity requires V1 = 0"))
    else:
        worst: Optional[ConditionEntry] = None
        for r_prime in np.linspace(r, R, params.r_grid):
            lhs = v1_tree_norm(kernel, lattice, r_prime + 1.0 / params.v1, params.lambda_J, m_dot)
            entry = _entry("v1_tree_norm", lhs, omega_profile(r_prime, params.omega, params.v1, r, R), note=f"r' = {r_prime:.4g}")
            if worst is None or entry.margin < worst.margin:
                worst = entry
        conditions.append(worst)

    # small-field positivity scale against the single-site measure
    variation = single_site_variation(model)
    threshold = 2.0 ** (-lattice.components) / variation * np.exp(-params.c_blocact)
    conditions.append(_entry("small_field_positivity", np.exp(-mu * r * r / 4.0), threshold))

    inputs: Dict[str, Optional[float]] = {
        "mu": mu,
        "r": r,
        "R": R,
        "v1": params.v1,
        "v2": params.v2,
        "lambda_J": params.lambda_J,
        "m": params.m,
        "m_V": params.m_V,
        "m_dot": m_dot,
        "c_v": params.c_v,
        "c_pos": params.c_pos,
        "c_pos_prime": params.c_pos_prime,
        "c_blocact": params.c_blocact,
        "omega_w": params.omega.w,
        "omega_delta": params.omega.delta,
        "omega_d": params.omega.d,
    }
    all_pass = all(c.passed for c in conditions)
    failed = [c.name for c in conditions if not c.passed]
    logger.info(f"Hypotheses: {len(conditions) - len(failed)}/{len(conditions)} pass" + (f", failing {failed}" if failed else ""))
    return HypothesisReport(conditions=conditions, inputs=inputs, all_pass=all_pass)
