"""
Activities Service
Polymer integrals Z_X(s; J) on cached tensor rules, the tree-summed
activities A(X; J) with finite-difference or integration-by-parts
s-derivatives, and the small/large-field activities A_s(Z; J), B(X, Q; J)
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from clusterexp.config import get_settings
from clusterexp.errors import ConsistencyError, InputError, NumericError, ResourceError
from clusterexp.models.expansion import DerivativeBackend, LargeFieldTables, Polymer, PolymerTable
from clusterexp.models.graphs import InterpolationPoint
from clusterexp.models.model import Model
from clusterexp.services.covariance import gaussian_normalizer, is_admissible
from clusterexp.services.graph_combinatorics import enumerate_trees, integrate_simplices, interpolation_table
from clusterexp.services.interaction import term_tree_edges
from clusterexp.utils.finite_difference import mixed_partial
from clusterexp.utils.quadrature import SiteRegion, SiteRule, shell_rule, site_rule, tensor_product

logger = logging.getLogger(__name__)

BACKEND_TOLERANCE = 1e-6


def as_source_batch(J: np.ndarray, model: Model) -> np.ndarray:
    """Sources as (batch, sites, N); a single (sites, N) source becomes a batch of one."""
    J = np.asarray(J, dtype=float)
    shape = (model.lattice.size, model.lattice.components)
    if J.shape == shape:
        return J[None]
    if J.ndim != 3 or J.shape[1:] != shape:
        raise InputError(f"Source must have shape {shape} or (batch, *{shape}), got {J.shape}")
    return J


def site_regions(model: Model, split_radius: Optional[float] = None) -> List[SiteRegion]:
    """
    Per-site regions, labelled by position: [ball R] or, split at r,
    [ball r, annulus (r, R]].
    """
    outer = model.box_half_width
    boundary = model.outer_is_boundary
    if split_radius is None:
        return [SiteRegion(0.0, outer, boundary)]
    if not 0 < split_radius < outer:
        raise InputError(f"Split radius {split_radius} must lie in (0, {outer})")
    return [SiteRegion(0.0, split_radius, True), SiteRegion(split_radius, outer, boundary)]


def box_tail_estimate(model: Model) -> Optional[float]:
    """
    Gaussian mass cut off by the box when R is infinite: per site the
    chi-square tail of mu |phi|^2 beyond mu * box^2 with N degrees of
    freedom, summed over sites. None when the box edge is the real boundary.
    """
    if model.outer_is_boundary:
        return None
    threshold = model.covariance.mu * model.box_half_width ** 2
    return float(model.lattice.size * stats.chi2.sf(threshold, df=model.lattice.components))


def rule_panel_width(model: Model) -> float:
    """Radial panel width shared by every region of every site."""
    return model.box_half_width / model.quadrature.panels


def labelled_site_rule(model: Model, split_radius: Optional[float], panel_width: float) -> SiteRule:
    """One site's rule over its regions, the region label carried as an extra coordinate."""
    quad = model.quadrature
    N = model.lattice.components
    parts = [
        site_rule(N, region, quad.radial_order, quad.panels, quad.angular_order, panel_width)
        for region in site_regions(model, split_radius)
    ]
    return SiteRule(
        np.concatenate([np.hstack([p.nodes, np.full((p.size, 1), label)]) for label, p in enumerate(parts)]),
        np.concatenate([p.weights for p in parts]),
    )


def enumerate_polymers(sites: Sequence[int], max_size: int) -> List[Polymer]:
    """Nonempty subsets up to max_size, by size then lexicographically."""
    sites = sorted(sites)
    return [
        frozenset(c)
        for size in range(1, min(max_size, len(sites)) + 1)
        for c in itertools.combinations(sites, size)
    ]


class PolymerIntegrand:
    """
    Tensor rule over the sites of X with every s-independent field
    monomial precomputed, so that Z_X(s; J) for a pair table s and a batch
    of sources costs one exponential per node.

    With a split radius each node is tagged with the set of sites in the
    annulus; `evaluate` then returns one integral per tag pattern
    (bit i set = i-th site of X in the large-field region).

    `refine_site` halves the panel width on that site only; the refined
    integral measures the rule error contributed by the site.
    """

    def __init__(
        self,
        model: Model,
        sites,
        split_radius: Optional[float] = None,
        refine_site: Optional[int] = None,
    ):
        self.model = model
        self.sites = tuple(sorted(sites))
        self.k = len(self.sites)
        self.components = N = model.lattice.components
        self.dim = self.k * N
        cap = get_settings().cubature_dimension_cap
        if self.dim > cap:
            raise ResourceError(
                f"Polymer integral of dimension {self.dim} exceeds cubature cap {cap}",
                {"sites": list(self.sites), "dimension": self.dim, "cap": cap},
            )

        quad = model.quadrature
        width = rule_panel_width(model)
        rules = [labelled_site_rule(model, split_radius, width)] * self.k
        budget = quad.node_budget
        if refine_site is not None:
            rules[refine_site] = labelled_site_rule(model, split_radius, width / 2.0)
            budget *= 2
        points, self.weights = tensor_product(rules, budget)
        points = points.reshape(len(self.weights), self.k, N + 1)
        self.phi = points[:, :, :N].reshape(len(self.weights), self.dim)
        labels = points[:, :, N].astype(int)

        self.n_patterns = 1 << self.k if split_radius is not None else 1
        patterns = labels @ (1 << np.arange(self.k)) if split_radius is not None else np.zeros(len(labels), int)
        self.tags = np.zeros((self.n_patterns, len(self.weights)))
        self.tags[patterns, np.arange(len(self.weights))] = 1.0

        self.iu = np.triu_indices(self.dim)
        self.pair_products = self.phi[:, self.iu[0]] * self.phi[:, self.iu[1]]
        self.pair_factor = np.where(self.iu[0] == self.iu[1], 1.0, 2.0)

        q = np.sum(self.phi.reshape(-1, self.k, N) ** 2, axis=-1)
        self.ju = np.triu_indices(self.k)
        self.q_products = q[:, self.ju[0]] * q[:, self.ju[1]]
        self.q_factor = np.where(self.ju[0] == self.ju[1], 1.0, 2.0)

        interaction = model.interaction
        self.source_coeff = interaction.source_coeff
        two_body = interaction.two_body
        self.v_half = None
        if two_body is not None and not two_body.is_quartic_free:
            self.v_half = two_body.v_half[np.ix_(self.sites, self.sites)]

        self.single = np.zeros(len(self.weights), dtype=complex)
        polynomial = interaction.single_site
        if polynomial is not None:
            for i, x in enumerate(self.sites):
                if polynomial.sites is None or x in polynomial.sites:
                    scaled = polynomial.lambda_phi ** 2 * q[:, i]
                    for power, c in enumerate(polynomial.coeffs, start=1):
                        self.single += c * scaled ** power

        self.local = {x: i for i, x in enumerate(self.sites)}
        self.terms = interaction.kernel.restricted(self.sites).terms
        self.term_edges = [
            [(self.local[a], self.local[b]) for a, b in term_tree_edges(model.lattice, term)] for term in self.terms
        ]
        self.monomials = np.ones((len(self.weights), len(self.terms)))
        for column, term in enumerate(self.terms):
            for site, comp in term.xi.entries:
                self.monomials[:, column] *= self.phi[:, self.local[site] * N + comp]
        logger.debug(f"Integrand for {list(self.sites)}: {len(self.weights)} nodes, {self.n_patterns} patterns")

    @property
    def nodes(self) -> int:
        return len(self.weights)

    def covariance_at(self, values: np.ndarray) -> np.ndarray:
        """C_s on X for a pair table over the sites of X."""
        N = self.components
        return self.model.covariance.block(self.sites) * np.kron(values, np.ones((N, N)))

    def admissible(self, values: np.ndarray) -> bool:
        return is_admissible(self.covariance_at(values))

    def term_weights(self, values: np.ndarray, J_batch: np.ndarray) -> np.ndarray:
        """(terms, batch): v1 coefficient x MST s-product x J^zeta"""
        weights = np.empty((len(self.terms), len(J_batch)), dtype=complex)
        for row, (term, edges) in enumerate(zip(self.terms, self.term_edges)):
            tree = np.prod([values[i, j] for i, j in edges]) if edges else 1.0
            sources = np.ones(len(J_batch))
            for site, comp in term.zeta.entries:
                sources = sources * J_batch[:, site, comp]
            weights[row] = term.coeff * tree * sources
        return weights

    def evaluate(self, values: np.ndarray, J_batch: np.ndarray) -> np.ndarray:
        """
        Z_X(s; J) per tag pattern and source.

        Returns:
            (patterns, batch) complex array
        """
        C_s = self.covariance_at(values)
        normalizer = gaussian_normalizer(C_s)
        inverse = np.linalg.inv(C_s)
        exponent = -0.5 * (self.pair_products @ (inverse[self.iu] * self.pair_factor))
        if self.v_half is not None:
            K = self.v_half * values ** 2
            G = K.T @ K
            exponent = exponent - self.q_products @ (G[self.ju] * self.q_factor)
        exponent = exponent + self.single

        sources = J_batch[:, list(self.sites), :].reshape(len(J_batch), self.dim)
        exponent = exponent[:, None] + self.phi @ (-self.source_coeff * sources).T
        if self.terms:
            exponent = exponent + self.monomials @ self.term_weights(values, J_batch)
        integrand = np.exp(exponent) * self.weights[:, None]
        return normalizer * (self.tags @ integrand)


class PairIbpIntegrand:
    """
    dZ_X/ds for X = {x, y} by Gaussian integration by parts:
    dZ/ds = int dmu_{C_s} chi e^V dV/ds
            + sum_{m,n} C((x,m),(y,n)) int dmu_{C_s} d_{xm} d_{yn} (chi_x chi_y e^V),
    with the derivatives of the characteristic functions integrated on
    their spheres (outer sphere weight -omega, inner +omega).
    """

    def __init__(self, model: Model, sites, regions: Tuple[SiteRegion, SiteRegion]):
        if len(sites) != 2:
            raise InputError("Integration-by-parts backend handles two-site polymers only")
        self.model = model
        self.sites = tuple(sorted(sites))
        self.components = N = model.lattice.components
        quad = model.quadrature
        width = rule_panel_width(model)
        volumes = [site_rule(N, region, quad.radial_order, quad.panels, quad.angular_order, width) for region in regions]
        shells = []
        for region in regions:
            site_shells = []
            if region.inner > 0:
                site_shells.append((shell_rule(N, region.inner, quad.angular_order), 1.0))
            if region.outer_is_boundary:
                site_shells.append((shell_rule(N, region.outer, quad.angular_order), -1.0))
            shells.append(site_shells)

        self.node_sets = [self._node_set(volumes[0], volumes[1], None, None)]
        for shell, sign in shells[0]:
            self.node_sets.append(self._node_set(shell, volumes[1], (shell, sign), None))
        for shell, sign in shells[1]:
            self.node_sets.append(self._node_set(volumes[0], shell, None, (shell, sign)))
        for (sx, gx), (sy, gy) in itertools.product(shells[0], shells[1]):
            self.node_sets.append(self._node_set(sx, sy, (sx, gx), (sy, gy)))

        two_body = model.interaction.two_body
        self.v_half = None
        if two_body is not None and not two_body.is_quartic_free:
            self.v_half = two_body.v_half[np.ix_(self.sites, self.sites)]
        self.source_coeff = model.interaction.source_coeff
        self.cross = model.covariance.block(self.sites)[:N, N:]
        self.local = {x: i for i, x in enumerate(self.sites)}
        self.terms = model.interaction.kernel.restricted(self.sites).terms

    @staticmethod
    def _as_rule(rule) -> SiteRule:
        return SiteRule(rule.nodes, rule.weights)

    def _node_set(self, rule_x, rule_y, shell_x, shell_y) -> dict:
        points, weights = tensor_product([self._as_rule(rule_x), self._as_rule(rule_y)])
        size_x, size_y = len(rule_x.weights), len(rule_y.weights)
        N = self.components
        # sign * omega per node; zero when the site is a volume factor
        normals_x = np.zeros((len(weights), N))
        normals_y = np.zeros((len(weights), N))
        if shell_x is not None:
            normals_x = shell_x[1] * np.repeat(shell_x[0].normals, size_y, axis=0)
        if shell_y is not None:
            normals_y = shell_y[1] * np.tile(shell_y[0].normals, (size_x, 1))
        return {
            "phi": points,
            "weights": weights,
            "normals_x": normals_x,
            "normals_y": normals_y,
            "kind": (shell_x is not None, shell_y is not None),
        }

    def _monomial(self, phi: np.ndarray, entries, skip=()) -> np.ndarray:
        N = self.components
        value = np.ones(len(phi))
        for i, (site, comp) in enumerate(entries):
            if i not in skip:
                value = value * phi[:, self.local[site] * N + comp]
        return value

    def _field_terms(self, phi: np.ndarray, s: float, J_batch: np.ndarray):
        """V, grad V, the x-y block of the Hessian of V and dV/ds at every node."""
        N = self.components
        M, B = len(phi), len(J_batch)
        q = np.stack([np.sum(phi[:, :N] ** 2, axis=1), np.sum(phi[:, N:] ** 2, axis=1)], axis=1)
        V = np.zeros((M, B), dtype=complex)
        grad = np.zeros((M, 2 * N, B), dtype=complex)
        hess = np.zeros((M, N, N, B), dtype=complex)
        dV_ds = np.zeros((M, B), dtype=complex)

        if self.v_half is not None:
            values = np.array([[1.0, s], [s, 1.0]])
            K = self.v_half * values ** 2
            U = q @ K.T
            V += -np.sum(U ** 2, axis=1)[:, None]
            UK = U @ K
            for i in range(2):
                grad[:, i * N:(i + 1) * N, :] += (-4.0 * phi[:, i * N:(i + 1) * N] * UK[:, i:i + 1])[:, :, None]
            hess += (-8.0 * (K.T @ K)[0, 1] * phi[:, :N, None] * phi[:, None, N:])[..., None]
            coupling = 2.0 * s * self.v_half[0, 1]
            dV_ds += (-2.0 * U[:, 0] * coupling * q[:, 1] - 2.0 * U[:, 1] * coupling * q[:, 0])[:, None]

        sources = J_batch[:, list(self.sites), :].reshape(B, 2 * N)
        V += phi @ (-self.source_coeff * sources).T
        grad += (-self.source_coeff * sources.T)[None, :, :]

        polynomial = self.model.interaction.single_site
        if polynomial is not None:
            lam2 = polynomial.lambda_phi ** 2
            for i, x in enumerate(self.sites):
                if polynomial.sites is not None and x not in polynomial.sites:
                    continue
                block = slice(i * N, (i + 1) * N)
                for power, c in enumerate(polynomial.coeffs, start=1):
                    V += (c * (lam2 * q[:, i]) ** power)[:, None]
                    dq = c * power * lam2 ** power * q[:, i] ** (power - 1)
                    grad[:, block, :] += (2.0 * dq[:, None] * phi[:, block])[:, :, None]

        for term in self.terms:
            spans = len(term.support) == 2
            base = term.coeff * np.ones(B, dtype=complex)
            for site, comp in term.zeta.entries:
                base = base * J_batch[:, site, comp]
            tree = s if spans else 1.0
            entries = term.xi.entries
            mono = self._monomial(phi, entries)
            V += tree * mono[:, None] * base[None, :]
            if spans:
                dV_ds += mono[:, None] * base[None, :]
            dofs = [self.local[site] * N + comp for site, comp in entries]
            for d in set(dofs):
                deriv = sum(self._monomial(phi, entries, skip=(i,)) for i, e in enumerate(dofs) if e == d)
                grad[:, d, :] += tree * deriv[:, None] * base[None, :]
            for i, a in enumerate(dofs):
                for j, b in enumerate(dofs):
                    if i != j and a < N <= b:
                        mixed = self._monomial(phi, entries, skip=(i, j))
                        hess[:, a, b - N, :] += tree * mixed[:, None] * base[None, :]
        return V, grad, hess, dV_ds

    def derivative(self, s: float, J_batch: np.ndarray) -> np.ndarray:
        """dZ_X/ds at the one-edge point with pair value s; (batch,) array"""
        N = self.components
        values = np.array([[1.0, s], [s, 1.0]])
        C_s = self.model.covariance.block(self.sites) * np.kron(values, np.ones((N, N)))
        normalizer = gaussian_normalizer(C_s)
        inverse = np.linalg.inv(C_s)
        total = np.zeros(len(J_batch), dtype=complex)
        for nodes in self.node_sets:
            phi = nodes["phi"]
            if len(phi) == 0:
                continue
            density = normalizer * np.exp(-0.5 * np.einsum("pi,ij,pj->p", phi, inverse, phi)) * nodes["weights"]
            V, grad, hess, dV_ds = self._field_terms(phi, s, J_batch)
            weight = density[:, None] * np.exp(V)
            shell_x, shell_y = nodes["kind"]
            # factors standing in for d_{xm} and d_{yn} acting on chi e^V
            shape = (len(phi), N, len(J_batch))
            fx = np.broadcast_to(nodes["normals_x"][:, :, None], shape) if shell_x else grad[:, :N, :]
            fy = np.broadcast_to(nodes["normals_y"][:, :, None], shape) if shell_y else grad[:, N:, :]
            cross = np.einsum("mn,pmb,pnb->pb", self.cross, fx, fy)
            if not (shell_x or shell_y):
                cross = cross + np.einsum("mn,pmnb->pb", self.cross, hess) + dV_ds
            total += np.sum(weight * cross, axis=0)
        return total


class ActivityEvaluator:
    """
    Activities of one model. Integrands are cached per (X, split radius) and
    shared by every source in a batch.
    """

    def __init__(self, model: Model, backend: str = DerivativeBackend.FD, cross_check: bool = True):
        if backend not in DerivativeBackend.all():
            raise InputError(f"Unknown derivative backend: {backend}")
        self.model = model
        self.backend = backend
        self.cross_check = cross_check
        self._integrands: Dict[Tuple[Tuple[int, ...], Optional[float]], PolymerIntegrand] = {}

    def integrand(self, sites, split_radius: Optional[float] = None) -> PolymerIntegrand:
        key = (tuple(sorted(sites)), split_radius)
        if key not in self._integrands:
            self._integrands[key] = PolymerIntegrand(self.model, key[0], split_radius)
        return self._integrands[key]

    def polymer_Z(self, sites, point: InterpolationPoint, J: np.ndarray, split_radius: Optional[float] = None) -> np.ndarray:
        """Z_X(s; J) as (patterns, batch)."""
        integrand = self.integrand(sites, split_radius)
        values = point.restrict(integrand.sites).values
        if not integrand.admissible(values):
            raise NumericError("Re C_s^-1 is not positive definite at the requested point")
        return integrand.evaluate(values, as_source_batch(J, self.model))

    def activity(self, sites, J: np.ndarray, split_radius: Optional[float] = None) -> Tuple[np.ndarray, float]:
        """
        A(X; J) = sum over spanning trees T of X of the integral over
        [0,1]^T of (prod_{l in T} d/ds(l)) Z_X at s^T.

        Returns:
            ((patterns, batch) values, residual): the larger of the
            s-cubature change and the per-site rule residual

        Raises:
            NumericError: either residual above quadrature.residual_tol
        """
        J_batch = as_source_batch(J, self.model)
        sites = tuple(sorted(sites))
        integrand = self.integrand(sites, split_radius)
        rule_residual = self.rule_residual(sites, J_batch, split_radius)
        if len(sites) == 1:
            return integrand.evaluate(np.ones((1, 1)), J_batch), rule_residual

        value, residual = self._tree_activity(integrand, J_batch, split_radius)
        return value, max(residual, rule_residual)

    def rule_residual(self, sites, J_batch: np.ndarray, split_radius: Optional[float] = None) -> float:
        """
        Change of Z_X(s = 1) when one site's panels are halved, summed over
        the sites of X and maximized over patterns and sources.

        Raises:
            NumericError: change above residual_tol * max(1, |Z_X|)
        """
        integrand = self.integrand(sites, split_radius)
        ones = np.ones((integrand.k, integrand.k))
        base = integrand.evaluate(ones, J_batch)
        residual = 0.0
        for i in range(integrand.k):
            refined = PolymerIntegrand(self.model, integrand.sites, split_radius, refine_site=i)
            residual += float(np.max(np.abs(refined.evaluate(ones, J_batch) - base)))
        allowed = self.model.quadrature.residual_tol * max(1.0, float(np.max(np.abs(base))))
        if residual > allowed:
            raise NumericError(
                f"Per-site rule for {list(integrand.sites)} changes by {residual:.3e} under refinement",
                {"sites": list(integrand.sites), "residual": residual, "allowed": allowed},
            )
        logger.debug(f"Rule residual of {list(integrand.sites)}: {residual:.2e}")
        return residual

    def _tree_activity(
        self, integrand: PolymerIntegrand, J_batch: np.ndarray, split_radius: Optional[float]
    ) -> Tuple[np.ndarray, float]:
        sites = integrand.sites
        if self.backend == DerivativeBackend.IBP and len(sites) == 2:
            value, residual = self._ibp_activity(sites, J_batch, split_radius)
            if self.cross_check:
                reference, fd_residual = self._fd_activity(integrand, J_batch)
                gap = float(np.max(np.abs(value - reference)))
                allowed = max(BACKEND_TOLERANCE, 10.0 * max(residual, fd_residual)) * max(1.0, float(np.max(np.abs(value))))
                if gap > allowed:
                    raise ConsistencyError(
                        f"fd and ibp activities of {list(sites)} disagree by {gap:.3e}",
                        {"sites": list(sites), "gap": gap, "allowed": allowed},
                    )
                logger.debug(f"Backends agree on {list(sites)} within {gap:.2e}")
            return value, residual
        return self._fd_activity(integrand, J_batch)

    def _fd_activity(self, integrand: PolymerIntegrand, J_batch: np.ndarray) -> Tuple[np.ndarray, float]:
        quad = self.model.quadrature
        sites = integrand.sites
        local = integrand.local
        shape = (integrand.n_patterns, len(J_batch))
        total = np.zeros(shape, dtype=complex)
        residual = 0.0

        for tree in enumerate_trees(sites):
            edges = tree.sorted_edges
            pairs = [(local[a], local[b]) for a, b in edges]

            def derivative_at(coords: np.ndarray) -> np.ndarray:
                base = interpolation_table(tree, dict(zip(edges, coords)), sites)

                def table(point: np.ndarray) -> np.ndarray:
                    values = base.copy()
                    for (i, j), v in zip(pairs, point):
                        values[i, j] = values[j, i] = v
                    return values

                def evaluate(points: np.ndarray) -> np.ndarray:
                    return np.stack([integrand.evaluate(table(p), J_batch).ravel() for p in points])

                def valid(points: np.ndarray) -> bool:
                    return all(integrand.admissible(table(p)) for p in points)

                step = min([quad.fd_step] + [min(c, 1.0 - c) / 2.0 for c in coords])
                value, _ = mixed_partial(evaluate, coords, list(range(len(pairs))), step, True, valid)
                return value

            def integrand_s(u: np.ndarray) -> np.ndarray:
                return np.stack([derivative_at(coords) for coords in u])

            value, tree_residual = integrate_simplices(
                integrand_s, len(edges), quad.s_order, quad.s_rel_tol, quad.s_max_order, fail_tol=quad.residual_tol
            )
            total += np.reshape(value, shape)
            residual = max(residual, tree_residual)
        return total, residual

    def _ibp_activity(self, sites, J_batch: np.ndarray, split_radius: Optional[float]) -> Tuple[np.ndarray, float]:
        quad = self.model.quadrature
        regions = site_regions(self.model, split_radius)
        n_patterns = 1 << len(sites) if split_radius is not None else 1
        values = np.zeros((n_patterns, len(J_batch)), dtype=complex)
        residual = 0.0
        for pattern in range(n_patterns):
            labels = [(pattern >> i) & 1 for i in range(len(sites))]
            pair = PairIbpIntegrand(self.model, sites, (regions[labels[0]], regions[labels[1]]))

            def integrand_s(u: np.ndarray) -> np.ndarray:
                return np.stack([pair.derivative(float(s), J_batch) for s in u[:, 0]])

            value, pattern_residual = integrate_simplices(
                integrand_s, 1, quad.s_order, quad.s_rel_tol, quad.s_max_order, fail_tol=quad.residual_tol
            )
            values[pattern] = value
            residual = max(residual, pattern_residual)
        return values, residual


def polymer_Z(model: Model, sites, point: InterpolationPoint, J: np.ndarray) -> np.ndarray:
    """Z_X(s; J) = int over the box of dmu_{C_s|X} e^{V(phi; s; J)}, one value per source."""
    return ActivityEvaluator(model).polymer_Z(sites, point, J)[0]


def activity(model: Model, sites, J: np.ndarray, backend: str = DerivativeBackend.FD) -> Tuple[np.ndarray, float]:
    """A(X; J) per source, with the s-cubature residual."""
    values, residual = ActivityEvaluator(model, backend).activity(sites, J)
    return values[0], residual


def large_field_activities(
    model: Model,
    sites,
    J: np.ndarray,
    backend: str = DerivativeBackend.FD,
    evaluator: Optional[ActivityEvaluator] = None,
) -> Tuple[np.ndarray, Dict[Polymer, np.ndarray], float]:
    """
    A_s(X; J) (every site in the ball of radius r) and B(X, Q; J) for every
    nonempty Q in X (sites of Q in the annulus r < |phi| <= R).

    Returns:
        (A_s per source, {Q: B per source}, residual)
    """
    if model.r is None:
        raise InputError("Large-field activities need the small-field radius r")
    evaluator = evaluator or ActivityEvaluator(model, backend)
    sites = tuple(sorted(sites))
    values, residual = evaluator.activity(sites, J, split_radius=model.r)
    large = {}
    for pattern in range(1, len(values)):
        Q = frozenset(x for i, x in enumerate(sites) if (pattern >> i) & 1)
        large[Q] = values[pattern]
    return values[0], large, residual


def _run_parallel(function, items, workers: Optional[int]):
    workers = workers or get_settings().effective_workers
    if workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(function, items))


def build_polymer_tables(
    model: Model,
    J: np.ndarray,
    max_size: int,
    backend: str = DerivativeBackend.FD,
    workers: Optional[int] = None,
    evaluator: Optional[ActivityEvaluator] = None,
) -> List[PolymerTable]:
    """Activity tables for every polymer up to max_size, one table per source."""
    J_batch = as_source_batch(J, model)
    evaluator = evaluator or ActivityEvaluator(model, backend)
    polymers = enumerate_polymers(model.lattice.sites, max_size)
    logger.info(f"Computing {len(polymers)} activities for {len(J_batch)} source(s), backend={backend}")

    def compute(X: Polymer):
        values, residual = evaluator.activity(X, J_batch)
        logger.debug(f"A({sorted(X)}) = {complex(values[0, 0]):.6g} (residual {residual:.2e})")
        return values[0], residual

    results = _run_parallel(compute, polymers, workers)
    tables = [PolymerTable(J=J_batch[b]) for b in range(len(J_batch))]
    for X, (values, residual) in zip(polymers, results):
        for b, table in enumerate(tables):
            table.entries[X] = complex(values[b])
            table.residuals[X] = residual
    return tables


def build_large_field_tables(
    model: Model,
    J: np.ndarray,
    max_size: int,
    backend: str = DerivativeBackend.FD,
    workers: Optional[int] = None,
    evaluator: Optional[ActivityEvaluator] = None,
) -> List[LargeFieldTables]:
    """A_s(Z) and B(X, Q) for all polymers up to max_size, one set per source."""
    if model.r is None:
        raise InputError("Large-field tables need the small-field radius r")
    J_batch = as_source_batch(J, model)
    evaluator = evaluator or ActivityEvaluator(model, backend)
    polymers = enumerate_polymers(model.lattice.sites, max_size)
    logger.info(f"Computing large-field activities of {len(polymers)} polymers at r={model.r}, R={model.R}")

    def compute(X: Polymer):
        return large_field_activities(model, X, J_batch, backend, evaluator)

    results = _run_parallel(compute, polymers, workers)
    tables = [
        LargeFieldTables(J=J_batch[b], r=float(model.r), R=float(model.R) if model.R is not None else float("inf"))
        for b in range(len(J_batch))
    ]
    for X, (small, large, residual) in zip(polymers, results):
        for b, table in enumerate(tables):
            table.small_field[X] = complex(small[b])
            for Q, values in large.items():
                table.large_field[(X, Q)] = complex(values[b])
            table.residuals[",".join(map(str, sorted(X)))] = residual
    return tables
