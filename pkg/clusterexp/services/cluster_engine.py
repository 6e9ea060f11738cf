"""
Cluster Engine Service
Orchestrates activity tables and the Mayer assembly into log Z(J) for either
expansion mode, and truncated correlations as J-derivatives of log Z
"""

import logging
import time
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from clusterexp.config import get_settings
from clusterexp.errors import InputError, ResourceError
from clusterexp.models.expansion import (
    CorrelationResult,
    DerivativeBackend,
    ExpansionDiagnostics,
    ExpansionMode,
    ExpansionResult,
    LargeFieldTables,
    PolymerTable,
    Truncation,
)
from clusterexp.models.graphs import InterpolationPoint
from clusterexp.models.model import Model
from clusterexp.services.activities import (
    ActivityEvaluator,
    as_source_batch,
    box_tail_estimate,
    build_large_field_tables,
    build_polymer_tables,
)
from clusterexp.services.lattice_geometry import distances_from
from clusterexp.services.mayer import (
    LargeFieldSeries,
    MayerSeries,
    large_field_series,
    mayer_series,
    normalized_activities,
    partition_sum,
    ursell_gap,
)
from clusterexp.utils.finite_difference import combine_stencil, stencil_points
from clusterexp.utils.serialization import set_key

logger = logging.getLogger(__name__)

MAX_CORRELATION_ORDER = 4
DEFAULT_J_STEP = 0.05

Series = Union[MayerSeries, LargeFieldSeries]
Point = Tuple[int, int]


def _default_truncation(max_size: int, max_order: int) -> Truncation:
    return Truncation(
        max_polymer_size=max_size,
        max_mayer_order=max_order,
        quadrature_budget=get_settings().cubature_node_budget,
    )


def _order_diagnostics(order_terms: np.ndarray, resummation_gap: float, residual: float, branch: bool) -> ExpansionDiagnostics:
    magnitudes = [float(abs(t)) for t in order_terms]
    return ExpansionDiagnostics(
        last_term_magnitudes=magnitudes,
        truncation_estimate=magnitudes[-1] if magnitudes else 0.0,
        resummation_gap=resummation_gap,
        quadrature_residual=residual,
        branch_crossing=branch,
    )


def plain_result(series: MayerSeries, table: PolymerTable, truncation: Truncation, ursell_check: bool = True) -> ExpansionResult:
    """ExpansionResult of an assembled plain Mayer series."""
    diagnostics = _order_diagnostics(
        series.order_terms, series.resummation_gap, table.max_residual(), series.branch_crossing
    )
    if series.branch_crossing:
        logger.warning("Mayer partial sums and resummed log Z differ by more than pi in phase")
    if ursell_check and len(series.order_terms):
        orders = min(truncation.max_mayer_order, get_settings().ursell_cap)
        _, normalized = normalized_activities(table.entries)
        diagnostics.ursell_check = ursell_gap(series, normalized, orders)
    return ExpansionResult(
        mode=ExpansionMode.PLAIN,
        logZ=series.logZ,
        logZ_partial=series.partial_sums(),
        W={set_key(X): w for X, w in sorted(series.W.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))},
        truncation=truncation,
        diagnostics=diagnostics,
    )


def mayer_logZ(
    table: PolymerTable,
    max_order: int,
    truncation: Optional[Truncation] = None,
    ursell_check: bool = True,
) -> ExpansionResult:
    """
    log Z = sum_x log A({x}) + sum_X W(X) from one activity table.

    Args:
        table: Activities at one source, singletons included
        max_order: Highest Mayer order (number of polymer factors) in the partial sums
        truncation: Truncation record; derived from the table when omitted
        ursell_check: Compare each order with the explicit Ursell-weighted sum

    Raises:
        NormalizationError: a single-site activity vanishes
    """
    if truncation is None:
        truncation = _default_truncation(max((len(X) for X in table.entries), default=1), max_order)
    series = mayer_series(table.entries, max_order, sorted(table.sites))
    return plain_result(series, table, truncation, ursell_check)


def large_field_result(series: LargeFieldSeries, tables: LargeFieldTables, truncation: Truncation) -> ExpansionResult:
    """ExpansionResult of an assembled small-field / large-field series."""
    partials = series.partial_sums()
    gap = float(abs(series.logZ - partials[-1])) if partials else 0.0
    branch = bool(partials and abs((series.logZ - partials[-1]).imag) > np.pi)
    diagnostics = _order_diagnostics(
        series.small.order_terms + series.order_terms, gap, tables.max_residual(), branch
    )
    diagnostics.identity_gap = series.identity_gap
    diagnostics.small_field_gap = float(abs(series.logZ - series.logZ_small_field))
    return ExpansionResult(
        mode=ExpansionMode.LARGE_FIELD,
        logZ=series.logZ,
        logZ_partial=partials,
        W={set_key(X): w for X, w in series.small.W.items()},
        V={set_key(Z): v for Z, v in sorted(series.V.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))},
        L={"|".join(set_key(part) for part in key): value for key, value in series.L.items()},
        logZ_small_field=series.logZ_small_field,
        truncation=truncation,
        diagnostics=diagnostics,
    )


def mayer_logZ_large_field(
    tables: LargeFieldTables,
    max_order: int,
    truncation: Optional[Truncation] = None,
) -> ExpansionResult:
    """
    log Z = sum_Z V(Z) + sum L(Z, X, Q) from small-field activities A_s and
    large-field activities B.

    Raises:
        ResourceError: lattice above the large-field site cap
        NormalizationError: a small-field single-site activity vanishes
    """
    if truncation is None:
        truncation = _default_truncation(max((len(X) for X in tables.small_field), default=1), max_order)
    return large_field_result(large_field_series(tables, max_order), tables, truncation)


def _local_part(series: Series, support: frozenset) -> complex:
    """Terms of log Z whose support contains `support`; the rest is constant in J there."""
    if isinstance(series, LargeFieldSeries):
        total = sum((v for Z, v in series.V.items() if support <= Z), 0j)
        total += sum((v for (Z, X, _), v in series.L.items() if support <= Z | X), 0j)
        return complex(total)
    total = sum((w for X, w in series.W.items() if support <= X), 0j)
    if len(support) == 1:
        total += series.single_logs[next(iter(support))]
    return complex(total)


class ClusterEngine:
    """
    Cluster expansion of one model at a fixed truncation. The activity
    evaluator (and its integrand cache) is shared by every call.
    """

    def __init__(
        self,
        model: Model,
        max_polymer_size: int = 3,
        max_mayer_order: int = 4,
        mode: str = ExpansionMode.PLAIN,
        backend: str = DerivativeBackend.FD,
        ursell_check: bool = True,
        workers: Optional[int] = None,
    ):
        if mode not in ExpansionMode.all():
            raise InputError(f"Unknown expansion mode: {mode}")
        if max_polymer_size < 1 or max_mayer_order < 1:
            raise InputError("Polymer size and Mayer order caps must be >= 1")
        if mode == ExpansionMode.LARGE_FIELD and model.r is None:
            raise InputError("Large-field mode needs the small-field radius r")
        self.model = model
        self.mode = mode
        self.backend = backend
        self.ursell_check = ursell_check
        self.workers = workers
        self.truncation = Truncation(
            max_polymer_size=max_polymer_size,
            max_mayer_order=max_mayer_order,
            quadrature_budget=model.quadrature.node_budget,
        )
        self.evaluator = ActivityEvaluator(model, backend)

    @property
    def sites(self) -> Tuple[int, ...]:
        return tuple(self.model.lattice.sites)

    def tables(self, J: np.ndarray) -> List[Union[PolymerTable, LargeFieldTables]]:
        size = self.truncation.max_polymer_size
        if self.mode == ExpansionMode.LARGE_FIELD:
            return build_large_field_tables(self.model, J, size, self.backend, self.workers, self.evaluator)
        return build_polymer_tables(self.model, J, size, self.backend, self.workers, self.evaluator)

    def _assemble(self, table) -> Series:
        order = self.truncation.max_mayer_order
        if self.mode == ExpansionMode.LARGE_FIELD:
            return large_field_series(table, order)
        return mayer_series(table.entries, order, self.sites)

    def series(self, J: np.ndarray) -> List[Tuple[Series, object]]:
        """Assembled series and its table, one per source."""
        return [(self._assemble(table), table) for table in self.tables(J)]

    def expand(self, J: Optional[np.ndarray] = None) -> List[ExpansionResult]:
        """
        log Z(J) for one source or a batch of sources.

        Returns:
            One ExpansionResult per source
        """
        started = time.perf_counter()
        J = self.model.zero_source() if J is None else J
        tail = box_tail_estimate(self.model)
        results = []
        for series, table in self.series(J):
            if self.mode == ExpansionMode.LARGE_FIELD:
                result = large_field_result(series, table, self.truncation)
            else:
                result = plain_result(series, table, self.truncation, self.ursell_check)
                result.diagnostics.identity_gap = self.partition_identity_gap(table)
            result.diagnostics.tail_estimate = tail
            results.append(result)
        if tail is not None:
            logger.info(f"Gaussian mass outside the box of half-width {self.model.box_half_width:.3g}: {tail:.2e}")
        elapsed = time.perf_counter() - started
        logger.info(
            f"Expanded {len(results)} source(s) in {self.mode} mode "
            f"(size <= {self.truncation.max_polymer_size}, order <= {self.truncation.max_mayer_order}) in {elapsed:.1f}s"
        )
        return results

    def logZ(self, J: np.ndarray) -> np.ndarray:
        """Resummed log Z per source; (batch,) array"""
        return np.array([series.logZ for series, _ in self.series(J)], dtype=complex)

    def partition_identity_gap(self, table: PolymerTable) -> Optional[float]:
        """
        Relative gap between the sum over partitions of prod A(block) and
        the full integral Z_L(s = 1); None when the table misses the full
        lattice or the full integral exceeds the cubature cap.
        """
        sites = frozenset(self.sites)
        if sites not in table.entries:
            return None
        if self.model.lattice.dof > get_settings().cubature_dimension_cap:
            return None
        try:
            direct = self.evaluator.polymer_Z(sites, InterpolationPoint.constant(sites, 1.0), table.J)[0, 0]
        except ResourceError:
            return None
        total = partition_sum(table.entries, sorted(sites))
        gap = float(abs(total - direct) / max(abs(direct), 1e-300))
        logger.debug(f"Partition-sum identity gap {gap:.2e}")
        return gap

    def correlations(
        self,
        requests: Sequence[Sequence[Point]],
        fd_step: float = DEFAULT_J_STEP,
        richardson: bool = True,
    ) -> List[CorrelationResult]:
        """
        Truncated correlations as mixed J-derivatives of log Z at J = 0.

        Every stencil of every request is evaluated in one source batch;
        repeated stencil points are computed once.

        Args:
            requests: Each a list of (site, component) points, 1 to 4 of them
            fd_step: Initial J step
            richardson: Combine steps h and h/2

        Raises:
            InputError: empty or oversized request, unknown site or component
        """
        lattice = self.model.lattice
        origin = np.zeros(lattice.dof)
        stencils = []
        for points in requests:
            points = [tuple(int(v) for v in p) for p in points]
            if not 1 <= len(points) <= MAX_CORRELATION_ORDER:
                raise InputError(
                    f"Correlations take 1 to {MAX_CORRELATION_ORDER} points, got {len(points)}"
                )
            axes = [lattice.dof_index(site, comp) for site, comp in points]
            offsets, levels = stencil_points(origin, axes, fd_step, richardson)
            stencils.append((points, offsets, levels))
        if not stencils:
            return []

        stacked = np.concatenate([offsets for _, offsets, _ in stencils])
        unique, inverse = np.unique(np.round(stacked, 14), axis=0, return_inverse=True)
        inverse = np.ravel(inverse)
        J_batch = unique.reshape(len(unique), lattice.size, lattice.components)
        logger.info(f"Correlations: {len(stencils)} request(s), {len(unique)} distinct source(s)")
        assembled = [series for series, _ in self.series(J_batch)]

        results = []
        start = 0
        for points, offsets, levels in stencils:
            rows = inverse[start:start + len(offsets)]
            start += len(offsets)
            support = frozenset(site for site, _ in points)
            values = np.array([_local_part(assembled[row], support) for row in rows])
            value, error = combine_stencil(values, levels)
            value, error = complex(value), float(error)
            noise = bool(np.isfinite(error) and error >= abs(value))
            if noise:
                logger.warning(f"Correlation at {points} is dominated by finite-difference noise ({error:.2e})")
            results.append(
                CorrelationResult(points=[list(p) for p in points], value=value, error=error, step=fd_step, noise_dominated=noise)
            )
        return results

    def correlation(self, points: Sequence[Point], fd_step: float = DEFAULT_J_STEP, richardson: bool = True) -> CorrelationResult:
        return self.correlations([points], fd_step, richardson)[0]

    def two_point_profile(
        self,
        source: int = 0,
        component: int = 0,
        max_distance: Optional[float] = None,
        fd_step: float = DEFAULT_J_STEP,
        richardson: bool = True,
    ) -> Dict[float, CorrelationResult]:
        """<phi(source) phi(y)>_T for one site y per distance from the source."""
        targets = [
            (d, site) for d, site in distances_from(self.model.lattice, source)
            if max_distance is None or d <= max_distance
        ]
        requests = [[(source, component), (site, component)] for _, site in targets]
        results = self.correlations(requests, fd_step, richardson)
        return {d: result for (d, _), result in zip(targets, results)}


def expand(
    model: Model,
    J: Optional[np.ndarray] = None,
    truncation: Optional[Truncation] = None,
    mode: str = ExpansionMode.PLAIN,
    backend: str = DerivativeBackend.FD,
    ursell_check: bool = True,
    workers: Optional[int] = None,
) -> ExpansionResult:
    """log Z(J) of a model at a single source (J = 0 when omitted)."""
    truncation = truncation or _default_truncation(3, 4)
    engine = ClusterEngine(
        model,
        truncation.max_polymer_size,
        truncation.max_mayer_order,
        mode,
        backend,
        ursell_check,
        workers,
    )
    J = model.zero_source() if J is None else np.asarray(J, dtype=float)
    return engine.expand(as_source_batch(J, model)[:1])[0]


def truncated_correlation(
    model: Model,
    points: Sequence[Point],
    truncation: Optional[Truncation] = None,
    fd_step: float = DEFAULT_J_STEP,
    richardson: bool = True,
    mode: str = ExpansionMode.PLAIN,
    backend: str = DerivativeBackend.FD,
    workers: Optional[int] = None,
) -> CorrelationResult:
    """n-th mixed J-derivative of the expanded log Z at J = 0, n <= 4."""
    truncation = truncation or _default_truncation(3, 4)
    engine = ClusterEngine(
        model,
        truncation.max_polymer_size,
        truncation.max_mayer_order,
        mode,
        backend,
        ursell_check=False,
        workers=workers,
    )
    return engine.correlation(points, fd_step, richardson)
