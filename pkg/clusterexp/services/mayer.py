"""
Mayer Series Service
Polymer gases over subsets of the lattice, their logarithms as power series
in the number of polymer factors, the Moebius inversion giving W(X), the
explicit Ursell-weighted check, and the small-field / large-field
resummation giving V(Z) and L(Z, X, Q)
"""

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from clusterexp.config import get_settings
from clusterexp.errors import InputError, NormalizationError, ResourceError
from clusterexp.models.expansion import LargeFieldTables, Polymer, PolymerTable, TripleKey
from clusterexp.services.graph_combinatorics import ursell_graph_sum

logger = logging.getLogger(__name__)

VANISHING_ACTIVITY = 1e-300


# ---------------------------------------------------------------------------
# Subset transforms
# ---------------------------------------------------------------------------

def zeta_transform(values: np.ndarray, n: int, axis: int = 0) -> np.ndarray:
    """g(Y) = sum_{X subset Y} f(X) along one axis indexed by bitmasks."""
    out = np.array(values, dtype=complex, copy=True)
    out = np.moveaxis(out, axis, 0)
    masks = np.arange(1 << n)
    for bit in range(n):
        upper = masks[(masks >> bit) & 1 == 1]
        out[upper] += out[upper ^ (1 << bit)]
    return np.moveaxis(out, 0, axis)


def mobius_transform(values: np.ndarray, n: int, axis: int = 0) -> np.ndarray:
    """f(X) = sum_{Y subset X} (-1)^{|X \\ Y|} g(Y) along one axis."""
    out = np.array(values, dtype=complex, copy=True)
    out = np.moveaxis(out, axis, 0)
    masks = np.arange(1 << n)
    for bit in range(n):
        upper = masks[(masks >> bit) & 1 == 1]
        out[upper] -= out[upper ^ (1 << bit)]
    return np.moveaxis(out, 0, axis)


def log_series(coeffs: np.ndarray, order: int) -> np.ndarray:
    """
    Taylor coefficients of log(1 + c_1 t + c_2 t^2 + ...) up to t^order.
    q_k = c_k - (1/k) sum_{j<k} j q_j c_{k-j}
    """
    c = np.zeros(order + 1, dtype=complex)
    length = min(len(coeffs), order + 1)
    c[:length] = coeffs[:length]
    q = np.zeros(order + 1, dtype=complex)
    for k in range(1, order + 1):
        q[k] = c[k] - sum(j * q[j] * c[k - j] for j in range(1, k)) / k
    return q


def _bits(mask: int) -> List[int]:
    mask = int(mask)
    return [i for i in range(mask.bit_length()) if (mask >> i) & 1]


def _mask(sites, index: Dict[int, int]) -> int:
    return sum(1 << index[s] for s in sites)


def _sites(mask: int, ordered: Sequence[int]) -> Polymer:
    return frozenset(ordered[i] for i in _bits(mask))


# ---------------------------------------------------------------------------
# Plain Mayer series
# ---------------------------------------------------------------------------

def normalized_activities(entries: Dict[Polymer, complex]) -> Tuple[Dict[int, complex], Dict[Polymer, complex]]:
    """
    Split a table into single-site activities and the normalized
    A-dot(X) = A(X) prod_{x in X} A({x})^-1 for |X| >= 2.

    Raises:
        NormalizationError: a single-site activity vanishes or is missing
    """
    singles = {next(iter(X)): complex(a) for X, a in entries.items() if len(X) == 1}
    sites = frozenset().union(*entries.keys()) if entries else frozenset()
    for x in sorted(sites):
        if x not in singles:
            raise NormalizationError(f"Single-site activity of site {x} is missing")
        if abs(singles[x]) < VANISHING_ACTIVITY:
            raise NormalizationError(f"Single-site activity of site {x} vanishes", {"site": x})
    normalized = {}
    for X, a in entries.items():
        if len(X) >= 2:
            normalized[X] = complex(a) / math.prod(singles[x] for x in X)
    return singles, normalized


class PolymerGas:
    """
    Hard-core gas of weighted polymers: Xi_t(Y) = sum over families of
    pairwise disjoint polymers inside Y of prod t w(X), as a polynomial in t.
    """

    def __init__(self, sites: Sequence[int], weights: Dict[Polymer, complex], degree: int):
        self.sites = tuple(sorted(sites))
        self.n = len(self.sites)
        self.index = {s: i for i, s in enumerate(self.sites)}
        self.degree = degree
        self.by_element: Dict[int, List[Tuple[int, complex]]] = {i: [] for i in range(self.n)}
        for X, w in weights.items():
            if not X <= set(self.sites):
                raise InputError(f"Polymer {sorted(X)} leaves the gas ground set")
            mask = _mask(X, self.index)
            for i in _bits(mask):
                self.by_element[i].append((mask, complex(w)))
        self._memo: Dict[int, np.ndarray] = {0: self._unit()}

    def _unit(self) -> np.ndarray:
        unit = np.zeros(self.degree + 1, dtype=complex)
        unit[0] = 1.0
        return unit

    def polynomial(self, mask: int) -> np.ndarray:
        if mask in self._memo:
            return self._memo[mask]
        low = (mask & -mask).bit_length() - 1
        result = self.polynomial(mask ^ (1 << low)).copy()
        for polymer, w in self.by_element[low]:
            if polymer & mask == polymer:
                result[1:] += w * self.polynomial(mask ^ polymer)[:-1]
        self._memo[mask] = result
        return result

    def all_polynomials(self) -> np.ndarray:
        """(2^n, degree + 1) coefficients, row = subset bitmask"""
        return np.stack([self.polynomial(mask) for mask in range(1 << self.n)])


@dataclass
class MayerSeries:
    """log of a normalized polymer gas, resummed and order by order"""
    sites: Tuple[int, ...]
    single_logs: Dict[int, complex]
    log_gas: complex
    order_terms: np.ndarray                       # q_k(L), k = 1..max_order
    W: Dict[Polymer, complex] = field(default_factory=dict)
    W_orders: Dict[Polymer, np.ndarray] = field(default_factory=dict)

    @property
    def single_total(self) -> complex:
        return complex(sum(self.single_logs.values()))

    @property
    def logZ(self) -> complex:
        return self.single_total + self.log_gas

    def partial_sums(self) -> List[complex]:
        return list(self.single_total + np.cumsum(self.order_terms))

    @property
    def resummation_gap(self) -> float:
        return float(abs(self.logZ - self.partial_sums()[-1])) if len(self.order_terms) else 0.0

    @property
    def branch_crossing(self) -> bool:
        if not len(self.order_terms):
            return False
        return bool(abs((self.logZ - self.partial_sums()[-1]).imag) > math.pi)


def mayer_series(entries: Dict[Polymer, complex], max_order: int, sites: Optional[Sequence[int]] = None) -> MayerSeries:
    """
    W(X) = sum_{Y subset X} (-1)^{|X \\ Y|} log Xi(Y) for the gas of
    normalized activities, with Xi(Y) resummed (principal log) and the
    order-k parts from the power-series logarithm in t.

    Raises:
        InputError: max_order < 1
        NormalizationError: vanishing single-site activity
    """
    if max_order < 1:
        raise InputError(f"Mayer order must be >= 1, got {max_order}")
    singles, normalized = normalized_activities(entries)
    sites = tuple(sorted(sites if sites is not None else singles))
    n = len(sites)
    degree = max(max_order, n // 2)
    gas = PolymerGas(sites, normalized, degree)
    polynomials = gas.all_polynomials()

    totals = polynomials.sum(axis=1)
    if np.any(np.abs(totals) < VANISHING_ACTIVITY):
        raise NormalizationError("Normalized polymer gas vanishes on a subset")
    logs = np.log(totals)
    logs[0] = 0.0
    orders = np.stack([log_series(p, max_order)[1:] for p in polynomials])

    W_values = mobius_transform(logs, n)
    W_orders = mobius_transform(orders, n)
    W, W_by_order = {}, {}
    for mask in range(1, 1 << n):
        if bin(mask).count("1") >= 2:
            X = _sites(mask, sites)
            W[X] = complex(W_values[mask])
            W_by_order[X] = W_orders[mask]

    return MayerSeries(
        sites=sites,
        single_logs={x: complex(np.log(singles[x])) for x in sites},
        log_gas=complex(logs[-1]),
        order_terms=orders[-1],
        W=W,
        W_orders=W_by_order,
    )


def explicit_ursell_orders(normalized: Dict[Polymer, complex], max_order: int, cap: Optional[int] = None) -> List[complex]:
    """
    Order-k part of log Xi(L) as the Ursell-weighted sum over multisets of k
    polymers: rho(X_1..X_k) prod A-dot(X_m) / prod multiplicity!.

    Raises:
        ResourceError: max_order above the Ursell cap
    """
    cap = cap or get_settings().ursell_cap
    if max_order > cap:
        raise ResourceError(f"Explicit Ursell orders up to {max_order} exceed cap {cap}")
    polymers = sorted(normalized, key=lambda X: (len(X), sorted(X)))
    orders = []
    for k in range(1, max_order + 1):
        total = 0j
        for family in itertools.combinations_with_replacement(range(len(polymers)), k):
            sets = [polymers[i] for i in family]
            rho = ursell_graph_sum(sets, cap)
            if rho == 0:
                continue
            weight = math.prod(normalized[X] for X in sets)
            symmetry = math.prod(math.factorial(m) for m in Counter(family).values())
            total += rho * weight / symmetry
        orders.append(total)
    return orders


def ursell_gap(series: MayerSeries, normalized: Dict[Polymer, complex], orders: int) -> float:
    """Largest per-order gap between the gas logarithm and the Ursell sums."""
    explicit = explicit_ursell_orders(normalized, orders)
    return float(max(abs(e - q) for e, q in zip(explicit, series.order_terms[:orders])))


def partition_sum(entries: Dict[Polymer, complex], sites: Sequence[int]) -> complex:
    """sum over partitions of `sites` into table polymers of prod A(block)"""
    index = {s: i for i, s in enumerate(sorted(sites))}
    by_low: Dict[int, List[Tuple[int, complex]]] = {i: [] for i in range(len(index))}
    for X, a in entries.items():
        if X <= set(index):
            mask = _mask(X, index)
            by_low[(mask & -mask).bit_length() - 1].append((mask, complex(a)))
    memo = {0: 1.0 + 0j}

    def total(mask: int) -> complex:
        if mask not in memo:
            low = (mask & -mask).bit_length() - 1
            memo[mask] = sum(a * total(mask ^ block) for block, a in by_low[low] if block & mask == block)
        return memo[mask]

    return total((1 << len(index)) - 1)


# ---------------------------------------------------------------------------
# Small-field / large-field resummation
# ---------------------------------------------------------------------------

@dataclass
class LargeFieldSeries:
    """log Z = sum_Z V(Z) + sum L(Z, X, Q)"""
    small: MayerSeries
    V: Dict[Polymer, complex]
    B_dot: Dict[TripleKey, complex]
    L: Dict[TripleKey, complex]
    log_gas: complex
    order_terms: np.ndarray
    identity_gap: float

    @property
    def logZ_small_field(self) -> complex:
        return self.small.logZ

    @property
    def logZ(self) -> complex:
        return self.small.logZ + self.log_gas

    def partial_sums(self) -> List[complex]:
        return list(self.small.single_total + np.cumsum(self.small.order_terms + self.order_terms))


class _LargeFieldAlgebra:
    """Bitmask bookkeeping over labelled supports (Z, X, Q)"""

    def __init__(self, sites: Sequence[int], V: np.ndarray, B: Dict[Tuple[int, int], complex]):
        self.sites = tuple(sites)
        self.n = len(sites)
        self.full = (1 << self.n) - 1
        self.zeta_V = zeta_transform(V, self.n)
        self.B = B
        self.blocks_by_low: Dict[int, List[Tuple[int, int, complex]]] = {i: [] for i in range(self.n)}
        for (X, Q), b in B.items():
            self.blocks_by_low[(X & -X).bit_length() - 1].append((X, Q, b))
        self._partition_memo: Dict[Tuple[int, int], complex] = {(0, 0): 1.0 + 0j}
        self._T_memo: Dict[Tuple[int, int, int], complex] = {}
        self._B_dot_memo: Dict[Tuple[int, int, int], complex] = {}

    def interaction_factor(self, X: int, Z: int) -> complex:
        """exp(-sum over V-sets inside X u Z that meet X)"""
        Y = X | Z
        return complex(np.exp(-(self.zeta_V[Y] - self.zeta_V[Y & ~X])))

    def connected_cover(self, Z: int, X: int) -> complex:
        """S(Z, X) = sum_{Z'' subset Z} (-1)^{|Z \\ Z''|} interaction_factor(X, Z'')"""
        total = 0j
        sub = Z
        while True:
            sign = -1.0 if bin(Z ^ sub).count("1") % 2 else 1.0
            total += sign * self.interaction_factor(X, sub)
            if sub == 0:
                break
            sub = (sub - 1) & Z
        return total

    def block_partitions(self, X: int, Q: int) -> complex:
        """sum over partitions of X into blocks meeting Q of prod B(block, Q n block)"""
        key = (X, Q)
        if key in self._partition_memo:
            return self._partition_memo[key]
        if X == 0:
            return 1.0 + 0j
        low = (X & -X).bit_length() - 1
        total = 0j
        for block, block_Q, b in self.blocks_by_low[low]:
            if block & X == block and block_Q == Q & block:
                total += b * self.block_partitions(X ^ block, Q & ~block)
        self._partition_memo[key] = total
        return total

    def T(self, Z: int, X: int, Q: int) -> complex:
        key = (Z, X, Q)
        if key not in self._T_memo:
            self._T_memo[key] = self.block_partitions(X, Q) * self.connected_cover(Z, X)
        return self._T_memo[key]

    def B_dot(self, Z: int, X: int, Q: int) -> complex:
        """Connected part of T over set partitions of the support Z u X."""
        key = (Z, X, Q)
        if key in self._B_dot_memo:
            return self._B_dot_memo[key]
        U = Z | X
        low = U & -U
        value = self.T(Z, X, Q)
        rest = U ^ low
        sub = rest
        while True:
            U1 = sub | low
            if U1 != U:
                U2 = U ^ U1
                value -= self.B_dot(Z & U1, X & U1, Q & U1) * self.T(Z & U2, X & U2, Q & U2)
            if sub == 0:
                break
            sub = (sub - 1) & rest
        self._B_dot_memo[key] = value
        return value

    def labelled_configurations(self):
        """(Z, X, Q) with Z, X disjoint, Q inside X, X nonempty"""
        for states in itertools.product(range(4), repeat=self.n):
            Z = sum(1 << i for i, s in enumerate(states) if s == 1)
            X = sum(1 << i for i, s in enumerate(states) if s >= 2)
            Q = sum(1 << i for i, s in enumerate(states) if s == 3)
            if X:
                yield Z, X, Q


def _restricted_gas(pieces: List[Tuple[int, int, int, complex]], n: int, degree: int) -> np.ndarray:
    """
    Xi_t(z, x, q) for every triple of masks: families of pieces with
    disjoint supports whose labels fit inside (z, x, q).

    Returns:
        (2^n, 2^n, 2^n, degree + 1) coefficients
    """
    by_element: Dict[int, List[Tuple[int, int, int, complex]]] = {i: [] for i in range(n)}
    for Z, X, Q, value in pieces:
        for i in _bits(Z | X):
            by_element[i].append((Z, X, Q, value))
    size = 1 << n
    gas = np.zeros((size, size, size, degree + 1), dtype=complex)
    memo: Dict[Tuple[int, int, int], np.ndarray] = {}

    def polynomial(z: int, x: int, q: int) -> np.ndarray:
        q &= x
        key = (z, x, q)
        if key in memo:
            return memo[key]
        avail = z | x
        result = np.zeros(degree + 1, dtype=complex)
        if avail == 0:
            result[0] = 1.0
        else:
            low = avail & -avail
            result += polynomial(z & ~low, x & ~low, q & ~low)
            for Z, X, Q, value in by_element[low.bit_length() - 1]:
                if Z & z == Z and X & x == X and Q & q == Q:
                    U = Z | X
                    result[1:] += value * polynomial(z & ~U, x & ~U, q & ~U)[:-1]
        memo[key] = result
        return result

    for z, x, q in itertools.product(range(size), repeat=3):
        gas[z, x, q] = polynomial(z, x, q)
    return gas


def large_field_series(tables: LargeFieldTables, max_order: int) -> LargeFieldSeries:
    """
    Small-field Mayer series V(Z) from A_s, connected large-field pieces
    B-dot(Z, X, Q) and their union-marked logarithm L(Z, X, Q).

    Raises:
        ResourceError: lattice above the large-field site cap
        NormalizationError: vanishing small-field single-site activity
    """
    sites = tuple(sorted(tables.sites))
    n = len(sites)
    cap = get_settings().large_field_site_cap
    if n > cap:
        raise ResourceError(f"Large-field assembly on {n} sites exceeds cap {cap}", {"sites": n, "cap": cap})
    index = {s: i for i, s in enumerate(sites)}

    small = mayer_series(tables.small_field, max_order, sites)
    V = dict(small.W)
    V.update({frozenset([x]): value for x, value in small.single_logs.items()})
    V_array = np.zeros(1 << n, dtype=complex)
    for Z, value in V.items():
        V_array[_mask(Z, index)] = value

    B = {(_mask(X, index), _mask(Q, index)): complex(b) for (X, Q), b in tables.large_field.items()}
    algebra = _LargeFieldAlgebra(sites, V_array, B)

    pieces = []
    B_dot = {}
    for Z, X, Q in algebra.labelled_configurations():
        value = algebra.B_dot(Z, X, Q)
        if value != 0:
            pieces.append((Z, X, Q, value))
            B_dot[(_sites(Z, sites), _sites(X, sites), _sites(Q, sites))] = value

    degree = max(max_order, n)
    gas = _restricted_gas(pieces, n, degree)
    totals = gas.sum(axis=-1)
    if abs(totals[-1, -1, -1]) < VANISHING_ACTIVITY:
        raise NormalizationError("Large-field polymer gas vanishes")
    safe = np.where(np.abs(totals) < VANISHING_ACTIVITY, 1.0, totals)
    logs = np.log(safe)
    orders = np.apply_along_axis(lambda p: log_series(p, max_order)[1:], -1, gas)

    L_values = logs
    for axis in range(3):
        L_values = mobius_transform(L_values, n, axis)
    L = {}
    scale = max(1.0, float(np.max(np.abs(L_values))))
    for z, x, q in np.argwhere(np.abs(L_values) > 1e-14 * scale).tolist():
        L[(_sites(z, sites), _sites(x, sites), _sites(q, sites))] = complex(L_values[z, x, q])

    # Z = sum_Omega Xi_s(Omega) Xi_B(L \ Omega) against Xi_s(L) Xi_B-dot(L)
    full = (1 << n) - 1
    direct = 0j
    for omega in range(1 << n):
        rest = full ^ omega
        large = sum(algebra.block_partitions(rest, Q) for Q in _submasks(rest))
        direct += np.exp(algebra.zeta_V[omega]) * large
    resummed = np.exp(algebra.zeta_V[full]) * totals[-1, -1, -1]
    identity_gap = float(abs(direct - resummed) / max(abs(direct), VANISHING_ACTIVITY))
    logger.info(f"Large-field assembly: {len(pieces)} connected pieces, identity gap {identity_gap:.2e}")

    return LargeFieldSeries(
        small=small,
        V=V,
        B_dot=B_dot,
        L=L,
        log_gas=complex(logs[-1, -1, -1]),
        order_terms=orders[-1, -1, -1],
        identity_gap=identity_gap,
    )


def _submasks(mask: int):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask
