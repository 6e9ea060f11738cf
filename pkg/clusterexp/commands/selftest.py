"""
Selftest Command
Built-in property suites for the combinatorics and covariance layers; runs
on an empty configuration
"""

import itertools
import logging
import math
import time
from fractions import Fraction
from typing import Callable, Dict, List

import networkx as nx
import numpy as np

from clusterexp.commands.common import RunContext
from clusterexp.errors import ConsistencyError
from clusterexp.models.graphs import InterpolationPoint
from clusterexp.services.covariance import (
    build_laplacian_covariance,
    build_many_boson_covariance,
    many_boson_inverse,
    random_normal_covariance,
    spectral_envelope_check,
    validate,
)
from clusterexp.services.graph_combinatorics import (
    bell_number,
    bkar_forest_formula,
    cayley_count,
    enumerate_partitions,
    enumerate_trees,
    incidence_graph,
    kruskal_distribution,
    random_forest_point,
    spanning_tree_count,
    ursell_graph_sum,
    ursell_tree_integral,
)
from clusterexp.services.lattice_geometry import explicit, torus1d

logger = logging.getLogger(__name__)

NAME = "selftest"
URSELL_FAMILIES = 40
BKAR_DRAWS = 10
ENVELOPE_POINTS = 200


def counts_suite(rng: np.random.Generator) -> Dict:
    rows = []
    ok = True
    for q in range(1, 7):
        trees = sum(1 for _ in enumerate_trees(range(q)))
        partitions = sum(1 for _ in enumerate_partitions(range(q)))
        ok &= trees == cayley_count(q) and partitions == bell_number(q)
        rows.append([q, cayley_count(q), trees, bell_number(q), partitions])
    return {"passed": bool(ok), "rows": rows}


def kruskal_suite(rng: np.random.Generator) -> Dict:
    checked = 0
    failures = []
    for n in range(2, 5):
        pairs = list(itertools.combinations(range(n), 2))
        for mask in range(1, 1 << len(pairs)):
            graph = nx.Graph()
            graph.add_nodes_from(range(n))
            graph.add_edges_from(p for i, p in enumerate(pairs) if (mask >> i) & 1)
            if not nx.is_connected(graph):
                continue
            total = sum(kruskal_distribution(graph).values(), Fraction(0))
            checked += 1
            if total != 1:
                failures.append(sorted(graph.edges()))
    return {"passed": not failures, "graphs": checked, "failures": failures}


def ursell_suite(rng: np.random.Generator) -> Dict:
    ground = range(4)
    subsets = [frozenset(c) for k in range(1, 5) for c in itertools.combinations(ground, k)]
    worst = 0.0
    bound_ok = True
    for _ in range(URSELL_FAMILIES):
        n = int(rng.integers(2, 5))
        family = [subsets[i] for i in rng.integers(0, len(subsets), size=n)]
        exact = ursell_graph_sum(family)
        tree_sum = sum(ursell_tree_integral(tree, family) for tree in enumerate_trees(range(n)))
        worst = max(worst, abs(tree_sum - exact))
        bound_ok &= abs(exact) <= spanning_tree_count(incidence_graph(family))
    return {"passed": bool(worst <= 1e-6 and bound_ok), "max_gap": worst, "families": URSELL_FAMILIES}


def bkar_suite(rng: np.random.Generator) -> Dict:
    ground = (0, 1, 2)
    pairs = list(itertools.combinations(ground, 2))
    worst = 0.0
    for _ in range(BKAR_DRAWS):
        a = rng.uniform(-0.5, 0.5, size=len(pairs))

        def H(point: InterpolationPoint, a=a) -> complex:
            return complex(np.exp(sum(c * point.value(x, y) for c, (x, y) in zip(a, pairs))))

        value = bkar_forest_formula(H, ground)
        worst = max(worst, abs(value - np.exp(a.sum())))
    return {"passed": bool(worst <= 1e-6), "max_gap": worst, "draws": BKAR_DRAWS}


def envelope_suite(rng: np.random.Generator) -> Dict:
    lattice = torus1d(4)
    covariance = random_normal_covariance(lattice, rng)
    contained = 0
    worst = np.inf
    for _ in range(ENVELOPE_POINTS):
        report = spectral_envelope_check(covariance, random_forest_point(lattice.sites, rng))
        contained += report.contained
        worst = min(worst, report.inverse_margin, report.margin)
    return {"passed": contained == ENVELOPE_POINTS, "points": ENVELOPE_POINTS, "min_margin": float(worst)}


def covariance_suite(rng: np.random.Generator) -> Dict:
    ring = torus1d(3)
    laplacian = validate(build_laplacian_covariance(ring, 1.0))
    many_boson = build_many_boson_covariance(ring, 1.0, -0.5, 3.0)
    spectrum_min = float(np.min(np.linalg.eigvals(many_boson_inverse(ring, 1.0, -0.5, 3.0)).real))
    floor = 1.0 - math.exp(-0.5)
    explicit_ok = validate(build_laplacian_covariance(explicit(ring.metric), 2.0)).valid
    return {
        "passed": bool(laplacian.valid and validate(many_boson).valid and spectrum_min >= floor - 1e-8 and explicit_ok),
        "laplacian_mu": laplacian.mu,
        "many_boson_spectrum_min": spectrum_min,
        "many_boson_floor": floor,
    }


SUITES: Dict[str, Callable[[np.random.Generator], Dict]] = {
    "counts": counts_suite,
    "kruskal": kruskal_suite,
    "ursell": ursell_suite,
    "bkar": bkar_suite,
    "hadamard_envelope": envelope_suite,
    "covariance_presets": covariance_suite,
}


def run(context: RunContext) -> dict:
    rng = np.random.default_rng(context.seed)
    results = {}
    for name, suite in SUITES.items():
        started = time.perf_counter()
        results[name] = suite(rng)
        results[name]["seconds"] = round(time.perf_counter() - started, 3)
        logger.info(f"Suite {name}: {'pass' if results[name]['passed'] else 'FAIL'} in {results[name]['seconds']}s")

    counts: List = results["counts"].pop("rows")
    context.write_csv(NAME, ["q", "cayley", "trees_enumerated", "bell", "partitions_enumerated"], counts, name="counts")
    payload = {"suites": results, "counts": counts, "all_pass": all(r["passed"] for r in results.values())}
    context.write_json(NAME, payload)
    if not payload["all_pass"]:
        failed = [name for name, r in results.items() if not r["passed"]]
        raise ConsistencyError(f"Selftest suites failed: {', '.join(failed)}", {"failed": failed})
    return payload
