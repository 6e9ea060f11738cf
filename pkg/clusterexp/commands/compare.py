"""
Compare Command
Engine against oracle: log Z, partial-sum errors per order and correlations
"""

import logging

from clusterexp.commands.common import RunContext, expansion_payload, point_label
from clusterexp.services.oracle import brute_force_logZ, oracle_correlations
from clusterexp.utils.serialization import encode_complex

logger = logging.getLogger(__name__)

NAME = "compare"
LOGZ_TOLERANCE = 1e-3


def run(context: RunContext) -> dict:
    model = context.model()
    engine = context.engine(model)
    oracle_settings = context.config.oracle
    corr = context.config.correlation

    expansion = engine.expand()[0]
    reference = brute_force_logZ(
        model, None, oracle_settings.scheme, oracle_settings.qmc_log2_points, oracle_settings.chunk_size, context.seed
    )
    diff = abs(expansion.logZ - reference.logZ)
    tolerance = max(LOGZ_TOLERANCE, expansion.diagnostics.truncation_estimate)
    within = diff <= tolerance
    if within:
        logger.info(f"Engine and oracle log Z agree: |diff| = {diff:.3e}")
    else:
        logger.warning(f"Engine and oracle log Z differ by {diff:.3e} (tolerance {tolerance:.1e})")

    rows = [["logZ", *encode_complex(expansion.logZ), *encode_complex(reference.logZ), diff]]
    partial_errors = []
    for order, partial in enumerate(expansion.logZ_partial, start=1):
        error = abs(partial - reference.logZ)
        partial_errors.append(error)
        rows.append([f"partial_{order}", *encode_complex(partial), *encode_complex(reference.logZ), error])

    correlations = []
    if corr.points:
        engine_values = engine.correlations(corr.points, corr.fd_step, corr.richardson)
        oracle_values = oracle_correlations(
            model,
            corr.points,
            corr.fd_step,
            corr.richardson,
            oracle_settings.scheme,
            oracle_settings.qmc_log2_points,
            oracle_settings.chunk_size,
            context.seed,
        )
        for mine, theirs in zip(engine_values, oracle_values):
            gap = abs(mine.value - theirs.value)
            label = point_label(mine.points)
            rows.append([f"corr[{label}]", *encode_complex(mine.value), *encode_complex(theirs.value), gap])
            correlations.append({"points": mine.points, "engine": mine.model_dump(mode="json"), "oracle": theirs.model_dump(mode="json"), "diff": gap})

    payload = {
        "engine": expansion_payload(expansion),
        "oracle": reference.model_dump(mode="json"),
        "logZ_diff": diff,
        "tolerance": tolerance,
        "within_tolerance": within,
        "partial_sum_errors": partial_errors,
        "correlations": correlations,
    }
    context.write_json(NAME, payload)
    context.write_csv(NAME, ["quantity", "engine_re", "engine_im", "oracle_re", "oracle_im", "abs_diff"], rows)
    return payload
