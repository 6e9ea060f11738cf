"""
Oracle Command
Brute-force log Z(J = 0) and correlations, in the expand command's JSON shape
"""

import logging

from clusterexp.commands.common import CORRELATION_HEADER, RunContext, correlation_rows
from clusterexp.services.oracle import brute_force_logZ, oracle_correlations
from clusterexp.utils.serialization import encode_complex

logger = logging.getLogger(__name__)

NAME = "oracle"


def run(context: RunContext) -> dict:
    model = context.model()
    settings = context.config.oracle
    result = brute_force_logZ(model, None, settings.scheme, settings.qmc_log2_points, settings.chunk_size, context.seed)
    logger.info(f"Oracle log Z = {result.logZ:.10g} ({result.method}, residual {result.residual:.2e})")

    payload = {
        "logZ": encode_complex(result.logZ),
        "partial_sums": [encode_complex(result.logZ)],
        "W": {},
        "diagnostics": {"quadrature_residual": result.residual},
        "method": result.method,
        "residual": result.residual,
        "nodes": result.nodes,
        "dimension": result.dimension,
    }
    corr = context.config.correlation
    if corr.points:
        correlations = oracle_correlations(
            model,
            corr.points,
            corr.fd_step,
            corr.richardson,
            settings.scheme,
            settings.qmc_log2_points,
            settings.chunk_size,
            context.seed,
        )
        payload["correlations"] = [c.model_dump(mode="json") for c in correlations]
        context.write_csv(NAME, CORRELATION_HEADER, correlation_rows(correlations), name="correlations")

    context.write_json(NAME, payload)
    re, im = encode_complex(result.logZ)
    context.write_csv(NAME, ["method", "logZ_re", "logZ_im", "residual", "nodes"], [[result.method, re, im, result.residual, result.nodes]])
    return payload
