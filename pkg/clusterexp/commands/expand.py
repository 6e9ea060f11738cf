"""
Expand Command
Engine log Z(J = 0) and the configured truncated correlations
"""

import logging

from clusterexp.commands.common import (
    CORRELATION_HEADER,
    RunContext,
    correlation_rows,
    expansion_payload,
    partial_sum_rows,
)

logger = logging.getLogger(__name__)

NAME = "expand"


def run(context: RunContext) -> dict:
    model = context.model()
    engine = context.engine(model)
    result = engine.expand()[0]
    logger.info(f"Engine log Z = {result.logZ:.10g}")

    payload = expansion_payload(result)
    corr = context.config.correlation
    if corr.points:
        correlations = engine.correlations(corr.points, corr.fd_step, corr.richardson)
        payload["correlations"] = [c.model_dump(mode="json") for c in correlations]
        context.write_csv(NAME, CORRELATION_HEADER, correlation_rows(correlations), name="correlations")

    context.write_json(NAME, payload)
    context.write_csv(NAME, ["order", "partial_re", "partial_im", "term_abs"], partial_sum_rows(result))
    return payload
