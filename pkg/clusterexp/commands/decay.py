"""
Decay Command
Two-point truncated correlation against distance from a source site, fitted
to an exponential and compared with the Gaussian chain of the same covariance
"""

import logging

from clusterexp.commands.common import RunContext
from clusterexp.errors import NumericError
from clusterexp.services.oracle import decay_fit, gaussian_two_point_profile
from clusterexp.utils.serialization import encode_complex

logger = logging.getLogger(__name__)

NAME = "decay"


def run(context: RunContext) -> dict:
    model = context.model()
    engine = context.engine(model)
    corr = context.config.correlation

    profile = engine.two_point_profile(corr.decay_source, corr.decay_component, corr.max_distance, corr.fd_step, corr.richardson)
    gaussian = gaussian_two_point_profile(model, corr.decay_source, corr.decay_component)
    magnitudes = {d: abs(result.value) for d, result in profile.items() if not result.noise_dominated}
    fit = decay_fit(magnitudes)
    try:
        gaussian_fit = decay_fit({d: gaussian[d] for d in profile})
    except NumericError:
        gaussian_fit = None

    ratio = fit.mass / gaussian_fit.mass if gaussian_fit is not None and gaussian_fit.mass > 0 else None
    if ratio is not None:
        logger.info(f"Decay mass {fit.mass:.4g} vs Gaussian chain {gaussian_fit.mass:.4g} (ratio {ratio:.3f})")

    rows = []
    for d, result in profile.items():
        re, im = encode_complex(result.value)
        rows.append([d, result.points[1][0], re, im, result.error, gaussian.get(d, "")])
    payload = {
        "source": corr.decay_source,
        "component": corr.decay_component,
        "profile": {str(d): result.model_dump(mode="json") for d, result in profile.items()},
        "gaussian_profile": {str(d): v for d, v in gaussian.items()},
        "fit": fit.model_dump(),
        "gaussian_fit": gaussian_fit.model_dump() if gaussian_fit is not None else None,
        "mass_ratio": ratio,
    }
    context.write_json(NAME, payload)
    context.write_csv(NAME, ["distance", "site", "corr_re", "corr_im", "error", "gaussian"], rows)
    return payload
