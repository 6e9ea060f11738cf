"""
Command Helpers
Run context shared by the subcommands and the artifact writers
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

from clusterexp.models.expansion import CorrelationResult, ExpansionResult
from clusterexp.models.model import Model
from clusterexp.models.run_config import RunConfig
from clusterexp.services.cluster_engine import ClusterEngine
from clusterexp.services.model_builder import build_model
from clusterexp.utils.serialization import encode_complex, write_csv, write_json

logger = logging.getLogger(__name__)

CORRELATION_HEADER = ["points", "value_re", "value_im", "error", "step", "noise_dominated"]


@dataclass
class RunContext:
    """Resolved flags of one invocation"""
    config: RunConfig
    output_dir: Path
    seed: int
    workers: Optional[int]

    @property
    def prefix(self) -> str:
        return self.config.output.prefix

    def artifact(self, command: str, suffix: str) -> Path:
        return self.output_dir / f"{self.prefix}_{command}.{suffix}"

    def wants(self, fmt: str) -> bool:
        return fmt in self.config.output.formats

    def model(self) -> Model:
        return build_model(self.config)

    def engine(self, model: Model) -> ClusterEngine:
        exp = self.config.expansion
        return ClusterEngine(
            model,
            max_polymer_size=exp.max_polymer_size,
            max_mayer_order=exp.max_mayer_order,
            mode=exp.mode,
            backend=exp.backend,
            ursell_check=exp.ursell_check,
            workers=self.workers,
        )

    def write_json(self, command: str, payload: Any) -> Optional[Path]:
        if not self.wants("json"):
            return None
        return write_json(self.artifact(command, "json"), payload)

    def write_csv(self, command: str, header: Sequence[str], rows: Iterable[Sequence[Any]], name: Optional[str] = None) -> Optional[Path]:
        if not self.wants("csv"):
            return None
        stem = command if name is None else f"{command}_{name}"
        return write_csv(self.artifact(stem, "csv"), header, rows)


def point_label(points: List[List[int]]) -> str:
    """[[0, 0], [1, 0]] -> "0:0;1:0" """
    return ";".join(f"{site}:{comp}" for site, comp in points)


def correlation_rows(results: Sequence[CorrelationResult]) -> List[List[Any]]:
    rows = []
    for result in results:
        re, im = encode_complex(result.value)
        rows.append([point_label(result.points), re, im, result.error, result.step, result.noise_dominated])
    return rows


def partial_sum_rows(result: ExpansionResult) -> List[List[Any]]:
    magnitudes = result.diagnostics.last_term_magnitudes
    rows = []
    for order, partial in enumerate(result.logZ_partial, start=1):
        re, im = encode_complex(partial)
        term = magnitudes[order - 1] if order - 1 < len(magnitudes) else ""
        rows.append([order, re, im, term])
    return rows


def expansion_payload(result: ExpansionResult) -> dict:
    """{logZ, partial_sums, W, diagnostics, ...} with complex numbers as [re, im]"""
    data = result.model_dump(mode="json")
    data["partial_sums"] = data.pop("logZ_partial")
    return data
