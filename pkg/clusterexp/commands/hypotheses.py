"""
Check-Hypotheses Command
Convergence-hypothesis report as aligned text (stderr and a .txt artifact)
and JSON
"""

import logging
import sys

from clusterexp.commands.common import RunContext
from clusterexp.models.hypotheses import HypothesisReport
from clusterexp.services.norms_conditions import check_hypotheses

logger = logging.getLogger(__name__)

NAME = "check-hypotheses"


def format_report(report: HypothesisReport) -> str:
    width = max((len(c.name) for c in report.conditions), default=4)
    lines = [f"{'condition':<{width}}  {'lhs':>14} rel {'rhs':>14}  {'margin':>12}  result"]
    for c in report.conditions:
        verdict = "pass" if c.passed else "FAIL"
        line = f"{c.name:<{width}}  {c.lhs:>14.6g} {c.relation:^3} {c.rhs:>14.6g}  {c.margin:>12.4g}  {verdict}"
        if c.note:
            line += f"  ({c.note})"
        lines.append(line)
    lines.append(f"all conditions pass: {report.all_pass}")
    return "\n".join(lines)


def run(context: RunContext) -> dict:
    model = context.model()
    report = check_hypotheses(model, context.config.hypotheses)
    text = format_report(report)
    print(text, file=sys.stderr)
    if context.wants("txt") or context.wants("json"):
        path = context.artifact(NAME, "txt")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")

    payload = report.model_dump(mode="json", by_alias=True)
    context.write_json(NAME, payload)
    context.write_csv(
        NAME,
        ["name", "lhs", "relation", "rhs", "pass", "margin"],
        [[c.name, c.lhs, c.relation, c.rhs, c.passed, c.margin] for c in report.conditions],
    )
    return payload
