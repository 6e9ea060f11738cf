"""
CLI Entry Point
Logging setup, argument parsing, subcommand dispatch and the global error
handler that maps errors to exit codes and a JSON error payload
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from clusterexp import __version__
from clusterexp.commands import compare, decay, expand, hypotheses, oracle, selftest
from clusterexp.commands.common import RunContext
from clusterexp.config import settings
from clusterexp.errors import ClusterExpansionError, ConfigError
from clusterexp.models.run_config import RunConfig
from clusterexp.utils.serialization import to_jsonable

# Configure logging
# Logs go to stderr so stdout stays machine-readable
log_handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]

# Only add file handler in development if logs directory exists
if settings.environment.lower() != "production":
    if os.path.exists("logs"):
        log_handlers.append(logging.FileHandler("logs/clusterexp.log"))

logging.basicConfig(
    level=getattr(logging, settings.log_level),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=log_handlers
)

logger = logging.getLogger(__name__)

COMMANDS = {module.NAME: module for module in (expand, oracle, compare, hypotheses, selftest, decay)}

EXIT_OK = 0
EXIT_INTERNAL = 3


def parse_override(raw: str) -> Tuple[List[str], Any]:
    """
    Split "dotted.path=value"; the value is read as JSON when possible.

    Raises:
        ConfigError: no "=" or an empty path
    """
    if "=" not in raw:
        raise ConfigError(f"Override must look like path=value, got {raw!r}", {"override": raw})
    path, value = raw.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"Override has an empty path: {raw!r}", {"override": raw})
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return keys, parsed


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    for raw in overrides:
        keys, value = parse_override(raw)
        node = data
        for key in keys[:-1]:
            child = node.get(key)
            if not isinstance(child, dict):
                child = {}
                node[key] = child
            node = child
        node[keys[-1]] = value
    return data


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> RunConfig:
    """
    Read a run configuration; no path means the all-defaults `{}`.

    Raises:
        ConfigError: unreadable file, malformed JSON or a schema violation
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}", {"path": path})
        except json.JSONDecodeError as e:
            raise ConfigError(
                f"Malformed JSON in {path}: {e.msg}",
                {"path": path, "line": e.lineno, "column": e.colno},
            )
        if not isinstance(data, dict):
            raise ConfigError("Config root must be a JSON object", {"path": path})

    data = apply_overrides(data, overrides)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        errors = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        first = errors[0]["field"] if errors else ""
        raise ConfigError(f"Invalid configuration at {first}", {"errors": errors})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clusterexp",
        description="Cluster expansion of log Z(J) and truncated correlations for lattice spin systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=(COMMANDS[name].__doc__ or "").strip().splitlines()[1])
        sub.add_argument("--config", "-c", help="Run configuration JSON (defaults to {})")
        sub.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="PATH=VALUE",
            help="Override a config field, e.g. expansion.max_mayer_order=3",
        )
        sub.add_argument("--seed", type=int, help="Seed for QMC scrambling and random self-tests")
        sub.add_argument("--workers", type=int, help="Worker threads for activity evaluation")
        sub.add_argument("--output-dir", help="Directory for JSON/CSV artifacts")
    return parser


def build_context(args: argparse.Namespace) -> RunContext:
    config = load_config(args.config, args.overrides)
    seed = args.seed if args.seed is not None else config.seed if config.seed is not None else settings.seed
    workers = args.workers if args.workers is not None else config.workers if config.workers is not None else settings.workers
    if workers is not None and workers < 1:
        raise ConfigError("--workers must be >= 1", {"workers": workers})
    output_dir = Path(args.output_dir or config.output.directory or settings.output_dir)
    return RunContext(config=config, output_dir=output_dir, seed=seed, workers=workers)


def emit(payload: Any) -> None:
    print(json.dumps(to_jsonable(payload), indent=2, sort_keys=True))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        Process exit code: 0 on success, 2 for input/config errors, 3 otherwise
    """
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    logger.info(f"Starting {args.command} (clusterexp {__version__}, environment {settings.environment})")
    try:
        context = build_context(args)
        payload = COMMANDS[args.command].run(context)
    except ClusterExpansionError as e:
        logger.error(f"{args.command} failed: {e.code}: {e.message}")
        emit(e.to_dict())
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {str(e)}", exc_info=True)
        emit({"error": {"code": "INTERNAL_ERROR", "message": "An unexpected error occurred", "details": {"type": type(e).__name__}}})
        return EXIT_INTERNAL

    emit(payload)
    logger.info(f"Finished {args.command} in {time.perf_counter() - started:.2f}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
