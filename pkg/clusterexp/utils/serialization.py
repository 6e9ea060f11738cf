"""
Serialization Helpers
Complex numbers as [re, im] pairs, set keys as comma-joined site lists,
JSON and CSV artifact writers.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Sequence

import numpy as np
from pydantic import BaseModel, BeforeValidator, PlainSerializer
from typing_extensions import Annotated

logger = logging.getLogger(__name__)


def parse_complex(value: Any) -> complex:
    """Accept [re, im], {"re","im"}, a number, or a complex."""
    if isinstance(value, complex):
        return value
    if isinstance(value, (int, float, np.number)):
        return complex(value)
    if isinstance(value, dict) and "re" in value:
        return complex(float(value["re"]), float(value.get("im", 0.0)))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ValueError(f"Cannot read complex number from {value!r}")


def encode_complex(value: complex) -> List[float]:
    value = complex(value)
    return [float(value.real), float(value.imag)]


ComplexValue = Annotated[complex, BeforeValidator(parse_complex), PlainSerializer(encode_complex, return_type=list)]


def set_key(sites: Iterable[int]) -> str:
    """frozenset({2, 0}) -> "0,2" """
    return ",".join(str(s) for s in sorted(sites))


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy/complex/model values to JSON types."""
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    if isinstance(obj, complex) or np.iscomplexobj(obj) and np.ndim(obj) == 0:
        return encode_complex(complex(obj))
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()] if np.iscomplexobj(obj) else obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj

def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True))
    logger.info(f"Wrote {path}")
    return path

def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.info(f"Wrote {path}")
    return path
