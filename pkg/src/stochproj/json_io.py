"""Byte-stable JSON: sorted keys, 17-significant-digit decimal floats, and
schema-checked loading of the measure and grid-function file formats.
Parse errors name the offending field so the CLI can report it."""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .measures import DiscreteMeasure, Grid, make_measure
from .transforms import GridFunction

__all__ = [
    "dumps",
    "load_measure",
    "load_grid_function",
    "parse_grid",
    "measure_digest",
    "SchemaError",
]


class SchemaError(ValueError):
    """Input JSON violates a file schema; `field` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _emit(obj, out: list, indent: int | None, depth: int) -> None:
    pad = "" if indent is None else "\n" + " " * (indent * (depth + 1))
    end_pad = "" if indent is None else "\n" + " " * (indent * depth)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, k in enumerate(sorted(obj, key=str)):
            if i:
                out.append("," if indent is None else ",")
            out.append(pad)
            out.append(json.dumps(str(k)))
            out.append(": ")
            _emit(obj[k], out, indent, depth + 1)
        out.append(end_pad)
        out.append("}")
    elif isinstance(obj, (list, tuple)) or isinstance(obj, np.ndarray):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not len(seq):
            out.append("[]")
            return
        out.append("[")
        for i, v in enumerate(seq):
            if i:
                out.append(",")
            out.append(pad)
            _emit(v, out, indent, depth + 1)
        out.append(end_pad)
        out.append("]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            out.append('"inf"' if v > 0 else '"-inf"')
        else:
            out.append(format(v, ".17g"))
    elif isinstance(obj, (np.integer, int)):
        out.append(str(int(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise TypeError(f"not JSON serializable: {type(obj)}")


def dumps(obj, indent: int | None = None) -> str:
    """Serialize with sorted keys and 17-significant-digit decimal floats;
    byte-stable across runs for equal inputs."""
    out: list = []
    _emit(obj, out, indent, 0)
    return "".join(out)


def _require(d: dict, field: str, kind, context: str):
    if field not in d:
        raise SchemaError(f"{context}.{field}", "missing")
    v = d[field]
    if kind is list and not isinstance(v, list):
        raise SchemaError(f"{context}.{field}", "expected a list")
    return v


def load_measure(text_or_dict, context: str = "measure") -> DiscreteMeasure:
    """Parse {"points": [[..],..], "weights": [..]}."""
    d = text_or_dict
    if isinstance(d, (str, bytes)):
        try:
            d = json.loads(d)
        except json.JSONDecodeError as exc:
            raise SchemaError(context, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(d, dict):
        raise SchemaError(context, "expected a JSON object")
    pts = _require(d, "points", list, context)
    wts = _require(d, "weights", list, context)
    try:
        return make_measure(pts, wts)
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{context}.points/weights", str(exc)) from exc


def parse_grid(d, context: str = "grid") -> Grid:
    if not isinstance(d, dict):
        raise SchemaError(context, "expected a JSON object")
    lo = _require(d, "lo", list, context)
    hi = _require(d, "hi", list, context)
    n = _require(d, "n", list, context)
    try:
        return Grid(lo=lo, hi=hi, n=tuple(int(v) for v in n))
    except (ValueError, TypeError) as exc:
        raise SchemaError(context, str(exc)) from exc


def load_grid_function(text_or_dict, context: str = "grid_function") -> GridFunction:
    """Parse {"grid": {"lo": [...], "hi": [...], "n": [...]}, "values": [...]}
    with row-major node ordering (last axis fastest)."""
    d = text_or_dict
    if isinstance(d, (str, bytes)):
        try:
            d = json.loads(d)
        except json.JSONDecodeError as exc:
            raise SchemaError(context, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(d, dict):
        raise SchemaError(context, "expected a JSON object")
    grid = parse_grid(_require(d, "grid", dict if False else object, context), f"{context}.grid")
    values = _require(d, "values", list, context)
    vals = [float("inf") if v == "inf" else float(v) for v in values]
    try:
        return GridFunction(grid, np.asarray(vals))
    except ValueError as exc:
        raise SchemaError(f"{context}.values", str(exc)) from exc


def measure_digest(mu: DiscreteMeasure) -> str:
    """Stable content hash used to match primal and dual artifacts."""
    return hashlib.sha256(dumps(mu.to_json_dict()).encode()).hexdigest()[:16]
