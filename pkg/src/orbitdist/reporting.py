"""Report records, deterministic serialization and atomic file output.

Floats are printed with 17 significant digits so a value survives a
round trip through text on every platform.  Timing fields (``wall_time``,
``seconds`` and any ``*_seconds`` key) are the only parts of a report allowed to differ between
reruns of one config; ``payload`` strips them.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from fractions import Fraction

import numpy as np

SCHEMA_VERSION = "orbitdist.report/1"
CSV_SCHEMAS = {
    "orbit": ("index", "coordinate"),
    "wme": ("delta", "modulus", "contrast_modulus"),
    "bench": ("solver", "backend", "n", "seconds", "mean_cost", "gap", "gap_bound"),
}
TIMING_KEYS = frozenset({"wall_time", "seconds"})


def format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = "%.17g" % x
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _plain(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with 17-significant-digit floats and stable key order."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(parts) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(_plain(v), (int, float, str, bool)) or v is None for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def is_timing_key(key: str) -> bool:
    return key in TIMING_KEYS or key.endswith("_seconds")


def payload(obj):
    """Copy of a report without its timing fields."""
    if isinstance(obj, dict):
        return {k: payload(v) for k, v in obj.items() if not is_timing_key(k)}
    if isinstance(obj, list):
        return [payload(v) for v in obj]
    return obj


def csv_text(kind: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_SCHEMAS[kind])
    for row in rows:
        w.writerow([format_float(v).strip('"') if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write to a temporary sibling and rename it over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
