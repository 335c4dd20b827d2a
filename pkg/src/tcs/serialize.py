"""Deterministic JSON and CSV output.

Floats are written with 17 significant digits (``format(x, ".17g")``) so the
same inputs always give the same bytes; non-finite floats become the strings
``"inf"``, ``"-inf"`` and ``"nan"``.  Dict order is preserved.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import math
import platform
from pathlib import Path

import numpy as np

__all__ = ["to_plain", "dumps", "write_text", "write_csv", "environment_versions", "fmt_float"]


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def to_plain(obj):
    """Convert dataclasses, enums and numpy values into JSON-ready builtins."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, enum.Enum):
        return to_plain(obj.value)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _emit(obj, out, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        s = fmt_float(obj)
        out.append(s if math.isfinite(obj) else json.dumps(s))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            out.append("[")
            for k, v in enumerate(obj):
                if k:
                    out.append(", ")
                _emit(v, out, indent, level + 1)
            out.append("]")
            return
        out.append("[\n")
        for k, v in enumerate(obj):
            out.append(pad)
            _emit(v, out, indent, level + 1)
            out.append(",\n" if k < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for k, (key, v) in enumerate(items):
            out.append(pad + json.dumps(key, ensure_ascii=False) + ": ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if k < len(items) - 1 else "\n")
        out.append(end + "}")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    out: list[str] = []
    _emit(to_plain(obj), out, indent, 0)
    out.append("\n")
    return "".join(out)


def write_text(text: str, path) -> None:
    Path(path).write_text(text, encoding="utf-8")


def write_csv(rows, header, path=None) -> str:
    """Write ``rows`` under ``header``; floats use the 17-digit format."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else
                    ("" if v is None else v) for v in row])
    text = buf.getvalue()
    if path is not None:
        write_text(text, path)
    return text


def environment_versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "tcs": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }
