"""Report serialization: JSON with 17 significant digits, human tables, CSV.

Reports are plain nested dicts/lists; insertion order is the field order.
The top-level ``timings`` key is the only run-dependent content and is
dropped by :func:`payload`.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

TIMINGS = "timings"


def format_float(x: float) -> str:
    """17 significant digits; ``nan``, ``inf`` and ``-inf`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = "%.17g" % x
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def to_plain(obj):
    """Convert numpy containers and scalars to builtin types (non-finite floats kept)."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _is_flat(seq):
    return all(not isinstance(v, (dict, list)) for v in seq)


def _encode(obj, indent, level):
    pad = " " * (indent * level)
    inner = " " * (indent * (level + 1))
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj) if math.isfinite(obj) else f'"{format_float(obj)}"'
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if _is_flat(obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        parts = [inner + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [inner + json.dumps(k) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(report, indent: int = 2) -> str:
    return _encode(to_plain(report), indent, 0) + "\n"


def payload(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != TIMINGS}


def payload_bytes(report: dict) -> bytes:
    return dumps(payload(report)).encode()


def loads(text: str):
    """Inverse of :func:`dumps` for numbers; non-finite floats stay as strings."""
    return json.loads(text)


# ---------------------------------------------------------------------------
# Human-readable and CSV renderings
# ---------------------------------------------------------------------------


def _short(v):
    if isinstance(v, float):
        return "%.6g" % v
    if isinstance(v, list) and _is_flat(v):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _is_history(v):
    return isinstance(v, list) and v and all(isinstance(r, dict) and "k" in r for r in v)


def _table_lines(obj, prefix=""):
    lines = []
    for key, val in obj.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            lines.extend(_table_lines(val, name + "."))
        elif _is_history(val):
            lines.append(f"{name}:")
            cols = ["k", "residual", "step_norm", "error", "condition", "x"]
            lines.append("  " + "  ".join(f"{c:>12}" for c in cols))
            for r in val:
                lines.append("  " + "  ".join(f"{_short(r.get(c)):>12}" for c in cols))
        elif isinstance(val, list) and val and not _is_flat(val) and all(isinstance(r, list) for r in val):
            lines.append(f"{name}:")
            for row in val:
                lines.append("  " + _short(row))
        elif isinstance(val, list) and val and all(isinstance(r, dict) for r in val):
            for i, r in enumerate(val):
                lines.extend(_table_lines(r, f"{name}[{i}]."))
        else:
            lines.append(f"{name}: {_short(val)}")
    return lines


def render_table(report: dict) -> str:
    return "\n".join(_table_lines(to_plain(report))) + "\n"


def _histories(obj, path=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            sub = f"{path}.{k}" if path else k
            if _is_history(v):
                yield sub, v
            else:
                yield from _histories(v, sub)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _histories(v, f"{path}[{i}]")


def _flatten(obj, path=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{path}.{k}" if path else k)
    elif isinstance(obj, list) and not _is_flat(obj):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{path}[{i}]")
    elif isinstance(obj, list):
        yield path, " ".join(format_float(v) if isinstance(v, float) else str(v) for v in obj)
    else:
        yield path, format_float(obj) if isinstance(obj, float) else ("" if obj is None else str(obj))


def render_csv(report: dict) -> str:
    """Solve histories as rows; reports without histories as key/value pairs."""
    plain = to_plain(payload(report))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    hist = list(_histories(plain))
    if hist:
        width = max(len(r["x"]) for _, rows in hist for r in rows)
        w.writerow(["history", "k", "residual", "step_norm", "error", "condition"]
                   + [f"x{i + 1}" for i in range(width)])
        for name, rows in hist:
            for r in rows:
                cells = [r.get(c) for c in ("residual", "step_norm", "error", "condition")]
                w.writerow([name, r["k"]] + ["" if c is None else format_float(c) for c in cells]
                           + [format_float(v) for v in r["x"]])
    else:
        w.writerow(["key", "value"])
        for k, v in _flatten(plain):
            w.writerow([k, v])
    return buf.getvalue()
