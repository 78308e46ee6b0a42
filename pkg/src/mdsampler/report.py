"""JSON and TSV output.

Reals are written with 17 significant digits so every double round-trips.
Non-finite reals become ``null``.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np


def _fmt(x):
    x = float(x)
    if not math.isfinite(x):
        return "null"
    s = "%.17g" % x
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(obj.to_dict() if hasattr(obj, "to_dict") else dataclasses.asdict(obj))
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def _encode(obj, indent, level):
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = ", " if indent is None else ","
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(k) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + (sep + pad).join(items) + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        # keep numeric vectors on one line
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, None, 0) for v in obj) + "]"
        return "[" + pad + (sep + pad).join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"can not serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(obj, path):
    text = dumps(obj)
    if path in (None, "-"):
        print(text, end="")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def adjacency_tsv(A, names=None):
    """Tab-separated matrix with a header row and row labels."""
    A = np.asarray(A)
    m = A.shape[0]
    names = names or [f"Z{i + 1}" for i in range(m)]
    lines = ["\t" + "\t".join(names)]
    for i in range(m):
        cells = [_fmt(v) for v in A[i]] if A.dtype.kind == "f" else [str(int(v)) for v in A[i]]
        lines.append(names[i] + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"
