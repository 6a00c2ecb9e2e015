"""Round-trip text output: floats with 17 significant digits, JSON views of
domain objects."""

from __future__ import annotations

import dataclasses
import json
import enum
import math

import numpy as np

from . import projgeo as pg


def fmt(x: float) -> str:
    return "%.17g" % float(x)


def to_jsonable(obj):
    """Plain JSON structure for results, geometric values and dataclasses."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, pg.ProjPoint):
        return [float(v) for v in obj.rep]
    if isinstance(obj, pg.ProjLine):
        return [float(v) for v in obj.normal]
    if isinstance(obj, pg.Flag):
        return {"point": to_jsonable(obj.point), "line": to_jsonable(obj.line)}
    if isinstance(obj, pg.OrientedFlag):
        return {"dir": to_jsonable(obj.dir), "conormal": to_jsonable(obj.conormal)}
    if isinstance(obj, pg.GroupElement):
        return [float(v) for v in obj.mat.ravel()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj):
        out = {"kind": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[f.name] = to_jsonable(getattr(obj, f.name))
        return out
    if hasattr(obj, "letters"):
        return str(obj)
    raise TypeError("cannot serialize %r" % type(obj).__name__)


def dumps(obj, indent: int | None = None) -> str:
    """JSON text with every float printed with 17 significant digits."""
    return _emit(to_jsonable(obj), indent, 0)


def _emit(v, indent, level) -> str:
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt(v) if math.isfinite(v) else "null"
    if isinstance(v, str):
        return json.dumps(v)
    nl = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = ","
    colon = ":" if indent is None else ": "
    if isinstance(v, list):
        if not v:
            return "[]"
        return "[" + sep.join(nl + _emit(x, indent, level + 1) for x in v) + end + "]"
    if not v:
        return "{}"
    items = (nl + _emit(str(k), indent, level + 1) + colon + _emit(x, indent, level + 1) for k, x in v.items())
    return "{" + sep.join(items) + end + "}"
