"""Deterministic artifact writers: canonical JSON (sorted keys, sanitized
non-finite values, provenance block) and CSV emitters at 17 significant
digits so float64 values round-trip bit-exactly."""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from . import __version__

FLOAT_FMT = "%.17g"


def sanitize(obj):
    """Make an object JSON-safe: numpy scalars to Python, non-finite floats to
    strings, arrays to lists."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if np.isnan(f):
            return "nan"
        if np.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


_HASH_SECTIONS = ("domain", "nonlinearity", "field", "grid", "solver", "analysis")


def config_hash(config: dict) -> str:
    """Hash of the scientific configuration only (run-local keys such as the
    output directory do not change results and are excluded)."""
    core = {k: config[k] for k in _HASH_SECTIONS if k in config and config[k] is not None}
    text = json.dumps(sanitize(core), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(config: dict | None) -> dict:
    return {"tool": "hotspotlab", "version": __version__,
            "config_hash": config_hash(config or {})}


def canonical_json(obj, config: dict | None = None) -> str:
    doc = dict(sanitize(obj))
    doc["provenance"] = provenance(config)
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_json(path: str, obj, config: dict | None = None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(canonical_json(obj, config))


def write_text(path: str, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def levels_csv(components) -> str:
    """CSV of level-set components: one row per polyline vertex."""
    lines = ["t,component_id,vertex_index,x,y,closed,touches_boundary"]
    for comp in components:
        for k, (x, y) in enumerate(np.asarray(comp.polyline, dtype=float)):
            lines.append(",".join([
                FLOAT_FMT % comp.level, str(comp.index), str(k),
                FLOAT_FMT % x, FLOAT_FMT % y,
                "1" if comp.closed else "0",
                "1" if comp.touches_boundary else "0",
            ]))
    return "\n".join(lines) + "\n"


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
