"""Deterministic CSV/JSON writers with provenance headers."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import __version__


def provenance(config) -> dict:
    return {
        "package": "beatsim",
        "version": __version__,
        "config_sha256": config.digest(),
        "master_seed": config.master_seed,
    }


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return repr(value) if math.isfinite(value) else ("nan" if value != value else repr(value))
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        # JSON has no NaN/inf; keep the file strictly valid
        return value if math.isfinite(value) else None
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_table(stem: Path, columns: dict, meta: dict, fmt: str = "csv") -> Path:
    """Write equal-length columns as ``stem.csv`` or ``stem.json``.

    CSV files start with ``# key=value`` comment lines carrying ``meta``.
    """
    stem = Path(stem)
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    lengths = {len(c) for c in data}
    if len(lengths) > 1:
        raise ValueError(f"columns of unequal length: {dict(zip(names, map(len, data)))}")
    if fmt == "json":
        return write_json(stem.with_suffix(".json"),
                          {"provenance": meta, "column_names": names,
                           "columns": {k: c for k, c in zip(names, data)}})
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    path = stem.with_suffix(".csv")
    lines = [f"# {k}={_cell(v)}" for k, v in meta.items()]
    lines.append(",".join(names))
    for row in zip(*data):
        lines.append(",".join(_cell(v) for v in row))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path: Path) -> dict:
    """Read a table written by :func:`write_table` into float arrays."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    names = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    out = {}
    for j, name in enumerate(names):
        col = [r[j] for r in rows]
        try:
            out[name] = np.array([float(x) for x in col])
        except ValueError:
            out[name] = np.array(col)
    return out
