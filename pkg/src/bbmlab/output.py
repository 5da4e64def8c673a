"""File formats shared by the CLI and the library.

Profiles go out as CSV with a single JSON metadata line prefixed by '# ';
structured results go out as one JSON object with "meta" and "data" keys.
All writers are byte-deterministic for a given input (sorted keys, plain
repr floats, LF line endings) so that reruns with the same seed produce
identical files.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .bbm import EstimateWithCI, ModelSpec, SimConfig
from .offspring import validate


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps_meta(meta: dict) -> str:
    return json.dumps(_jsonable(meta), sort_keys=True, separators=(", ", ": "))


def config_hash(config: SimConfig) -> str:
    """Short stable digest of every field that influences the simulation."""
    payload = dumps_meta(simconfig_to_dict(config))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def simconfig_to_dict(config: SimConfig) -> dict:
    return {
        "model": {
            "lambda": config.model.lam,
            "offspring": list(config.model.offspring.coeffs),
            "start_x": config.model.start_x,
        },
        "dt": config.dt,
        "horizon_T": config.horizon_T,
        "max_particles": config.max_particles,
        "max_events": config.max_events,
        "seed": config.seed,
        "bridge_correction": config.bridge_correction,
    }


def simconfig_from_dict(doc: dict) -> SimConfig:
    m = doc["model"]
    model = ModelSpec(
        lam=float(m["lambda"]),
        offspring=validate(m["offspring"]),
        start_x=float(m["start_x"]),
    )
    horizon = doc.get("horizon_T", math.inf)
    if isinstance(horizon, str):
        horizon = math.inf
    kwargs = {}
    for key in ("dt", "max_particles", "max_events", "seed", "bridge_correction"):
        if key in doc:
            kwargs[key] = doc[key]
    return SimConfig(model=model, horizon_T=float(horizon), **kwargs)


def load_config(path: str | Path) -> dict:
    """Read a JSON or TOML config document (by file extension)."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode())
    return json.loads(text.decode())


def write_profile_csv(path: str | Path, xs, values, meta: dict) -> None:
    """CSV of (x, u) rows under a one-line JSON header comment."""
    lines = ["# " + dumps_meta(meta), "x,u"]
    for x, v in zip(np.asarray(xs), np.asarray(values)):
        lines.append(f"{float(x):.12g},{float(v):.12g}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode())


def read_profile_csv(path: str | Path) -> tuple[dict, np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0][2:])
    xs, vs = [], []
    for line in lines[2:]:
        if not line:
            continue
        a, b = line.split(",")
        xs.append(float(a))
        vs.append(float(b))
    return meta, np.array(xs), np.array(vs)


def write_rows_csv(path: str | Path, header: Sequence[str], rows, meta: dict | None = None) -> None:
    lines = []
    if meta is not None:
        lines.append("# " + dumps_meta(meta))
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_cell(c) for c in row))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode())


def _cell(c) -> str:
    if isinstance(c, float):
        return f"{c:.12g}"
    return str(c)


def write_json(path: str | Path, meta: dict, data) -> None:
    doc = {"meta": _jsonable(meta), "data": _jsonable(data)}
    Path(path).write_bytes(
        (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()
    )


def estimate_to_dict(est: EstimateWithCI) -> dict:
    return {"mean": est.mean, "n": est.n, "half_width_95": est.half_width_95}
