"""Run configuration: YAML files validated against a versioned JSON schema."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .errors import SchemaError

SCHEMA_VERSION = 1

DEFAULTS: dict = {
    "version": SCHEMA_VERSION,
    "seed": 0,
    "threads": 1,
    "output_dir": "out",
    "treated_fraction": 0.5,
    "graph": {
        "source": "sbm",
        "clusters": 40,
        "cluster_size": 50,
        "block": {"kind": "distance_decay", "scale": 2.0},
    },
    "outcomes": {
        "source": "distribution",
        "alpha": {"kind": "normal", "mean": 0.0, "sd": 1.0},
        "beta": {"kind": "constant", "value": 1.0},
        "gamma": {"kind": "constant", "value": 1.0},
        "center_alpha": False,
    },
    "design": {"mode": "permutation", "family": {"kind": "stratified"}},
    "estimator": "dim",
    "analysis": {"tier": "auto"},
    "optimizer": {"kind": "symmetric", "tier": "full", "objective": "auto", "vertex_cap": 64, "extra_random": 4},
    "simulation": {"replications": 1000, "realizations": 1},
    "var_shape": {
        "target_ratio": 1.0 / 12.0,
        "calibrate_alpha": True,
        "lambda_grid": [round(0.02 * k, 2) for k in range(21)] + [0.6, 0.8, 1.0, 1.5, 2.0, 5.0, "inf"],
    },
    "deterministic_comparison": {"randomized": "cluster_based", "vertex_cap": 64, "extra_random": 4},
    "enumerate": {"limit": 10_000_000},
}


def schema() -> dict:
    text = resources.files("satdesign").joinpath("schema/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _walk_inf(x):
    """YAML .inf becomes the string 'inf' so configs stay JSON-serialisable."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, dict):
        return {k: _walk_inf(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_walk_inf(v) for v in x]
    return x


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"config invalid at {where}: {exc.message}") from exc
    return cfg


def resolve(user: dict | None, seed: int | None = None) -> dict:
    """Defaults overlaid with the user's tree, then validated."""
    user = _walk_inf(user or {})
    if not isinstance(user, dict):
        raise SchemaError("config root must be a mapping")
    if "graph" in user and "source" in user["graph"] and user["graph"]["source"] == "files":
        base = copy.deepcopy(DEFAULTS)
        base["graph"] = {"source": "files"}
    else:
        base = DEFAULTS
    if "outcomes" in user and user["outcomes"].get("source") == "file":
        base = copy.deepcopy(base)
        base["outcomes"] = {"source": "file"}
    if "design" in user and ("pi" in user["design"] or "distribution" in user["design"]):
        base = copy.deepcopy(base)
        base["design"] = {}
    cfg = _merge(base, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    return validate(cfg)


def load(path: str | Path | None, seed: int | None = None) -> dict:
    if path is None:
        return resolve({}, seed)
    try:
        with Path(path).open(encoding="utf-8") as fh:
            user = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise SchemaError(f"cannot parse {path}: {exc}") from exc
    return resolve(user or {}, seed)


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def as_float(x) -> float:
    if isinstance(x, str):
        return math.inf if x in ("inf", "Infinity") else float(x)
    return float(x)
