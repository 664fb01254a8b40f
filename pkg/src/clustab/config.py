"""Experiment configuration: JSON schema validation and defaults."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError

DEFAULTS = {
    "preprocessing": {"kind": None, "scale": 1},
    "clustering": {"linkage": "wpgma", "k": 16},
    "population": {"impute_excluded": False, "noise_sigma": 0.0, "seed": 0},
}

PERTURBATION_PARAMS = {
    "none": {},
    "sliding_window": {"window": None, "step": None},
    "odd_even": {},
    "regimes": {"breakpoints": None, "dates": None},
    "heart_tails": {},
    "multiscale": {"scales": [1, 2, 4, 8, 16, 32]},
    "maturities": {},
    "term_structure": {"dates": None, "n_dates": 4, "recovery": 0.4, "floor": None},
    "population_resample": {"keep_fraction": 0.8, "draws": 5, "seed": 0},
    "population_augment": {},
}
REQUIRED_PARAMS = {"sliding_window": ("window", "step")}


def schema() -> dict:
    text = resources.files("clustab").joinpath("config_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_config(raw: dict) -> dict:
    """Validate ``raw`` against the schema and return a copy with defaults filled in."""
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    cfg = copy.deepcopy(raw)
    for section, values in DEFAULTS.items():
        cfg[section] = {**values, **cfg.get(section, {})}
    cfg["distance"].setdefault("params", {})

    kind = cfg["perturbation"]["type"]
    params = cfg["perturbation"].get("params", {})
    allowed = PERTURBATION_PARAMS[kind]
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown params for perturbation {kind!r}: {unknown}")
    missing = [p for p in REQUIRED_PARAMS.get(kind, ()) if p not in params]
    if missing:
        raise ConfigError(f"perturbation {kind!r} requires params {missing}")
    cfg["perturbation"]["params"] = {**allowed, **params}

    needs_maturities = kind in ("maturities", "term_structure")
    if needs_maturities and "maturities" not in cfg["input"]:
        raise ConfigError(f"perturbation {kind!r} needs a 'maturities' input")
    if kind == "population_augment" and "csv" not in cfg["input"]:
        raise ConfigError("perturbation 'population_augment' needs a 'csv' input with incomplete assets")
    return cfg


def load_config(path: str | Path) -> tuple[dict, Path]:
    """Read and validate a config file; returns it with the directory relative paths resolve against."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return validate_config(raw), path.parent
