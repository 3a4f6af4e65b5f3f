"""Run configuration: JSON schema, defaults, ``--set`` overrides and presets."""

from __future__ import annotations

import copy
import dataclasses
import json
import os

import jsonschema

from . import streams
from .errors import ConfigError, DivergentMomentError, MassError, NonGeneratorError, SfdeError
from .history import InitialSegment
from .integrator import GridSpec, dyadic_factor
from .model import builtin
from .regimes import RegimeGenerator

OUTPUT_ROOT_ENV = "SFDETRUNC_OUTPUT_ROOT"

DEFAULTS = {
    "model": {"id": "volatility54"},
    "initial": None,
    "r": None,
    "regime": {"generator": None, "initial_state": None},
    "grid": {"k1": 64, "k": 14, "T": 10},
    "scheme": "auto",
    "truncation": {"H": None, "exponent": -0.25},
    "seeds": {"master": 42, "noise": None, "regime": None},
    "samples": 1,
    "sample_indices": None,
    "batch_size": 256,
    "workers": 1,
    "guard": 1e8,
    "sup_error": False,
    "study": {"kind": "none"},
    "output_dir": "out",
}

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_pos_int = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["id"],
            "properties": {"id": {"enum": ["volatility54", "lotka55", "linear_test"]}},
        },
        "initial": {"type": ["object", "array", "null"]},
        "r": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "regime": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "generator": {"type": ["array", "null"], "items": {"type": "array", "items": _num}},
                "initial_state": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["k1", "k", "T"],
            "properties": {"k1": _pos_int, "k": _pos_int, "T": {"type": "number", "exclusiveMinimum": 0}},
        },
        "scheme": {"enum": ["em", "truncated-em", "auto"]},
        "truncation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"H": {"type": ["number", "null"], "exclusiveMinimum": 0}, "exponent": _num},
        },
        "seeds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "master": {"type": "integer", "minimum": 0},
                "noise": {"type": ["integer", "null"], "minimum": 0},
                "regime": {"type": ["integer", "null"], "minimum": 0},
            },
        },
        "samples": _pos_int,
        "sample_indices": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
        "batch_size": _pos_int,
        "workers": _pos_int,
        "guard": {"type": "number", "exclusiveMinimum": 0},
        "sup_error": {"type": "boolean"},
        "study": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["none", "k", "dt"]},
                "k_values": {"type": "array", "items": _pos_int, "minItems": 1},
                "k_ref": _pos_int,
                "dt_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "dt_ref": {"type": "number", "exclusiveMinimum": 0},
                "slope_band": {"type": "array", "items": _opt_num, "minItems": 2, "maxItems": 2},
            },
        },
        "output_dir": {"type": "string"},
    },
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "model":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_set(cfg: dict, assignment: str) -> dict:
    """Apply one ``dotted.path=value`` override; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"expected path=value, got {assignment!r}", "--set")
    path, text = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = parse_value(text)
    return cfg


def resolve(raw: dict, sets=()) -> dict:
    """Defaults, then ``raw``, then ``--set`` overrides; validated against the schema."""
    if "config" in raw and "derived" in raw:  # a simulate manifest replays its own config
        raw = raw["config"]
    cfg = _merge(DEFAULTS, raw)
    for s in sets:
        apply_set(cfg, s)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, "/".join(str(p) for p in e.absolute_path) or "<root>")
    return cfg


def load(path=None, sets=()) -> dict:
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(str(exc), str(path)) from None
    return resolve(raw, sets)


def build_model(cfg: dict):
    """Instantiate the configured model; construction errors propagate unchanged."""
    params = {k: v for k, v in cfg["model"].items() if k != "id"}
    mod = builtin(cfg["model"]["id"], params)
    changes = {}
    if cfg.get("r") is not None:
        changes["r"] = float(cfg["r"])
    r = changes.get("r", mod.r)
    if cfg.get("initial") is not None:
        changes["initial"] = InitialSegment.from_config(cfg["initial"], mod.dim, r)
    reg = cfg.get("regime") or {}
    if reg.get("generator") is not None:
        changes["generator"] = RegimeGenerator(reg["generator"])
    if reg.get("initial_state") is not None:
        changes["initial_state"] = int(reg["initial_state"])
    if changes:
        mod = dataclasses.replace(mod, **changes)
    return mod


def checked_model(cfg: dict):
    """Model plus the semantic checks that gate every run; failures become :class:`ConfigError`."""
    try:
        mod = build_model(cfg)
    except MassError as exc:
        raise ConfigError(str(exc), "model") from None
    except NonGeneratorError as exc:
        raise ConfigError(str(exc), "regime/generator") from None
    except (SfdeError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc), "model") from None
    try:
        mod.check_phase_space()
    except DivergentMomentError as exc:
        raise ConfigError(f"r={mod.r} is not below the moment boundary of every delay measure ({exc})", "r") from None
    grid = cfg["grid"]
    try:
        GridSpec(grid["k1"], grid["k"], grid["T"])
    except ValueError as exc:
        raise ConfigError(str(exc), "grid") from None
    study = cfg["study"]
    T = grid["T"]
    if study["kind"] == "k":
        for key in ("k_values", "k_ref"):
            if key not in study:
                raise ConfigError("missing for a k study", f"study/{key}")
        if not study["k_ref"] > max(study["k_values"]) > T:
            raise ConfigError("need k_ref > max(k_values) > T", "study/k_values")
    elif study["kind"] == "dt":
        for key in ("dt_values", "dt_ref"):
            if key not in study:
                raise ConfigError("missing for a dt study", f"study/{key}")
        try:
            for d in study["dt_values"]:
                dyadic_factor(d, study["dt_ref"])
                GridSpec.from_dt(d, grid["k"], T)
            GridSpec.from_dt(study["dt_ref"], grid["k"], T)
        except (SfdeError, ValueError) as exc:
            raise ConfigError(str(exc), "study/dt_values") from None
    return mod


def seeds(cfg: dict):
    s = cfg["seeds"]
    noise = s["noise"] if s.get("noise") is not None else streams.derive_seed(s["master"], streams.NOISE)
    regime = s["regime"] if s.get("regime") is not None else streams.derive_seed(s["master"], streams.REGIME)
    return int(noise), int(regime)


def output_dir(cfg: dict, override=None) -> str:
    out = override or cfg["output_dir"]
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    return out


def replay_config(cfg: dict) -> dict:
    """The config as stored in manifests: everything except where output went."""
    return {k: v for k, v in cfg.items() if k != "output_dir"}


# Desk-scale renditions of the two worked examples.
PRESETS = {
    "example54-k": {
        "model": {"id": "volatility54"},
        "grid": {"k1": 64, "k": 50, "T": 10},
        "scheme": "truncated-em",
        "samples": 1000,
        "study": {"kind": "k", "k_values": [4, 6, 8, 10, 12], "k_ref": 50},
        "output_dir": "example54-k",
    },
    "example54-dt": {
        "model": {"id": "volatility54"},
        "grid": {"k1": 64, "k": 12, "T": 10},
        "scheme": "truncated-em",
        "samples": 1000,
        "batch_size": 64,
        "study": {"kind": "dt", "dt_values": [2.0 ** -e for e in range(5, 10)], "dt_ref": 2.0 ** -12},
        "output_dir": "example54-dt",
    },
    "example55-k": {
        "model": {"id": "lotka55"},
        "grid": {"k1": 64, "k": 50, "T": 10},
        "scheme": "truncated-em",
        "samples": 1000,
        "study": {"kind": "k", "k_values": [4, 6, 8, 10, 12], "k_ref": 50},
        "output_dir": "example55-k",
    },
    "example55-dt": {
        "model": {"id": "lotka55"},
        "grid": {"k1": 64, "k": 30, "T": 10},
        "scheme": "truncated-em",
        "samples": 1000,
        "batch_size": 32,
        "study": {"kind": "dt", "dt_values": [2.0 ** -e for e in range(5, 10)], "dt_ref": 2.0 ** -12},
        "output_dir": "example55-dt",
    },
}


def preset(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", "preset") from None
