"""Experiment configuration: a versioned JSON document validated by a schema."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from ..process import CaseTag, RateSet

SCHEMA_VERSION = 1
KINDS = ("hydro", "gap", "diffusion", "variance", "greenkubo")

_number_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_int_list = {"type": "array", "items": {"type": "integer"}, "minItems": 1}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "kind", "rates"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "kind": {"enum": list(KINDS)},
        "rates": {
            "oneOf": [
                {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 5, "maxItems": 5},
                {
                    "type": "object",
                    "required": ["c_plus", "c_minus", "c_exchange", "c_annihilate", "c_create"],
                    "additionalProperties": False,
                    "properties": {
                        k: {"type": "number", "minimum": 0}
                        for k in ("c_plus", "c_minus", "c_exchange", "c_annihilate", "c_create")
                    },
                },
            ]
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "d": {"type": "integer", "minimum": 1},
                "N": {"type": "integer", "minimum": 2},
            },
        },
        "hydro": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "snapshots": {"type": "integer", "minimum": 2},
                "ensemble": {"type": "integer", "minimum": 1},
                "block_radius": {"type": ["integer", "null"], "minimum": 0},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "pde_snapshots": {"type": "integer", "minimum": 2},
                "initial": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "profile": {"enum": ["cos", "sin", "step", "constant"]},
                        "amplitude": {"type": "number"},
                        "offset": {"type": "number"},
                        "mode": {"type": "integer", "minimum": 1},
                        "left": {"type": "number", "minimum": -1, "maximum": 1},
                        "right": {"type": "number", "minimum": -1, "maximum": 1},
                        "sampling": {"enum": ["local_equilibrium", "deterministic"]},
                        "hole_fraction": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    },
                },
                "diffusion_table": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "method": {"enum": ["closed_form", "variational"]},
                        "k": {"type": "integer", "minimum": 0, "maximum": 3},
                        "points": {"type": "integer", "minimum": 3},
                    },
                },
            },
        },
        "gap": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "d": {"type": "integer", "minimum": 1},
                "N": _int_list,
                "K": _int_list,
                "variant": {"enum": ["full", "tilde", "meanfield", "torus"]},
                "min_ratio": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "diffusion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho": _number_list,
                "points": {"type": "integer", "minimum": 2},
                "k": _int_list,
            },
        },
        "variance": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "l": _int_list,
                "K": _int_list,
                "psi": {"enum": ["current"]},
            },
        },
        "greenkubo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
                "lambdas": _number_list,
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output": "out",
    "geometry": {"d": 1, "N": 64},
    "hydro": {
        "T": 0.05,
        "snapshots": 11,
        "ensemble": 20,
        "block_radius": None,
        "tolerance": 0.05,
        "pde_snapshots": 501,
        "initial": {
            "profile": "cos",
            "amplitude": 0.5,
            "offset": 0.0,
            "mode": 1,
            "left": 0.5,
            "right": -0.5,
            "sampling": "local_equilibrium",
            "hole_fraction": None,
        },
        "diffusion_table": {"method": "closed_form", "k": 1, "points": 41},
    },
    "gap": {"d": 1, "N": [3, 4, 5, 6, 7, 8], "K": [0], "variant": "full", "min_ratio": 0.5},
    "diffusion": {"points": 41, "k": [0, 1, 2]},
    "variance": {"l": [1, 2, 3], "K": [0], "psi": "current"},
    "greenkubo": {"rho": 0.0, "lambdas": [0.5, 0.25, 0.125, 0.0625], "tolerance": 1e-8},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    rates: RateSet
    data: dict  # fully merged document

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def output(self) -> Path:
        return Path(self.data["output"])

    def section(self, name: str) -> dict:
        return self.data[name]

    def with_overrides(self, **top_level) -> "ExperimentConfig":
        return from_dict(_merge(self.data, {k: v for k, v in top_level.items() if v is not None}))


def _rates_from(doc) -> RateSet:
    if isinstance(doc, dict):
        return RateSet(**{k: float(v) for k, v in doc.items()})
    return RateSet.from_sequence(doc)


def _check_prerequisites(kind: str, rates: RateSet) -> None:
    case = rates.case
    if kind == "hydro" and case in (CaseTag.CASE2, CaseTag.CASE3) and not rates.is_gradient():
        raise ConfigError(
            f"rates.gradient: {case} hydrodynamics requires the gradient condition, "
            f"defect {rates.gradient_defect():.6g}"
        )
    if kind in ("diffusion", "greenkubo") and case is not CaseTag.CASE1:
        raise ConfigError(f"rates: the {kind} experiment needs Case 1 rates, got {case}")


def from_dict(doc: dict) -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = [f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(msgs))
    try:
        rates = _rates_from(doc["rates"])
    except ValueError as exc:
        raise ConfigError(f"rates: {exc}") from exc
    merged = _merge(DEFAULTS, doc)
    _check_prerequisites(doc["kind"], rates)
    return ExperimentConfig(doc["kind"], rates, merged)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return from_dict(doc)
