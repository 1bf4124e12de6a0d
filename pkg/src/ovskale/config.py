"""Experiment configuration: schema, validation, and runtime assembly.

One JSON document drives one run.  The schema rejects unknown keys so stale
or misspelled options fail fast instead of silently using defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from .errors import ConfigError
from .lattice import KernelPair, Torus, kernel_pair_from_spec
from .operators import ModelParams
from .scale import DEFAULT_REGULAR_CONSTANT, BoundModel, ScaleSpec, model_bound
from .series import SeriesConfig

_KERNEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["gaussian", "tophat", "table"]},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "amplitude": {"type": "number", "minimum": 0},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "radius": {"type": "number", "minimum": 0},
                "origin": {"type": "number", "minimum": 0},
                "values": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
    },
}

_EXPERIMENTS = {
    "evolve": {
        "required": ["name", "t"],
        "properties": {
            "name": {"const": "evolve"},
            "t": {"type": "number", "exclusiveMinimum": 0},
            "s": {"type": "number", "minimum": 0},
            "initial": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["product", "random"]},
                    "rho": {"type": "number", "minimum": 0},
                },
            },
            "flow_tau": {"type": "number", "exclusiveMinimum": 0},
            "check_apriori": {"type": "boolean"},
        },
    },
    "vlasov": {
        "required": ["name", "epsilons"],
        "properties": {
            "name": {"const": "vlasov"},
            "epsilons": {
                "type": "array",
                "items": {"type": "number", "minimum": 0},
            },
            "rho0": {"type": "number", "exclusiveMinimum": 0},
            "samples": {"type": "integer", "minimum": 1},
            "gap_time": {"type": "number", "exclusiveMinimum": 0},
            "gap_alpha_lo": {"type": "number", "exclusiveMinimum": 1},
            "gap_alpha_hi": {"type": "number", "exclusiveMinimum": 1},
        },
    },
    "kinetic": {
        "required": ["name", "t_end", "dt"],
        "properties": {
            "name": {"const": "kinetic"},
            "rho0": {
                "anyOf": [
                    {"type": "number", "minimum": 0},
                    {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                ]
            },
            "t_end": {"type": "number", "minimum": 0},
            "dt": {"type": "number", "exclusiveMinimum": 0},
            "store_every": {"type": "integer", "minimum": 1},
            "full_field": {"type": "boolean"},
        },
    },
    "bifurcation": {
        "required": ["name", "b_values", "c_values"],
        "properties": {
            "name": {"const": "bifurcation"},
            "b_values": {
                "type": "array",
                "minItems": 1,
                "items": {"type": "number", "minimum": 0},
            },
            "c_values": {
                "type": "array",
                "minItems": 1,
                "items": {"type": "number", "exclusiveMinimum": 0},
            },
            "x_hi": {"type": "number", "exclusiveMinimum": 0},
            "resolution": {"type": "integer", "minimum": 100},
            "fold_points": {"type": "integer", "minimum": 2},
        },
    },
    "bounds": {
        "required": ["name"],
        "properties": {
            "name": {"const": "bounds"},
            "samples": {"type": "integer", "minimum": 1},
        },
    },
    "horizon": {
        "required": ["name"],
        "properties": {
            "name": {"const": "horizon"},
            "search_hi": {"type": "number", "exclusiveMinimum": 1},
            "scan_points": {"type": "integer", "minimum": 10},
            "elapsed": {"type": "number", "minimum": 0},
        },
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ovskale experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "scale", "solver", "experiment", "seed"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["torus", "kernels", "m", "lambda", "truncation"],
            "properties": {
                "torus": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["dim", "sites", "spacing"],
                    "properties": {
                        "dim": {"type": "integer", "minimum": 1, "maximum": 3},
                        "sites": {"type": "integer", "minimum": 1},
                        "spacing": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "kernels": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["a", "phi"],
                    "properties": {"a": _KERNEL_SCHEMA, "phi": _KERNEL_SCHEMA},
                },
                "m": {"type": "number", "exclusiveMinimum": 0},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "epsilon": {"type": "number", "minimum": 0},
                "truncation": {"type": "integer", "minimum": 1, "maximum": 12},
            },
        },
        "scale": {
            "type": "object",
            "additionalProperties": False,
            "required": ["alpha_s", "alpha_star"],
            "properties": {
                "alpha_s": {"type": "number", "exclusiveMinimum": 1},
                "alpha_star": {"type": "number", "exclusiveMinimum": 1},
                "nu": {"type": "number", "minimum": 1},
                "n_hat": {"type": "number", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["upsilon"],
            "properties": {
                "upsilon": {"type": "number", "exclusiveMinimum": 0},
                "q": {"type": "number", "exclusiveMinimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 1},
                "grid_points": {"type": "integer", "minimum": 2},
                "n_max": {"type": "integer", "minimum": 1},
                "term_tol": {"type": "number", "exclusiveMinimum": 0},
                "quad_tol": {"type": "number", "exclusiveMinimum": 0},
                "majorant_slack": {"type": "number", "minimum": 0},
                "trajectory_points": {"type": "integer", "minimum": 2},
            },
        },
        "experiment": {
            "type": "object",
            "required": ["name"],
            "properties": {"name": {"enum": sorted(_EXPERIMENTS)}},
            "oneOf": [
                {
                    "properties": spec["properties"],
                    "required": spec["required"],
                    "additionalProperties": False,
                }
                for spec in _EXPERIMENTS.values()
            ],
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string", "minLength": 1},
    },
}


def schema_json() -> str:
    return json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True)


def validate_config(doc: dict) -> None:
    """Schema-check a configuration document; raises ConfigError on failure."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "(root)"
        raise ConfigError(f"config invalid at {where}: {first.message}")


def load_config(path: str) -> dict:
    """Read and schema-validate a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    validate_config(doc)
    return doc


def config_hash(doc: dict) -> str:
    """Hash of the canonical serialization, for run manifests."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class RuntimeBundle:
    """Everything a run needs, assembled from one validated document."""

    doc: dict
    torus: Torus
    kernels: KernelPair
    params: ModelParams
    truncation: int
    scale: ScaleSpec
    bound: BoundModel
    solver: SeriesConfig
    experiment: dict
    seed: int
    rng: np.random.Generator
    output: str | None


def build_runtime(doc: dict) -> RuntimeBundle:
    """Assemble validated config into live model objects.

    Semantic constraints beyond the schema (index ordering, kernel symmetry,
    horizon feasibility) surface here as ConfigError.
    """
    validate_config(doc)
    model = doc["model"]
    tor = model["torus"]
    try:
        torus = Torus(tor["dim"], tor["sites"], tor["spacing"])
        kernels = kernel_pair_from_spec(torus, model["kernels"]["a"], model["kernels"]["phi"])
        params = ModelParams(
            death_amplitude=model["m"],
            birth_intensity=model["lambda"],
            epsilon=model.get("epsilon", 1.0),
        )
        sc = doc["scale"]
        scale = ScaleSpec(
            alpha_s=sc["alpha_s"],
            alpha_star=sc["alpha_star"],
            nu=sc.get("nu", 1.0),
        )
        bound = model_bound(
            kernels, params, regular_constant=sc.get("n_hat", DEFAULT_REGULAR_CONSTANT)
        )
        sv = doc["solver"]
        solver = SeriesConfig(
            upsilon=sv["upsilon"],
            q=sv.get("q"),
            alpha=sv.get("alpha"),
            time_grid_points=sv.get("grid_points", 256),
            n_max=sv.get("n_max", 40),
            term_tol=sv.get("term_tol", 1e-10),
            quad_tol=sv.get("quad_tol"),
            majorant_slack=sv.get("majorant_slack", 1e-6),
            trajectory_points=sv.get("trajectory_points", 129),
        )
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err
    return RuntimeBundle(
        doc=doc,
        torus=torus,
        kernels=kernels,
        params=params,
        truncation=model["truncation"],
        scale=scale,
        bound=bound,
        solver=solver,
        experiment=dict(doc["experiment"]),
        seed=doc["seed"],
        rng=np.random.default_rng(doc["seed"]),
        output=doc.get("output"),
    )
