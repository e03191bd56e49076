"""Run configuration: named profiles, schema validation and run manifests."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema
import yaml

from . import __version__

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}
_opt_count = {"anyOf": [_count, {"type": "null"}]}
_opt_pos = {"anyOf": [_pos, {"type": "null"}]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


INFERENCE_SCHEMA = _obj({
    "method": {"enum": ["dibs", "mcmc", "mh-mcmc", "gibbs-mcmc"]},
    "n_particles": _count,
    "n_steps": {"type": "integer", "minimum": 0},
    "alpha_slope": _nonneg,
    "beta_slope": _nonneg,
    "gamma_z": _pos,
    "gamma_theta": _pos,
    "latent_dim": _opt_count,
    "sigma_z": _opt_pos,
    "mc_samples": _count,
    "learning_rate": _pos,
    "rmsprop_decay": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    "tau": _pos,
    "estimator": {"enum": ["score", "gumbel"]},
    "hard_forward": {"type": "boolean"},
    "baseline": _num,
    "scalar_latent": {"type": "boolean"},
    "minibatch_size": _opt_count,
    "log_every": {"type": "integer", "minimum": 0},
})

MCMC_SCHEMA = _obj({
    "burn_in": {"type": "integer", "minimum": 0},
    "thinning": _count,
    "samples": _count,
    "proposal_scale": _pos,
    "invalid_moves": {"enum": ["stay", "retry"]},
})

MODEL_SCHEMA = _obj({
    "family": {"enum": ["bge", "lingauss", "nonlingauss"]},
    "obs_noise": _pos,
    "hidden": {"type": "array", "items": _count, "minItems": 1},
    "bge_alpha_mu": _pos,
    "bge_alpha_omega": _opt_pos,
    "bge_t": _opt_pos,
})

DATA_SCHEMA = _obj({
    "instance": {"type": "string"},
    "csv": {"type": "string"},
    "preset": {"enum": ["mec4"]},
    "standardize": {"type": "boolean"},
    "n_train": _count,
})

GRAPH_PRIOR_SCHEMA = _obj({
    "kind": {"enum": ["er", "sf", "uniform"]},
    "edge_prob": {"anyOf": [{"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                            {"type": "null"}]},
})

GENERATE_SCHEMA = _obj({
    "family": {"enum": ["lingauss", "nonlingauss"]},
    "graph_kind": {"enum": ["er", "sf"]},
    "d": {"type": "integer", "minimum": 2},
    "preset": {"enum": ["mec4"]},
    "n_train": _count,
    "n_heldout": _count,
    "n_interventions": {"type": "integer", "minimum": 0},
    "n_interv_obs": _count,
    "interv_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "obs_noise": _pos,
    "hidden": {"type": "array", "items": _count, "minItems": 1},
})

METRIC_LIST = {"type": "array", "items": {"enum": ["e_shd", "auroc", "neg_ll", "neg_ill"]},
               "uniqueItems": True}

EVALUATE_SCHEMA = _obj({
    "posterior": {"type": "string"},
    "instance": {"type": "string"},
    "metrics": METRIC_LIST,
})

METHOD_SCHEMA = _obj({
    "name": {"type": "string"},
    "kind": {"enum": ["dibs-joint", "dibs-marginal", "mcmc", "mh-mcmc", "gibbs-mcmc", "empty"]},
    "options": {"type": "object"},
}, required=("name", "kind"))

BENCHMARK_SCHEMA = _obj({
    "n_instances": _count,
    "family": {"enum": ["lingauss", "nonlingauss"]},
    "graph_kind": {"enum": ["er", "sf"]},
    "d": {"type": "integer", "minimum": 2},
    "n_train": _count,
    "methods": {"type": "array", "items": METHOD_SCHEMA, "minItems": 1},
    "metrics": METRIC_LIST,
    "timing": {"type": "boolean"},
})

CONFIG_SCHEMA = _obj({
    "profile": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "threads": {"anyOf": [_count, {"type": "null"}]},
    "data": DATA_SCHEMA,
    "model": MODEL_SCHEMA,
    "graph_prior": GRAPH_PRIOR_SCHEMA,
    "inference": INFERENCE_SCHEMA,
    "mcmc": MCMC_SCHEMA,
    "generate": GENERATE_SCHEMA,
    "evaluate": EVALUATE_SCHEMA,
    "benchmark": BENCHMARK_SCHEMA,
    "version": {"type": "string"},
})

DEFAULTS = {
    "seed": 0,
    "threads": None,
    "model": {"family": "lingauss", "obs_noise": 0.1, "hidden": [5], "bge_alpha_mu": 1.0,
              "bge_alpha_omega": None, "bge_t": None},
    "graph_prior": {"kind": "er", "edge_prob": None},
    "inference": {"method": "dibs", "n_particles": 30, "n_steps": 3000, "alpha_slope": 0.2,
                  "beta_slope": 1.0, "gamma_z": 5.0, "gamma_theta": 500.0, "latent_dim": None,
                  "sigma_z": None, "mc_samples": 128, "learning_rate": 0.005,
                  "rmsprop_decay": 0.9, "tau": 1.0, "estimator": "gumbel",
                  "hard_forward": False, "baseline": 0.0, "scalar_latent": False,
                  "minibatch_size": None, "log_every": 10},
    "mcmc": {"burn_in": 100_000, "thinning": 10_000, "samples": 30, "proposal_scale": 0.05,
             "invalid_moves": "stay"},
    "generate": {"family": "lingauss", "graph_kind": "er", "d": 20, "n_train": 100,
                 "n_heldout": 100, "n_interventions": 10, "n_interv_obs": 100,
                 "interv_fraction": 0.1, "obs_noise": 0.1, "hidden": [5]},
    "evaluate": {"metrics": ["e_shd", "auroc", "neg_ll", "neg_ill"]},
    "benchmark": {"n_instances": 10, "family": "lingauss", "graph_kind": "er", "d": 20,
                  "n_train": 100, "metrics": ["e_shd", "auroc", "neg_ll", "neg_ill"],
                  "timing": False},
}


def _profile(family, alpha, gamma_z, gamma_theta=None, d=20):
    inf = {"alpha_slope": alpha, "gamma_z": gamma_z}
    if gamma_theta is not None:
        inf["gamma_theta"] = gamma_theta
    if family == "bge":
        inf["estimator"] = "score"
    return {"model": {"family": family}, "inference": inf,
            "generate": {"family": "nonlingauss" if family == "nonlingauss" else "lingauss",
                         "d": d}}


PROFILES = {
    "bge-d20": _profile("bge", 2.0, 2.0),
    "bge-d50": _profile("bge", 2.0, 50.0, d=50),
    "lingauss-d20": _profile("lingauss", 0.2, 5.0, 500.0),
    "lingauss-d50": _profile("lingauss", 0.02, 15.0, 1000.0, d=50),
    "nonlin-d20": _profile("nonlingauss", 0.02, 5.0, 1000.0),
    "nonlin-d50": _profile("nonlingauss", 0.01, 15.0, 2000.0, d=50),
    "mec4": {"model": {"family": "bge"}, "graph_prior": {"kind": "uniform"},
                "data": {"preset": "mec4"},
                "inference": {"alpha_slope": 0.2, "gamma_z": 5.0, "estimator": "score"}},
}


class ConfigError(ValueError):
    """Raised with every schema violation listed in the message."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "options":
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> None:
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path)):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        errors.append(f"{where}: {err.message}")
    if errors:
        raise ConfigError(errors)


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Read a YAML (or JSON) file, apply its profile and defaults, validate."""
    user: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        user = yaml.safe_load(path.read_text()) or {}
        if not isinstance(user, dict):
            raise ConfigError(["<root>: config must be a mapping"])
        if "config" in user and "config_sha256" in user:
            user = user["config"]  # a manifest written by a previous run
    if overrides:
        user = deep_merge(user, overrides)
    validate(user)
    profile = user.get("profile")
    if profile is not None and profile not in PROFILES:
        raise ConfigError([f"profile: unknown profile {profile!r}; known: {sorted(PROFILES)}"])
    cfg = deep_merge(DEFAULTS, PROFILES.get(profile, {}))
    cfg = deep_merge(cfg, user)
    validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def manifest(cfg: dict, command: str) -> dict:
    return {"command": command, "version": __version__, "seed": cfg.get("seed"),
            "config_sha256": config_hash(cfg), "config": cfg}


def write_manifest(directory, cfg: dict, command: str) -> Path:
    path = Path(directory) / "manifest.json"
    path.write_text(json.dumps(manifest(cfg, command), indent=2, sort_keys=True) + "\n")
    return path
