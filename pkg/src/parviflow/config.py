"""Experiment configuration: JSON schema, validation, and named presets.

Configs are nested JSON with four sections::

    {
      "target":  {"name": "synthetic2d"},          # or gaussian + mean/cov
      "sampler": {"method": "psghmc-fgh", "eps": 0.01, "sigma_inv": 1.0,
                  "C": 0.5, "n_particles": 50, "n_steps": 10000, "seed": 0,
                  "sg_noise_std": 0.0, "kernel_bandwidth": "median"},
      "init":    {"mean": [-2.0, -7.0], "std": 0.5},
      "output":  {"snapshot_every": 300, "metrics_every": 300}
    }

Parsing validates every field and reports all problems at once; unknown keys
are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, ConfigurationError
from .samplers import METHODS, SamplerConfig, init_ensemble
from .smoothing import KernelConfig
from .targets import TargetModel, make_target
from .utils import as_spd_matrix

Number = Union[int, float]

_TARGET_KEYS = {"synthetic2d": set(), "gaussian": {"mean", "cov"}}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; field types mirror the JSON exactly
    so that parse(serialize(cfg)) == cfg."""

    target: dict
    method: str
    eps: Number
    n_particles: int
    n_steps: int
    sigma_inv: object
    C: object
    kernel_bandwidth: object
    init_mean: list
    init_std: Number
    snapshot_every: int
    metrics_every: int
    seed: int
    sg_noise_std: Number

    def to_dict(self) -> dict:
        return {
            "target": dict(self.target),
            "sampler": {
                "method": self.method,
                "eps": self.eps,
                "sigma_inv": self.sigma_inv,
                "C": self.C,
                "n_particles": self.n_particles,
                "n_steps": self.n_steps,
                "seed": self.seed,
                "sg_noise_std": self.sg_noise_std,
                "kernel_bandwidth": self.kernel_bandwidth,
            },
            "init": {"mean": list(self.init_mean), "std": self.init_std},
            "output": {
                "snapshot_every": self.snapshot_every,
                "metrics_every": self.metrics_every,
            },
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_spd_field(value, dim: int, label: str, errors: list) -> None:
    if _is_number(value):
        if value <= 0:
            errors.append(f"{label}: scalar must be > 0")
        return
    if isinstance(value, list):
        try:
            as_spd_matrix(np.asarray(value, dtype=float), dim, name=label)
        except (ConfigurationError, ValueError):
            errors.append(f"{label}: not a symmetric positive definite matrix for dim {dim}")
        return
    errors.append(f"{label}: expected number or matrix, got {type(value).__name__}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a JSON config; raises :class:`ConfigError`
    listing every problem found."""
    errors: list = []
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be an object"])

    known_sections = {"target", "sampler", "init", "output"}
    for key in raw:
        if key not in known_sections:
            errors.append(f"unknown section '{key}'")
    for section in ("target", "sampler", "init"):
        if section not in raw:
            errors.append(f"missing required section '{section}'")
    if errors and any(e.startswith("missing") for e in errors):
        raise ConfigError(errors)

    target = raw.get("target", {})
    sampler = raw.get("sampler", {})
    init = raw.get("init", {})
    output = raw.get("output", {})
    for section, blob in (("target", target), ("sampler", sampler),
                          ("init", init), ("output", output)):
        if not isinstance(blob, dict):
            errors.append(f"section '{section}' must be an object")
            raise ConfigError(errors)

    name = target.get("name")
    dim = None
    if name not in _TARGET_KEYS:
        errors.append(f"target.name: unknown target {name!r}")
    else:
        allowed = _TARGET_KEYS[name] | {"name"}
        for key in target:
            if key not in allowed:
                errors.append(f"target.{key}: unknown key for target '{name}'")
        if name == "synthetic2d":
            dim = 2
        else:
            mean = target.get("mean")
            if not isinstance(mean, list) or not all(_is_number(v) for v in mean):
                errors.append("target.mean: gaussian target needs a numeric mean vector")
            else:
                dim = len(mean)
                _check_spd_field(target.get("cov", 1.0), dim, "target.cov", errors)

    sampler_keys = {
        "method", "eps", "sigma_inv", "C", "n_particles", "n_steps",
        "seed", "sg_noise_std", "kernel_bandwidth",
    }
    for key in sampler:
        if key not in sampler_keys:
            errors.append(f"sampler.{key}: unknown key")
    method = sampler.get("method")
    if method not in METHODS:
        errors.append(f"sampler.method: unknown method {method!r}; expected one of {METHODS}")
    eps = sampler.get("eps")
    if not _is_number(eps) or eps <= 0:
        errors.append("sampler.eps: must be a number > 0")
    n_particles = sampler.get("n_particles")
    if not isinstance(n_particles, int) or n_particles < 1:
        errors.append("sampler.n_particles: must be an integer >= 1")
    n_steps = sampler.get("n_steps")
    if not isinstance(n_steps, int) or n_steps < 0:
        errors.append("sampler.n_steps: must be an integer >= 0")
    seed = sampler.get("seed", 0)
    if not isinstance(seed, int):
        errors.append("sampler.seed: must be an integer")
    sg_noise = sampler.get("sg_noise_std", 0.0)
    if not _is_number(sg_noise) or sg_noise < 0:
        errors.append("sampler.sg_noise_std: must be a number >= 0")
    bandwidth = sampler.get("kernel_bandwidth", "median")
    if isinstance(bandwidth, str):
        if bandwidth != "median":
            errors.append("sampler.kernel_bandwidth: must be 'median' or a number > 0")
    elif not _is_number(bandwidth) or bandwidth <= 0:
        errors.append("sampler.kernel_bandwidth: must be 'median' or a number > 0")

    init_mean = init.get("mean")
    for key in init:
        if key not in {"mean", "std"}:
            errors.append(f"init.{key}: unknown key")
    if not isinstance(init_mean, list) or not all(_is_number(v) for v in init_mean):
        errors.append("init.mean: must be a numeric vector")
    elif dim is not None and len(init_mean) != dim:
        errors.append(f"init.mean: length {len(init_mean)} does not match target dim {dim}")
    init_std = init.get("std")
    if not _is_number(init_std) or init_std < 0:
        errors.append("init.std: must be a number >= 0")

    if dim is not None and method in METHODS and method != "blob":
        _check_spd_field(sampler.get("sigma_inv", 1.0), dim, "sampler.sigma_inv", errors)
        _check_spd_field(sampler.get("C", 0.5), dim, "sampler.C", errors)

    for key in output:
        if key not in {"snapshot_every", "metrics_every"}:
            errors.append(f"output.{key}: unknown key")
    snapshot_every = output.get("snapshot_every", 0)
    metrics_every = output.get("metrics_every", 0)
    for label, value in (("output.snapshot_every", snapshot_every),
                         ("output.metrics_every", metrics_every)):
        if not isinstance(value, int) or value < 0:
            errors.append(f"{label}: must be an integer >= 0")

    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        target=dict(target),
        method=method,
        eps=eps,
        n_particles=n_particles,
        n_steps=n_steps,
        sigma_inv=sampler.get("sigma_inv", 1.0),
        C=sampler.get("C", 0.5),
        kernel_bandwidth=bandwidth,
        init_mean=list(init_mean),
        init_std=init_std,
        snapshot_every=snapshot_every,
        metrics_every=metrics_every,
        seed=seed,
        sg_noise_std=sg_noise,
    )


PRESETS = {
    # Synthetic benchmark: 50 particles from N((-2, -7), 0.5^2 I), eps = 0.01,
    # sigma_inv = 1.0, C = 0.5, snapshots every 300 iterations up to 10000.
    "fig3": {
        "target": {"name": "synthetic2d"},
        "sampler": {
            "method": "psghmc-fgh",
            "eps": 0.01,
            "sigma_inv": 1.0,
            "C": 0.5,
            "n_particles": 50,
            "n_steps": 10000,
            "seed": 0,
            "sg_noise_std": 0.0,
            "kernel_bandwidth": "median",
        },
        "init": {"mean": [-2.0, -7.0], "std": 0.5},
        "output": {"snapshot_every": 300, "metrics_every": 300},
    },
    # Hyperparameter record of the topic-model benchmark (eps = 1e-3,
    # sigma_inv = 300, C = 0.1, 20 particles); target is a stand-in.
    "lda-params": {
        "target": {"name": "synthetic2d"},
        "sampler": {
            "method": "psghmc-fgh",
            "eps": 0.001,
            "sigma_inv": 300.0,
            "C": 0.1,
            "n_particles": 20,
            "n_steps": 1000,
            "seed": 0,
            "sg_noise_std": 0.0,
            "kernel_bandwidth": "median",
        },
        "init": {"mean": [-2.0, -7.0], "std": 0.5},
        "output": {"snapshot_every": 100, "metrics_every": 100},
    },
}


def load_preset(name: str, **overrides) -> ExperimentConfig:
    """Named config bundle, optionally overriding sampler-section fields."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset '{name}'; available: {sorted(PRESETS)}")
    raw = json.loads(json.dumps(PRESETS[name]))
    for key, value in overrides.items():
        raw["sampler"][key] = value
    return parse_config(json.dumps(raw))


def build_target(cfg: ExperimentConfig) -> TargetModel:
    params = {k: v for k, v in cfg.target.items() if k != "name"}
    return make_target(cfg.target["name"], params)


def build_sampler_config(cfg: ExperimentConfig) -> SamplerConfig:
    return SamplerConfig(
        method=cfg.method,
        step_size=float(cfg.eps),
        n_steps=cfg.n_steps,
        sigma_inv=cfg.sigma_inv if _is_number(cfg.sigma_inv)
        else np.asarray(cfg.sigma_inv, dtype=float),
        C=cfg.C if _is_number(cfg.C) else np.asarray(cfg.C, dtype=float),
        kernel_theta=KernelConfig(bandwidth=cfg.kernel_bandwidth, subset="theta"),
        kernel_r=KernelConfig(bandwidth=cfg.kernel_bandwidth, subset="r"),
        seed=cfg.seed,
        sg_noise_std=float(cfg.sg_noise_std),
    )


def build_ensemble(cfg: ExperimentConfig, target: TargetModel):
    momentum_sigma = None
    if cfg.method != "blob":
        si = as_spd_matrix(cfg.sigma_inv, target.dim, name="sigma_inv")
        sigma = np.linalg.inv(si)
        momentum_sigma = 0.5 * (sigma + sigma.T)
    return init_ensemble(
        n_particles=cfg.n_particles,
        dim=target.dim,
        init_mean=np.asarray(cfg.init_mean, dtype=float),
        init_std=float(cfg.init_std),
        momentum_sigma=momentum_sigma,
        seed=cfg.seed,
    )
