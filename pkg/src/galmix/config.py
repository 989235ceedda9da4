"""Experiment configuration: loading, validation, overrides.

Configs are YAML (JSON is a subset) with four blocks -- model, noise,
coupling, run -- documented in docs/schemas.md.  Unknown keys are
rejected; numeric ranges are enforced by the owning constructors.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import yaml

from .coupling import CouplingParams
from .errors import ConfigError
from .noise import make_noise_spec
from .spectral import build_shell_model, build_torus_model

COMMANDS = ("simulate", "couple", "mix", "bel-check", "invariant", "small-noise")

_MODEL_KEYS = {"kind", "n_shells", "coupling", "mu1", "spacing", "cutoff",
               "nu", "f_amplitude", "f_modes"}
_NOISE_KEYS = {"kind", "s", "modulation", "scale"}
_COUPLING_KEYS = {"T", "delta", "dt", "rho", "max_macro_steps", "delta3"}
_RUN_KEYS = {"n_chains", "horizon", "burn_in", "root_seed", "out_dir",
             "threads", "decay_steps", "n_samples", "ball_radius",
             "pair_radius", "m_grid", "alphas", "observable",
             "observable_index", "bel_T", "bel_K0", "theta_nodes"}
_TOP_KEYS = {"command", "model", "noise", "coupling", "run"}

DEFAULTS = {
    "model": {"kind": "shell", "n_shells": 5, "coupling": 0.05, "mu1": 16.0,
              "spacing": 2.0, "cutoff": 2, "nu": 1.0, "f_amplitude": 0.01,
              "f_modes": [0]},
    "noise": {"kind": "constant_diagonal", "s": 2.75, "modulation": 0.5,
              "scale": 1.0},
    "coupling": {"T": 0.3, "delta": 0.006, "dt": 5.0e-4, "rho": 1.5,
                 "max_macro_steps": 200, "delta3": None},
    "run": {"n_chains": 400, "horizon": 6.0, "burn_in": 3.0,
            "root_seed": 12345, "out_dir": "out", "threads": 0,
            "decay_steps": 20, "n_samples": 400, "ball_radius": None,
            "pair_radius": None, "m_grid": [], "alphas": [],
            "observable": "coordinate", "observable_index": 0,
            "bel_T": 0.3, "bel_K0": None, "theta_nodes": 8},
}


@dataclass
class ExperimentConfig:
    command: str | None
    model: dict
    noise: dict
    coupling: dict
    run: dict

    def as_dict(self) -> dict:
        return {"command": self.command, "model": self.model,
                "noise": self.noise, "coupling": self.coupling,
                "run": self.run}

    def build_model(self):
        m = self.model
        f = {"amplitude": m["f_amplitude"], "modes": list(m["f_modes"])}
        if m["kind"] == "shell":
            return build_shell_model(m["n_shells"], m["coupling"], nu=m["nu"],
                                     mu1=m["mu1"], spacing=m["spacing"], f=f)
        if m["kind"] == "torus":
            return build_torus_model(m["cutoff"], nu=m["nu"], f=f)
        raise ConfigError(f"unknown model kind {m['kind']!r}")

    def build_noise(self, model):
        n = self.noise
        return make_noise_spec(model, kind=n["kind"], s=n["s"],
                               modulation_amplitude=n["modulation"],
                               scale=n["scale"])

    def build_coupling_params(self) -> CouplingParams:
        c = self.coupling
        return CouplingParams(T=c["T"], delta=c["delta"], dt=c["dt"],
                              rho=c["rho"],
                              max_macro_steps=int(c["max_macro_steps"]),
                              delta3=c["delta3"])


def _check_keys(block: dict, allowed: set, name: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")


def _merged(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    out.update(given)
    return out


def _coerce_numbers(block: dict, defaults: dict) -> None:
    """Convert numeric-looking strings to numbers for numeric fields.

    YAML 1.1 parses exponent forms without a decimal point ("1e-5") as
    strings; fields whose defaults are non-string scalars or numeric
    lists are coerced so such values behave as numbers.
    """
    def to_number(v):
        if isinstance(v, str):
            try:
                return float(v)
            except ValueError:
                return v
        return v

    for key, val in block.items():
        default = defaults.get(key)
        if isinstance(default, str):
            continue
        if isinstance(val, list):
            block[key] = [to_number(v) for v in val]
        else:
            block[key] = to_number(val)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    # a manifest written by a previous run round-trips as a config
    if "tool" in raw and "config" in raw:
        raw = raw["config"]
    _check_keys(raw, _TOP_KEYS, "top level")
    command = raw.get("command")
    if command is not None and command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    blocks = {}
    for name, allowed in (("model", _MODEL_KEYS), ("noise", _NOISE_KEYS),
                          ("coupling", _COUPLING_KEYS), ("run", _RUN_KEYS)):
        given = raw.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{name}] must be a mapping")
        _check_keys(given, allowed, name)
        blocks[name] = _merged(DEFAULTS[name], given)
        _coerce_numbers(blocks[name], DEFAULTS[name])
    cfg = ExperimentConfig(command=command, **blocks)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    return config_from_dict(raw if raw is not None else {})


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply dotted-key overrides like ``coupling.T=0.25``."""
    raw = cfg.as_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, _, value = item.partition("=")
        parts = key.strip().split(".")
        target = raw
        for p in parts[:-1]:
            if p not in target or not isinstance(target[p], dict):
                raise ConfigError(f"override path {key!r} does not exist")
            target = target[p]
        leaf = parts[-1]
        if leaf not in target:
            raise ConfigError(f"override key {key!r} is unknown")
        target[leaf] = yaml.safe_load(value)
    return config_from_dict(raw)


def validate(cfg: ExperimentConfig) -> None:
    """Range checks that do not require building the heavy objects."""
    m, n, c, r = cfg.model, cfg.noise, cfg.coupling, cfg.run
    try:
        if m["nu"] <= 0:
            raise ValueError("model.nu must be positive")
        if m["kind"] == "shell" and int(m["n_shells"]) < 3:
            raise ValueError("model.n_shells must be >= 3")
        if m["kind"] == "torus" and int(m["cutoff"]) < 1:
            raise ValueError("model.cutoff must be >= 1")
        if not 2.5 < float(n["s"]) <= 3.0:
            raise ValueError("noise.s must lie in (5/2, 3]")
        if float(n["scale"]) <= 0:
            raise ValueError("noise.scale must be positive")
        if n["kind"] == "modulated_diagonal" and not 0 <= float(n["modulation"]) < 1:
            raise ValueError("noise.modulation must lie in [0, 1)")
        if not 0 < float(c["dt"]) <= float(c["T"]):
            raise ValueError("coupling requires 0 < dt <= T")
        if float(c["delta"]) <= 0 or float(c["rho"]) <= 0:
            raise ValueError("coupling.delta and coupling.rho must be positive")
        if int(c["max_macro_steps"]) < 1:
            raise ValueError("coupling.max_macro_steps must be >= 1")
        if int(r["n_chains"]) < 1 or int(r["n_samples"]) < 1:
            raise ValueError("run.n_chains and run.n_samples must be >= 1")
        if float(r["horizon"]) <= 0 or float(r["burn_in"]) < 0:
            raise ValueError("run.horizon must be positive, run.burn_in >= 0")
        if int(r["threads"]) < 0:
            raise ValueError("run.threads must be >= 0")
        if int(r["decay_steps"]) < 1:
            raise ValueError("run.decay_steps must be >= 1")
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed configuration: {exc}")
    except ValueError as exc:
        raise ConfigError(str(exc))


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.as_dict(), indent=1, sort_keys=True)
