"""Experiment configuration: YAML in, validated dataclass out.

Validation collects every problem as a dotted-path message ("solver.step_size:
must be positive") before raising, so a bad file reports all its errors at
once.  The canonical serialized form (sorted JSON) feeds the config hash that
run outputs embed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from ..solvers import SolverConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "preset_path"]

_ENV_KINDS = ("chain", "random", "pointgoal", "cartpole")
_MODES = ("exact", "sampled")
_ALGORITHMS = ("crpo", "primal_dual")

# per-kind environment knobs with defaults; everything else is rejected
_ENV_FIELDS = {
    "chain": {"epsilon": 0.25, "gamma": 0.9},
    "random": {"num_states": 8, "num_actions": 3, "kl_radius": 0.05,
               "embedding_dim": 1, "env_seed": 0},
    "pointgoal": {},
    "cartpole": {},
}


class ConfigError(ValueError):
    """Carries the full list of field-level validation messages."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(
            f"  {e}" for e in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    out: str
    env_kind: str
    env: dict
    lam: float
    mode: str
    num_rollout: int
    num_siblings: int
    solver: SolverConfig
    budget: float | None = None
    seeds: tuple[int, ...] = field(default_factory=tuple)

    def repeat_seeds(self) -> tuple[int, ...]:
        return self.seeds if self.seeds else (self.seed,)

    def to_dict(self) -> dict:
        sol = {k: getattr(self.solver, k) for k in (
            "algorithm", "iterations", "step_size", "dual_step", "crpo_tolerance",
            "batch_episodes", "eval_every", "eval_samples", "policy_std",
            "baseline", "max_grad_norm")}
        return {
            "experiment": {"name": self.name, "seed": self.seed, "out": self.out,
                           "seeds": list(self.seeds)},
            "env": {"kind": self.env_kind, **self.env},
            "penalty": {"lam": self.lam, "mode": self.mode},
            "ensemble": {"num_rollout": self.num_rollout,
                         "num_siblings": self.num_siblings},
            "solver": sol,
            "budget": self.budget,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **kw) -> "ExperimentConfig":
        current = dict(
            name=self.name, seed=self.seed, out=self.out, env_kind=self.env_kind,
            env=self.env, lam=self.lam, mode=self.mode,
            num_rollout=self.num_rollout, num_siblings=self.num_siblings,
            solver=self.solver, budget=self.budget, seeds=self.seeds)
        current.update(kw)
        return ExperimentConfig(**current)


def _check(errors, cond: bool, path: str, message: str) -> bool:
    if not cond:
        errors.append(f"{path}: {message}")
    return cond


def _as_number(errors, mapping, key, path, default, *, integer=False,
               minimum=None, strict_min=None):
    value = mapping.get(key, default)
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if integer:
        ok = ok and float(value) == int(value)
    if not _check(errors, ok, f"{path}.{key}",
                  "must be an integer" if integer else "must be a number"):
        return default
    value = int(value) if integer else float(value)
    if minimum is not None and not _check(errors, value >= minimum,
                                          f"{path}.{key}", f"must be >= {minimum}"):
        return default
    if strict_min is not None and not _check(errors, value > strict_min,
                                             f"{path}.{key}",
                                             f"must be > {strict_min}"):
        return default
    return value


def from_mapping(raw: dict) -> ExperimentConfig:
    """Validate a parsed YAML mapping; raises ConfigError listing every issue."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level: must be a mapping"])
    known = {"experiment", "env", "penalty", "ensemble", "solver", "budget"}
    for key in raw:
        _check(errors, key in known, key, "unknown section")

    exp = raw.get("experiment") or {}
    _check(errors, isinstance(exp, dict), "experiment", "must be a mapping")
    exp = exp if isinstance(exp, dict) else {}
    name = exp.get("name", "run")
    _check(errors, isinstance(name, str) and name != "", "experiment.name",
           "must be a non-empty string")
    seed = _as_number(errors, exp, "seed", "experiment", 0, integer=True, minimum=0)
    out = exp.get("out", "runs/" + str(name))
    _check(errors, isinstance(out, str) and out != "", "experiment.out",
           "must be a non-empty string")
    seeds_raw = exp.get("seeds", [])
    seeds: tuple[int, ...] = ()
    if _check(errors, isinstance(seeds_raw, (list, tuple)), "experiment.seeds",
              "must be a list of integers"):
        ok = all(isinstance(s, int) and not isinstance(s, bool) and s >= 0
                 for s in seeds_raw)
        _check(errors, ok, "experiment.seeds", "must be a list of integers >= 0")
        if ok:
            seeds = tuple(int(s) for s in seeds_raw)

    env = raw.get("env") or {}
    _check(errors, isinstance(env, dict), "env", "must be a mapping")
    env = env if isinstance(env, dict) else {}
    kind = env.get("kind", "")
    if not _check(errors, kind in _ENV_KINDS, "env.kind",
                  f"must be one of {', '.join(_ENV_KINDS)}"):
        raise ConfigError(errors)
    fields = dict(_ENV_FIELDS[kind])
    for key in env:
        if key == "kind":
            continue
        _check(errors, key in fields, f"env.{key}",
               f"unknown field for kind '{kind}'")
    if kind == "chain":
        fields["epsilon"] = _as_number(errors, env, "epsilon", "env",
                                       fields["epsilon"], strict_min=0.0)
        _check(errors, fields["epsilon"] <= 0.25, "env.epsilon", "must be <= 0.25")
        fields["gamma"] = _as_number(errors, env, "gamma", "env", fields["gamma"],
                                     strict_min=0.0)
        _check(errors, fields["gamma"] < 1.0, "env.gamma", "must be < 1")
    elif kind == "random":
        for key in ("num_states", "num_actions", "embedding_dim"):
            fields[key] = _as_number(errors, env, key, "env", fields[key],
                                     integer=True, minimum=1)
        fields["kl_radius"] = _as_number(errors, env, "kl_radius", "env",
                                         fields["kl_radius"], strict_min=0.0)
        fields["env_seed"] = _as_number(errors, env, "env_seed", "env",
                                        fields["env_seed"], integer=True, minimum=0)

    pen = raw.get("penalty") or {}
    _check(errors, isinstance(pen, dict), "penalty", "must be a mapping")
    pen = pen if isinstance(pen, dict) else {}
    lam = _as_number(errors, pen, "lam", "penalty", 0.0, minimum=0.0)
    mode = pen.get("mode", "sampled")
    _check(errors, mode in _MODES, "penalty.mode",
           f"must be one of {', '.join(_MODES)}")
    if kind in ("pointgoal", "cartpole"):
        _check(errors, mode == "sampled", "penalty.mode",
               "continuous environments support sampled mode only")

    ens = raw.get("ensemble") or {}
    _check(errors, isinstance(ens, dict), "ensemble", "must be a mapping")
    ens = ens if isinstance(ens, dict) else {}
    num_rollout = _as_number(errors, ens, "num_rollout", "ensemble", 4,
                             integer=True, minimum=1)
    num_siblings = _as_number(errors, ens, "num_siblings", "ensemble", 8,
                              integer=True, minimum=1)

    sol = raw.get("solver") or {}
    _check(errors, isinstance(sol, dict), "solver", "must be a mapping")
    sol = sol if isinstance(sol, dict) else {}
    algorithm = sol.get("algorithm", "crpo")
    _check(errors, algorithm in _ALGORITHMS, "solver.algorithm",
           f"must be one of {', '.join(_ALGORITHMS)}")
    solver_kw = dict(
        algorithm=algorithm if algorithm in _ALGORITHMS else "crpo",
        iterations=_as_number(errors, sol, "iterations", "solver", 200,
                              integer=True, minimum=1),
        step_size=_as_number(errors, sol, "step_size", "solver", 0.2,
                             strict_min=0.0),
        dual_step=_as_number(errors, sol, "dual_step", "solver", 0.05,
                             strict_min=0.0),
        crpo_tolerance=_as_number(errors, sol, "crpo_tolerance", "solver", 0.0,
                                  minimum=0.0),
        batch_episodes=_as_number(errors, sol, "batch_episodes", "solver", 16,
                                  integer=True, minimum=1),
        eval_every=_as_number(errors, sol, "eval_every", "solver", 10,
                              integer=True, minimum=1),
        eval_samples=_as_number(errors, sol, "eval_samples", "solver", 8,
                                integer=True, minimum=1),
        policy_std=_as_number(errors, sol, "policy_std", "solver", 0.4,
                              strict_min=0.0),
        max_grad_norm=_as_number(errors, sol, "max_grad_norm", "solver", 0.0,
                                 minimum=0.0),
    )
    baseline = sol.get("baseline", True)
    _check(errors, isinstance(baseline, bool), "solver.baseline",
           "must be true or false")
    solver_kw["baseline"] = bool(baseline)
    for key in sol:
        _check(errors, key in solver_kw, f"solver.{key}", "unknown field")

    budget = raw.get("budget")
    if budget is not None:
        ok = isinstance(budget, (int, float)) and not isinstance(budget, bool)
        if _check(errors, ok, "budget", "must be a number or null"):
            budget = float(budget)
            _check(errors, budget > 0.0, "budget", "must be positive")
        else:
            budget = None

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(name=str(name), seed=seed, out=str(out),
                            env_kind=kind, env=fields, lam=lam, mode=mode,
                            num_rollout=num_rollout, num_siblings=num_siblings,
                            solver=SolverConfig(**solver_kw), budget=budget,
                            seeds=seeds)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"{path}: no such file"])
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    if raw is None:
        raw = {}
    return from_mapping(raw)


def preset_path(name: str) -> Path:
    """Path of a packaged preset ('example1', 'pointgoal', 'cartpole')."""
    base = resources.files("safedr.harness").joinpath("presets")
    candidate = Path(str(base.joinpath(name + ".yaml")))
    if not candidate.exists():
        raise ConfigError([f"preset '{name}' not found (have: "
                           + ", ".join(sorted(p.stem for p in Path(str(base)).glob('*.yaml')))
                           + ")"])
    return candidate


def dump_config(cfg: ExperimentConfig, path: Path) -> None:
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
