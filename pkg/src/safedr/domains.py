"""Domain randomization: parameter boxes, deterministic sampling, mixtures.

A domain is a parameter vector xi drawn uniformly from a phase-specific box;
a family turns xi into a concrete environment.  Sampling is splittable: the
stream for rollout domain i (and sibling j of domain i) depends only on the
seed and the indices, never on how many domains are requested.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cmdp import TabularCMDP, TabularPolicy, evaluate_policy

__all__ = [
    "DomainParamSpec",
    "DomainDistribution",
    "DomainFamily",
    "EnsembleSpec",
    "DomainSamples",
    "sample_domains",
    "sample_box",
    "derive_stream",
    "dr_objective",
    "mixture_kernel",
]

_ROLLOUT_TAG = 0
_SIBLING_TAG = 1
_MAX_SEED = 2**64


@dataclass(frozen=True)
class DomainParamSpec:
    """One randomized parameter: closed ranges per phase, additive or multiplicative."""

    name: str
    train_range: tuple[float, float]
    eval_range: tuple[float, float]
    mode: str = "additive"

    def __post_init__(self):
        for rng in (self.train_range, self.eval_range):
            if len(rng) != 2 or rng[0] > rng[1]:
                raise ValueError(f"range for {self.name!r} must be (lo, hi) with lo <= hi")
        if self.mode not in ("additive", "multiplicative"):
            raise ValueError("mode must be 'additive' or 'multiplicative'")

    def range_for(self, phase: str) -> tuple[float, float]:
        return self.train_range if phase == "train" else self.eval_range

    def apply(self, base: float, value: float) -> float:
        return base + value if self.mode == "additive" else base * value


@dataclass(frozen=True)
class DomainDistribution:
    """Uniform distribution over the box spanned by the parameter ranges of a phase."""

    params: tuple[DomainParamSpec, ...]
    phase: str = "train"

    def __post_init__(self):
        if self.phase not in ("train", "eval"):
            raise ValueError("phase must be 'train' or 'eval'")
        if not self.params:
            raise ValueError("at least one parameter is required")
        object.__setattr__(self, "params", tuple(self.params))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def box(self) -> np.ndarray:
        """(P, 2) array of lows/highs for the active phase."""
        return np.array([p.range_for(self.phase) for p in self.params], dtype=float)

    def with_phase(self, phase: str) -> "DomainDistribution":
        return DomainDistribution(self.params, phase)


@dataclass(frozen=True)
class DomainFamily:
    """Maps a parameter vector to an environment; base_env is the nominal one."""

    builder: Callable[[np.ndarray], object]
    base_env: object
    distribution: DomainDistribution

    def build(self, xi) -> object:
        return self.builder(np.asarray(xi, dtype=float))


@dataclass(frozen=True)
class EnsembleSpec:
    """How many rollout domains (N), siblings per domain (n), and the seed."""

    num_rollout: int
    num_siblings: int
    seed: int

    def __post_init__(self):
        if self.num_rollout < 1:
            raise ValueError("num_rollout must be >= 1")
        if self.num_siblings < 1:
            raise ValueError("num_siblings must be >= 1")
        if not (0 <= int(self.seed) < _MAX_SEED):
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class DomainSamples:
    """rollout[i] is domain i's parameters; siblings[i, j] its j-th sibling."""

    rollout: np.ndarray
    siblings: np.ndarray
    names: tuple[str, ...]


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed),) + key)))


def derive_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator keyed by (seed, *key); same key, same stream."""
    return _stream(seed, *key)


def sample_box(dist: DomainDistribution, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, P) uniform draws from the distribution's box, all from one stream."""
    box = dist.box()
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((count, box.shape[0]))


def _draw(box: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(box.shape[0])


def sample_domains(dist: DomainDistribution, ens: EnsembleSpec) -> DomainSamples:
    """Uniform box draws, one stream per (domain index) and (domain, sibling) pair.

    Streams are keyed by index so that asking for more domains or siblings
    never changes the draws of the ones already taken.
    """
    box = dist.box()
    p = box.shape[0]
    rollout = np.empty((ens.num_rollout, p))
    siblings = np.empty((ens.num_rollout, ens.num_siblings, p))
    for i in range(ens.num_rollout):
        rollout[i] = _draw(box, _stream(ens.seed, _ROLLOUT_TAG, i))
        for j in range(ens.num_siblings):
            siblings[i, j] = _draw(box, _stream(ens.seed, _SIBLING_TAG, i, j))
    lo, hi = box[:, 0], box[:, 1]
    assert np.all(rollout >= lo) and np.all(rollout <= hi)
    assert np.all(siblings >= lo) and np.all(siblings <= hi)
    return DomainSamples(rollout=rollout, siblings=siblings, names=dist.names)


def _tabular_envs(family: DomainFamily, domains: np.ndarray) -> list[TabularCMDP]:
    envs = []
    base = family.base_env
    if not isinstance(base, TabularCMDP):
        raise TypeError("dr_objective/mixture_kernel require a tabular family; "
                        "continuous families are evaluated by rollouts in the solver")
    for xi in np.atleast_2d(np.asarray(domains, dtype=float)):
        env = family.build(xi)
        if not isinstance(env, TabularCMDP):
            raise TypeError("family builder must return TabularCMDP instances")
        if (env.gamma != base.gamma
                or not np.array_equal(env.rewards, base.rewards)
                or not np.array_equal(env.costs, base.costs)
                or not np.array_equal(env.rho, base.rho)):
            raise ValueError("randomized domains must share rewards, costs, gamma and rho")
        envs.append(env)
    return envs


def dr_objective(family: DomainFamily, domains: np.ndarray,
                 policy: TabularPolicy) -> tuple[float, float]:
    """Sample-average objective and constraint over the given domains (exact evals)."""
    envs = _tabular_envs(family, domains)
    js, cs = [], []
    for env in envs:
        vals = evaluate_policy(env, policy)
        js.append(vals.j_value)
        cs.append(vals.c_value)
    return float(np.mean(js)), float(np.mean(cs))


def mixture_kernel(family: DomainFamily, domains: np.ndarray,
                   state: int | None = None, action: int | None = None) -> np.ndarray:
    """Equal-weight mixture of the domain kernels.

    With (state, action) given, returns that next-state row; otherwise the
    full (S, A, S) mixture tensor.
    """
    envs = _tabular_envs(family, domains)
    mix = np.mean([env.transitions for env in envs], axis=0)
    if state is None and action is None:
        return mix
    if state is None or action is None:
        raise ValueError("give both state and action, or neither")
    return mix[state, action]
