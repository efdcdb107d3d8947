"""Three-state chain where averaged-domain training is optimal but unsafe.

States s0 -> {s1, s2}, both absorbing; only s1 pays reward and cost 1.  Every
simulated domain is the same kernel with p(s1|s0, a) = 1/2 + eps*[a == 0];
the deployment kernel shifts both actions up by eps.  The budget is tuned so
that action 0 is exactly budget-tight in simulation yet violates the budget
at deployment, while action 1 is the only deployment-safe policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cmdp import TabularCMDP
from ..domains import DomainDistribution, DomainFamily, DomainParamSpec

__all__ = ["ChainSpec", "ChainPair", "build_chain"]


@dataclass(frozen=True)
class ChainSpec:
    """epsilon is the kernel shift (<= 1/4 so the shifted rows stay stochastic)."""

    epsilon: float = 0.25
    gamma: float = 0.9

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 0.25):
            raise ValueError("epsilon must lie in (0, 1/4]")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")


@dataclass(frozen=True)
class ChainPair:
    family: DomainFamily
    sim_env: TabularCMDP
    real_env: TabularCMDP
    budget: float
    embedding: np.ndarray
    spec: ChainSpec


def _chain_env(spec: ChainSpec, shift: float) -> TabularCMDP:
    eps, gamma = spec.epsilon, spec.gamma
    p = np.zeros((3, 2, 3))
    for a in range(2):
        q = 0.5 + shift + (eps if a == 0 else 0.0)
        p[0, a, 1] = q
        p[0, a, 2] = 1.0 - q
        p[1, a, 1] = 1.0  # absorbing
        p[2, a, 2] = 1.0  # absorbing
    r = np.zeros((3, 2))
    r[1, :] = 1.0
    budget = gamma / (1.0 - gamma) * (0.5 + eps)
    return TabularCMDP(
        transitions=p,
        rewards=r,
        costs=r.copy(),
        gamma=gamma,
        rho=np.array([1.0, 0.0, 0.0]),
        budget=budget,
    )


def build_chain(spec: ChainSpec = ChainSpec()) -> ChainPair:
    """Build the (family, deployment env, budget, embedding) bundle.

    The family has one domain parameter, a kernel shift whose train range is
    degenerate at 0 (all simulated domains coincide) and whose eval range is
    degenerate at eps (the deployment kernel).
    """
    dist = DomainDistribution(
        params=(DomainParamSpec("kernel_shift",
                                train_range=(0.0, 0.0),
                                eval_range=(spec.epsilon, spec.epsilon)),),
        phase="train",
    )
    sim = _chain_env(spec, 0.0)
    real = _chain_env(spec, spec.epsilon)

    def builder(xi: np.ndarray) -> TabularCMDP:
        return _chain_env(spec, float(xi[0]))

    family = DomainFamily(builder=builder, base_env=sim, distribution=dist)
    embedding = np.array([[0.0], [1.0], [2.0]])
    return ChainPair(family=family, sim_env=sim, real_env=real,
                     budget=sim.budget, embedding=embedding, spec=spec)
