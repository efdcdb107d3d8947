"""Random tabular CMDP families with a certified divergence radius.

The generator draws a base kernel, perturbs its logits along a random
direction scaled so that every panel domain stays within a target KL radius
of the family mixture, and places the deployment kernel inside the same
ball.  All certificates are measured by direct computation, never assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cmdp import TabularCMDP, TabularPolicy, evaluate_policy
from ..domains import DomainDistribution, DomainFamily, DomainParamSpec

__all__ = ["RandomCmdpSpec", "AssumptionProbe", "RandomPair", "build_random_pair"]

_PANEL = np.linspace(-1.0, 1.0, 17)


@dataclass(frozen=True)
class RandomCmdpSpec:
    num_states: int = 8
    num_actions: int = 3
    embedding_dim: int = 1
    kl_radius: float = 0.05
    concentration: float = 1.0
    gamma: float = 0.9
    budget: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_states < 2 or self.num_actions < 1:
            raise ValueError("need at least 2 states and 1 action")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")
        if self.kl_radius < 0.0:
            raise ValueError("kl_radius must be nonnegative")
        if self.concentration <= 0.0:
            raise ValueError("concentration must be positive")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")


@dataclass(frozen=True)
class AssumptionProbe:
    """Measured regularity quantities; nothing here is assumed or estimated.

    measured_diameter: largest pairwise 2-norm distance between embedded states.
    measured_variance_floor: smallest, over (s, a), expected 2-norm distance
        between an embedded next state and its mean under the family mixture.
    confidence: 1.0, since both quantities are computed exactly.
    """

    measured_diameter: float
    measured_variance_floor: float
    confidence: float = 1.0


@dataclass(frozen=True)
class RandomPair:
    family: DomainFamily
    real_env: TabularCMDP
    probe: AssumptionProbe
    embedding: np.ndarray
    measured_kl_family: float
    measured_kl_real: float
    real_xi: float


def _kl_rows(p: np.ndarray, q: np.ndarray) -> float:
    """Max over (s, a) of KL(p(.|s,a) || q(.|s,a)); kernels must be strictly positive."""
    ratio = np.log(p) - np.log(q)
    return float(np.max(np.sum(p * ratio, axis=-1)))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def build_random_pair(spec: RandomCmdpSpec) -> RandomPair:
    """Generate (family, deployment env, probe) with measured KL certificates.

    The family is p_xi = softmax(log B + scale * xi * G) for xi in [-1, 1];
    scale is found by bisection so that max over a fixed xi panel and all
    (s, a) of KL(p_xi || p_mix) stays within kl_radius, where p_mix is the
    equal-weight panel mixture.  The deployment kernel is p_{xi*} for a
    drawn xi*, shrunk toward 0 until its own KL certificate holds.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(spec.seed), 2718)))
    s, a = spec.num_states, spec.num_actions
    base = rng.dirichlet(np.full(s, spec.concentration), size=(s, a))
    base = np.clip(base, 1e-9, None)
    base /= base.sum(axis=-1, keepdims=True)
    direction = rng.standard_normal((s, a, s))
    rewards = rng.random((s, a))
    costs = rng.random((s, a))
    embedding = rng.random((s, spec.embedding_dim))
    rho = np.full(s, 1.0 / s)
    log_base = np.log(base)

    def kernels(scale: float) -> np.ndarray:
        return _softmax(log_base[None] + scale * _PANEL[:, None, None, None] * direction[None])

    def panel_kl(scale: float) -> float:
        ks = kernels(scale)
        mix = ks.mean(axis=0)
        return max(_kl_rows(ks[i], mix) for i in range(ks.shape[0]))

    target = 0.98 * spec.kl_radius
    if spec.kl_radius == 0.0:
        scale = 0.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(40):
            if panel_kl(hi) >= target:
                break
            lo, hi = hi, hi * 2.0
        else:
            lo = hi  # direction too weak to ever exceed the radius; use as is
        if lo < hi:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if panel_kl(mid) <= target:
                    lo = mid
                else:
                    hi = mid
        scale = lo

    panel_kernels = kernels(scale)
    mix = panel_kernels.mean(axis=0)
    measured_family = panel_kl(scale)
    if measured_family > spec.kl_radius + 1e-9:
        raise RuntimeError("family KL certificate failed after bisection")

    def make_env(kernel: np.ndarray, budget: float) -> TabularCMDP:
        return TabularCMDP(transitions=kernel, rewards=rewards, costs=costs,
                           gamma=spec.gamma, rho=rho, budget=budget)

    def kernel_for(xi: float) -> np.ndarray:
        return _softmax(log_base + scale * xi * direction)

    # budget defaults to the uniform policy's cost on the base env: binding but feasible
    probe_budget = spec.budget
    if probe_budget is None:
        uniform = TabularPolicy.uniform(s, a)
        probe_budget = evaluate_policy(make_env(base, 1.0), uniform).c_value

    xi_real = float(rng.uniform(-1.0, 1.0)) if spec.kl_radius > 0.0 else 0.0
    real_kernel = kernel_for(xi_real)
    measured_real = _kl_rows(real_kernel, mix)
    shrink = 0
    while measured_real > spec.kl_radius + 1e-9 and shrink < 60:
        xi_real *= 0.8
        real_kernel = kernel_for(xi_real)
        measured_real = _kl_rows(real_kernel, mix)
        shrink += 1
    if measured_real > spec.kl_radius + 1e-9:
        raise RuntimeError("deployment KL certificate failed")

    dist = DomainDistribution(
        params=(DomainParamSpec("kernel_shift", (-1.0, 1.0), (-1.0, 1.0)),),
        phase="train",
    )

    def builder(xi: np.ndarray) -> TabularCMDP:
        return make_env(kernel_for(float(xi[0])), probe_budget)

    family = DomainFamily(builder=builder, base_env=make_env(base, probe_budget),
                          distribution=dist)
    real_env = make_env(real_kernel, probe_budget)

    diffs = embedding[:, None, :] - embedding[None, :, :]
    diameter = float(np.sqrt((diffs ** 2).sum(-1)).max())
    mean_next = np.einsum("saz,zk->sak", mix, embedding)
    dist_to_mean = np.sqrt(((embedding[None, None, :, :] - mean_next[:, :, None, :]) ** 2).sum(-1))
    floor = float(np.min(np.einsum("saz,saz->sa", mix, dist_to_mean)))
    probe = AssumptionProbe(measured_diameter=diameter, measured_variance_floor=floor)

    return RandomPair(family=family, real_env=real_env, probe=probe,
                      embedding=embedding, measured_kl_family=measured_family,
                      measured_kl_real=measured_real, real_xi=xi_real)
