"""Invariant suites behind the verify command.

Each suite checks one mathematical guarantee the library leans on, over
freshly generated random instances, and reports a count, a failure count,
and the worst observed slack.  Suites accept injected instances so tests
can run negative controls (a deliberately broken instance must fail).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cmdp import (TabularCMDP, TabularPolicy, evaluate_policy, occupancy,
                    telescoping_residual)
from ..domains import derive_stream, sample_box
from ..envs import (CartpoleParams, CartpoleSpec, ChainSpec, PointGoalParams,
                    PointGoalSpec, RandomCmdpSpec, build_chain,
                    build_random_pair)
from ..envs.cartpole import energy, rk4_substep
from ..envs.pointgoal import phys_step, reset_state, state_cost, step_pointgoal
from ..pessimism import (WassersteinMetric, oracle_penalty,
                         transfer_bound_report, wasserstein_1d, wasserstein_lp)
from ..policies import SoftmaxTabularPolicy
from ..solvers import exact_gradient

__all__ = ["SuiteResult", "VerificationReport", "run_suites", "SUITES"]

_SEED_BASE = 20260815


@dataclass
class SuiteResult:
    name: str
    count: int
    failures: int
    worst: float
    threshold: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name}: {self.count} checks, "
                f"{self.failures} failures, worst slack {self.worst:.3e} "
                f"(threshold {self.threshold:.1e}){' ' + self.note if self.note else ''}")


@dataclass
class VerificationReport:
    suites: list[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> list[str]:
        out = [s.line() for s in self.suites]
        out.append("verification " + ("PASSED" if self.passed else "FAILED"))
        return out


def _random_env(rng, num_states=6, num_actions=3, gamma=0.9,
                budget=None) -> TabularCMDP:
    trans = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    rho = rng.dirichlet(np.ones(num_states))
    env = TabularCMDP(transitions=trans, rewards=rng.random((num_states, num_actions)),
                      costs=rng.random((num_states, num_actions)), gamma=gamma,
                      rho=rho, budget=1.0 if budget is None else budget)
    return env


def _random_policy(rng, num_states, num_actions) -> TabularPolicy:
    return TabularPolicy(rng.dirichlet(np.ones(num_actions), size=num_states))


def suite_cmdp_invariants(count: int = 20, kernels=None) -> SuiteResult:
    """Construction and occupancy identities on random (or injected) kernels.

    Checks: kernel accepted by validation, occupancy weights normalized, and
    the occupancy route to J agreeing with the value route.
    """
    rng = derive_stream(_SEED_BASE, 0)
    worst = 0.0
    failures = 0
    instances = []
    if kernels is None:
        for _ in range(count):
            instances.append(rng.dirichlet(np.ones(6), size=(6, 3)))
    else:
        instances = [np.asarray(k, dtype=float) for k in kernels]
    for trans in instances:
        s, a = trans.shape[0], trans.shape[1]
        try:
            env = TabularCMDP(transitions=trans, rewards=rng.random((s, a)),
                              costs=rng.random((s, a)), gamma=0.9,
                              rho=np.full(s, 1.0 / s), budget=1.0)
        except ValueError:
            failures += 1
            worst = max(worst, float(np.abs(trans.sum(axis=-1) - 1.0).max()))
            continue
        policy = _random_policy(rng, s, a)
        occ = occupancy(env, policy)
        vals = evaluate_policy(env, policy)
        j_occ = float(occ.weights.reshape(-1) @ env.rewards.reshape(-1)
                      / (1.0 - env.gamma))
        err = max(abs(float(occ.weights.sum()) - 1.0), abs(j_occ - vals.j_value))
        worst = max(worst, err)
        if err > 1e-8:
            failures += 1
    return SuiteResult("cmdp-invariants", len(instances), failures, worst, 1e-8)


def suite_telescoping(count: int = 50, pairs=None) -> SuiteResult:
    """Exact cost-gap decomposition between kernel pairs (residual ~ 0)."""
    rng = derive_stream(_SEED_BASE, 1)
    worst = 0.0
    failures = 0
    total = count if pairs is None else len(pairs)
    for i in range(total):
        if pairs is None:
            env_p = _random_env(rng)
            trans_q = rng.dirichlet(np.ones(6), size=(6, 3))
            env_q = TabularCMDP(transitions=trans_q, rewards=env_p.rewards,
                                costs=env_p.costs, gamma=env_p.gamma,
                                rho=env_p.rho, budget=env_p.budget)
            policy = _random_policy(rng, 6, 3)
        else:
            env_p, env_q, policy = pairs[i]
        residual = telescoping_residual(env_p, env_q, policy)
        worst = max(worst, residual)
        if residual > 1e-8:
            failures += 1
    return SuiteResult("telescoping", total, failures, worst, 1e-8)


def suite_transfer_bound(count: int = 50, triples=None) -> SuiteResult:
    """Deployment-cost bound slack >= 0 on random certified families.

    Families come from the smooth random generator with a certified KL
    radius of 0.05; slack = bound minus actual deployment cost.
    """
    rng = derive_stream(_SEED_BASE, 2)
    worst = np.inf
    failures = 0
    total = count if triples is None else len(triples)
    for i in range(total):
        if triples is None:
            pair = build_random_pair(RandomCmdpSpec(num_states=6, num_actions=3,
                                                    kl_radius=0.05, seed=i))
            domains = sample_box(pair.family.distribution, 6, rng)
            policy = _random_policy(rng, 6, 3)
            family, real_env, embedding = pair.family, pair.real_env, pair.embedding
        else:
            family, domains, real_env, policy, embedding = triples[i]
        report = transfer_bound_report(family, domains, real_env, policy, embedding)
        worst = min(worst, report.slack)
        if report.slack < -1e-8:
            failures += 1
    return SuiteResult("transfer-bound", total, failures, float(worst), -1e-8,
                       note="(worst is minimum slack; must stay above threshold)")


def suite_oracle_conservatism(instances: int = 10, policies: int = 100) -> SuiteResult:
    """Oracle-penalized training cost dominates deployment cost per policy."""
    rng = derive_stream(_SEED_BASE, 3)
    worst = np.inf
    failures = 0
    count = 0
    for k in range(instances):
        pair = build_random_pair(RandomCmdpSpec(num_states=6, num_actions=3,
                                                kl_radius=0.05, seed=1000 + k))
        domains = sample_box(pair.family.distribution, 5, rng)
        table = oracle_penalty(pair.family, domains, pair.real_env, pair.embedding)
        envs = [pair.family.build(row) for row in np.atleast_2d(domains)]
        penalized = [env.with_costs(env.costs + table) for env in envs]
        for _ in range(policies):
            policy = _random_policy(rng, 6, 3)
            c_tilde = float(np.mean([evaluate_policy(env, policy).c_value
                                     for env in penalized]))
            c_real = evaluate_policy(pair.real_env, policy).c_value
            margin = c_tilde - c_real
            worst = min(worst, margin)
            count += 1
            if margin < -1e-8:
                failures += 1
            # certified feasibility must transfer to deployment
            if c_tilde <= pair.real_env.budget and \
                    c_real > pair.real_env.budget + 1e-8:
                failures += 1
    return SuiteResult("oracle-conservatism", count, failures, float(worst), -1e-8,
                       note="(worst is minimum pessimism margin)")


def suite_wasserstein(count: int = 100) -> SuiteResult:
    """CDF route vs transport LP, plus metric axioms on random triples."""
    rng = derive_stream(_SEED_BASE, 4)
    worst = 0.0
    failures = 0
    checks = 0
    for _ in range(count):
        size = int(rng.integers(3, 9))
        support = np.sort(rng.random(size) * 4.0)
        p, q = rng.dirichlet(np.ones(size)), rng.dirichlet(np.ones(size))
        ground = np.abs(support[:, None] - support[None, :])
        gap = abs(wasserstein_1d(p, q, support) - wasserstein_lp(p, q, ground))
        worst = max(worst, gap)
        checks += 1
        if gap > 1e-8:
            failures += 1
    for _ in range(count):
        size = int(rng.integers(3, 7))
        emb = rng.random((size, 2)) * 3.0
        metric = WassersteinMetric(emb)
        p, q, r = (rng.dirichlet(np.ones(size)) for _ in range(3))
        d_pq, d_qp = metric.distance(p, q), metric.distance(q, p)
        d_pp = metric.distance(p, p)
        d_pr, d_qr = metric.distance(p, r), metric.distance(q, r)
        violations = (abs(d_pq - d_qp), abs(d_pp),
                      max(d_pr - (d_pq + d_qr), 0.0), max(-d_pq, 0.0))
        worst = max(worst, *violations)
        checks += 1
        if max(violations) > 1e-8:
            failures += 1
    return SuiteResult("wasserstein", checks, failures, worst, 1e-8)


def suite_gradients(count: int = 20) -> SuiteResult:
    """Exact softmax policy gradients vs central finite differences."""
    rng = derive_stream(_SEED_BASE, 5)
    worst = 0.0
    failures = 0
    h = 1e-5
    for _ in range(count):
        envs = [_random_env(rng, 5, 3) for _ in range(3)]
        policy = SoftmaxTabularPolicy(5, 3, 0.5 * rng.standard_normal((5, 3)))
        for objective in ("reward", "cost"):
            grad = exact_gradient(envs, policy, objective=objective)

            def value(logits):
                probe = SoftmaxTabularPolicy(5, 3, logits)
                vals = [evaluate_policy(env, probe.to_tabular()) for env in envs]
                return float(np.mean([v.j_value if objective == "reward"
                                      else v.c_value for v in vals]))

            fd = np.zeros_like(grad)
            for s in range(5):
                for a in range(3):
                    up = policy.logits.copy()
                    dn = policy.logits.copy()
                    up[s, a] += h
                    dn[s, a] -= h
                    fd[s, a] = (value(up) - value(dn)) / (2.0 * h)
            rel = float(np.linalg.norm(grad - fd)
                        / max(np.linalg.norm(fd), 1e-12))
            worst = max(worst, rel)
            if rel > 1e-5:
                failures += 1
    return SuiteResult("gradients", 2 * count, failures, worst, 1e-5)


def suite_env_invariants() -> SuiteResult:
    """Closed-form pins and physical identities of the bundled environments."""
    failures = 0
    worst = 0.0
    checks = 0

    def check(err, tol):
        nonlocal failures, worst, checks
        checks += 1
        worst = max(worst, err)
        if err > tol:
            failures += 1

    pair = build_chain(ChainSpec())
    a1 = TabularPolicy.deterministic([0, 0, 0], 2)
    a2 = TabularPolicy.deterministic([1, 0, 0], 2)
    sim, real = pair.sim_env, pair.real_env
    check(abs(evaluate_policy(sim, a1).c_value - 6.75), 1e-9)
    check(abs(evaluate_policy(sim, a2).c_value - 4.50), 1e-9)
    check(abs(evaluate_policy(real, a1).c_value - 9.00), 1e-9)
    check(abs(evaluate_policy(real, a2).c_value - 6.75), 1e-9)

    # free cartpole conserves mechanical energy over 1000 RK4 substeps
    spec = CartpoleSpec()
    params = CartpoleParams(gear=spec.base_gear, half_length=spec.half_length)
    state = np.array([0.0, 0.0, 2.4, 0.3])
    e0 = energy(state, params, spec)
    drift = 0.0
    for _ in range(1000):
        state = rk4_substep(state, 0.0, params, spec)
        drift = max(drift, abs(energy(state, params, spec) - e0))
    check(drift, 1e-4)

    # point-goal reward decomposes into progress + goal bonus - penalties
    pg = PointGoalSpec()
    pg_params = PointGoalParams(mass=1.0, damping=1.0, gain=1.0)
    rng = derive_stream(_SEED_BASE, 6)
    state = reset_state(pg)
    prev_action = np.zeros(2)
    for _ in range(200):
        action = np.clip(rng.standard_normal(2), -1.0, 1.0)
        next_state, reward, cost = step_pointgoal(state, action, pg_params, pg)
        pos, vel = state[0:2], state[2:4]
        new_pos, _ = phys_step(pos, vel, action, pg_params.mass,
                               pg_params.damping, pg_params.gain, pg.dt)
        d_prev = np.linalg.norm(pos - np.asarray(pg.goal))
        d_new = np.linalg.norm(new_pos - np.asarray(pg.goal))
        expect = (d_prev - d_new + (1.0 if d_new <= pg.goal_radius else 0.0)
                  - pg.ctrl_penalty * np.linalg.norm(action)
                  - pg.smooth_penalty * float(((action - prev_action) ** 2).sum()))
        check(abs(reward - expect), 1e-9)
        check(abs(cost - state_cost(state, pg_params, pg)), 0.0)
        if cost < 0.0:
            failures += 1
        prev_action = action
        state = next_state
    return SuiteResult("env-invariants", checks, failures, worst, 1e-4)


SUITES = {
    "cmdp-invariants": suite_cmdp_invariants,
    "telescoping": suite_telescoping,
    "transfer-bound": suite_transfer_bound,
    "oracle-conservatism": suite_oracle_conservatism,
    "wasserstein": suite_wasserstein,
    "gradients": suite_gradients,
    "env-invariants": suite_env_invariants,
}


def run_suites(names=None) -> VerificationReport:
    report = VerificationReport()
    for name in (names or SUITES):
        if name not in SUITES:
            raise ValueError(f"unknown suite '{name}' (have: "
                             + ", ".join(sorted(SUITES)) + ")")
        report.suites.append(SUITES[name]())
    return report
