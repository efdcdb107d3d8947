"""Constraint-aware policy search under randomized dynamics.

Three training paths share one metrics contract:

* tabular families in exact mode, where values and gradients come from
  linear solves.  When every sampled kernel coincides the constrained
  problem is solved in one shot over deterministic policies; otherwise a
  gradient loop runs on the exact objective.
* tabular families in sampled mode, driven by batched trajectory rollouts.
* continuous control families, driven by batched rollouts with a
  feature-linear Gaussian policy.

The penalty machinery only ever touches its own random streams: sibling
probes never advance an episode and never consume main-trajectory
randomness, so a run with lam = 0 matches a run with the penalty switched
off step for step.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .cmdp import TabularCMDP, TabularPolicy, evaluate_policy, occupancy
from .domains import (DomainFamily, EnsembleSpec, DomainSamples, sample_domains,
                      sample_box, derive_stream, dr_objective)
from .pessimism import PenaltyConfig, penalize_cost, upsilon_exact_matrix
from .policies import LinearGaussianPolicy, SoftmaxTabularPolicy
from .envs import pointgoal as _pg
from .envs import cartpole as _cp
from .policies import cartpole_features, pointgoal_features

__all__ = [
    "SolverConfig",
    "MetricsRecord",
    "TrainResult",
    "crpo_update",
    "primal_dual_update",
    "exact_gradient",
    "collect_penalized_rollouts",
    "collect_continuous_rollouts",
    "TabularRolloutBatch",
    "ContinuousRolloutBatch",
    "ContinuousTask",
    "make_pointgoal_task",
    "make_cartpole_task",
    "train_tabular",
    "train_continuous",
]

# stream tags under the run seed; domain sampling has its own seed in EnsembleSpec
_TAG_COLLECT = 2
_TAG_PROBE = 3
_TAG_EVAL = 4

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by all training paths.

    algorithm: "crpo" alternates reward ascent with cost descent;
    "primal_dual" follows the penalized gradient and adapts a multiplier.
    """

    algorithm: str = "crpo"
    iterations: int = 200
    step_size: float = 0.2
    dual_step: float = 0.05
    crpo_tolerance: float = 0.0
    batch_episodes: int = 16
    eval_every: int = 10
    eval_samples: int = 8
    policy_std: float = 0.4
    baseline: bool = True
    max_grad_norm: float = 0.0  # 0 disables clipping
    max_enumeration: int = 4096
    infeasibility_fraction: float = 0.9

    def __post_init__(self):
        if self.algorithm not in ("crpo", "primal_dual"):
            raise ValueError("algorithm must be 'crpo' or 'primal_dual'")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size <= 0.0 or self.dual_step <= 0.0:
            raise ValueError("step sizes must be positive")
        if self.crpo_tolerance < 0.0:
            raise ValueError("crpo_tolerance must be nonnegative")
        if self.batch_episodes < 1 or self.eval_samples < 1:
            raise ValueError("batch_episodes and eval_samples must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.policy_std <= 0.0:
            raise ValueError("policy_std must be positive")
        if not (0.0 < self.infeasibility_fraction <= 1.0):
            raise ValueError("infeasibility_fraction must be in (0, 1]")
        if self.max_grad_norm < 0.0:
            raise ValueError("max_grad_norm must be nonnegative")


@dataclass
class MetricsRecord:
    """One training iteration; eval fields are None off the eval cadence."""

    iteration: int
    j_train: float
    c_train_raw: float
    c_train_penalized: float
    j_eval: float | None
    c_eval: float | None
    dual: float
    mean_upsilon: float
    max_upsilon: float
    update_kind: str = "exact"


@dataclass
class TrainResult:
    policy: object
    metrics: list
    infeasible: bool
    runtime_s: float
    collect_s: float
    final_j_eval: float
    final_c_eval: float
    upsilon_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # discounted disagreement return per iteration: what one unit of lambda
    # adds to the penalized constraint, used to size refinements
    upsilon_return_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def final_metrics(self) -> MetricsRecord:
        return self.metrics[-1]

    def tail_mean(self, attr: str) -> float:
        tail = self.metrics[-max(1, len(self.metrics) // 4):]
        return float(np.mean([getattr(m, attr) for m in tail]))

    @property
    def tail_upsilon_return(self) -> float:
        arr = self.upsilon_return_trace
        if arr.size == 0:
            return 0.0
        return float(np.mean(arr[-max(1, arr.size // 4):]))


# ---------------------------------------------------------------------------
# parameter updates


def crpo_update(params: np.ndarray, reward_grad: np.ndarray, cost_grad: np.ndarray,
                cost_estimate: float, budget: float, step_size: float,
                tolerance: float = 0.0):
    """Descend the constraint when it is estimated violated, else ascend reward.

    Returns (new_params, branch) with branch in {"reward", "cost"}; the
    violation test is strict, so an estimate exactly at the budget still
    takes the reward branch.
    """
    if cost_estimate > budget + tolerance:
        return params - step_size * cost_grad, "cost"
    return params + step_size * reward_grad, "reward"


def primal_dual_update(params: np.ndarray, reward_grad: np.ndarray,
                       cost_grad: np.ndarray, cost_estimate: float, budget: float,
                       dual: float, step_size: float, dual_step: float):
    """One ascent step on the Lagrangian and a projected multiplier update."""
    new_params = params + step_size * (reward_grad - dual * cost_grad)
    new_dual = max(0.0, dual + dual_step * (cost_estimate - budget))
    return new_params, new_dual


# ---------------------------------------------------------------------------
# exact gradients for tabular softmax policies


def exact_gradient(envs, policy: SoftmaxTabularPolicy, objective: str = "reward",
                   cost_table: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the domain-averaged value with respect to the logits.

    d/dtheta[s, a] = D(s) * pi(a|s) * (Q(s, a) - V(s)) with D the
    unnormalized discounted state occupancy, averaged over the given
    environments.  cost_table, when given, replaces every environment's
    costs before the cost objective is evaluated.
    """
    if objective not in ("reward", "cost"):
        raise ValueError("objective must be 'reward' or 'cost'")
    if not isinstance(envs, (list, tuple)):
        envs = [envs]
    probs = policy.probs()
    tab = TabularPolicy(probs)
    total = np.zeros_like(policy.logits)
    for env in envs:
        if cost_table is not None and objective == "cost":
            env = env.with_costs(cost_table)
        vals = evaluate_policy(env, tab)
        q = vals.q_reward if objective == "reward" else vals.q_cost
        advantage = q - (probs * q).sum(axis=1, keepdims=True)
        d_states = occupancy(env, tab).state_weights / (1.0 - env.gamma)
        total += d_states[:, None] * probs * advantage
    return total / len(envs)


# ---------------------------------------------------------------------------
# rollout collection, tabular


@dataclass
class TabularRolloutBatch:
    """Flat (episodes, horizon) arrays; episode b ran in domain domain_index[b]."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    costs_raw: np.ndarray
    costs_penalized: np.ndarray
    upsilons: np.ndarray
    domain_index: np.ndarray
    gamma: float


def _categorical_rows(rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of a (B, K) stack of distributions."""
    u = rng.random(rows.shape[0])
    idx = (u[:, None] >= np.cumsum(rows, axis=1)).sum(axis=1)
    return np.minimum(idx, rows.shape[1] - 1)


def _policy_probs(policy) -> np.ndarray:
    if isinstance(policy, SoftmaxTabularPolicy):
        return policy.probs()
    return np.asarray(policy.probs, dtype=float)


def collect_penalized_rollouts(family: DomainFamily, samples: DomainSamples,
                               policy, penalty: PenaltyConfig | None,
                               embedding: np.ndarray, horizon: int,
                               episodes_per_domain: int,
                               rng_main: np.random.Generator,
                               rng_probe: np.random.Generator) -> TabularRolloutBatch:
    """Batched tabular rollouts with per-step penalized costs.

    In exact mode the disagreement table is computed once from the rollout
    kernels and looked up at visited pairs; in sampled mode each step draws
    one next state per sibling kernel from rng_probe.  rng_main alone drives
    the trajectories, so the penalty never perturbs them.
    """
    envs = [family.build(xi) for xi in samples.rollout]
    num_domains = len(envs)
    batch = num_domains * episodes_per_domain
    probs = _policy_probs(policy)
    emb = np.asarray(embedding, dtype=float)
    if emb.ndim == 1:
        emb = emb[:, None]

    trans = np.stack([env.transitions for env in envs])  # (N, S, A, S)
    lam = 0.0 if penalty is None else penalty.lam
    mode = None if penalty is None else penalty.mode
    ups_table = None
    sib_trans = None
    if mode == "exact":
        ups_table = upsilon_exact_matrix(family, samples.rollout, emb)
    elif mode == "sampled":
        sib_trans = np.stack([
            np.stack([family.build(xi).transitions for xi in samples.siblings[i]])
            for i in range(num_domains)
        ])  # (N, n, S, A, S)

    dom = np.repeat(np.arange(num_domains), episodes_per_domain)
    env0 = envs[0]
    states = _categorical_rows(np.tile(env0.rho, (batch, 1)), rng_main)

    out = {k: np.empty((batch, horizon)) for k in
           ("rewards", "costs_raw", "costs_penalized", "upsilons")}
    s_hist = np.empty((batch, horizon), dtype=np.int64)
    a_hist = np.empty((batch, horizon), dtype=np.int64)

    for t in range(horizon):
        actions = _categorical_rows(probs[states], rng_main)
        s_hist[:, t] = states
        a_hist[:, t] = actions
        out["rewards"][:, t] = env0.rewards[states, actions]
        raw = env0.costs[states, actions]
        if mode == "exact":
            ups = ups_table[states, actions]
        elif mode == "sampled":
            n = sib_trans.shape[1]
            draws = np.empty((batch, n, emb.shape[1]))
            for j in range(n):
                nxt = _categorical_rows(sib_trans[dom, j, states, actions], rng_probe)
                draws[:, j] = emb[nxt]
            ups = draws.var(axis=1).sum(axis=-1)
        else:
            ups = np.zeros(batch)
        out["costs_raw"][:, t] = raw
        out["upsilons"][:, t] = ups
        out["costs_penalized"][:, t] = raw + lam * ups
        states = _categorical_rows(trans[dom, states, actions], rng_main)

    return TabularRolloutBatch(states=s_hist, actions=a_hist,
                               rewards=out["rewards"], costs_raw=out["costs_raw"],
                               costs_penalized=out["costs_penalized"],
                               upsilons=out["upsilons"], domain_index=dom,
                               gamma=env0.gamma)


def discounted_returns(values: np.ndarray, gamma: float) -> np.ndarray:
    """Per-step returns-to-go G[:, t] = v[:, t] + gamma * G[:, t + 1]."""
    out = np.empty_like(values)
    acc = np.zeros(values.shape[0])
    for t in range(values.shape[1] - 1, -1, -1):
        acc = values[:, t] + gamma * acc
        out[:, t] = acc
    return out


def _softmax_batch_grad(probs: np.ndarray, states: np.ndarray, actions: np.ndarray,
                        weights: np.ndarray) -> np.ndarray:
    """sum_t w_t * d log pi(a_t|s_t) / d logits for a flat batch of steps."""
    grad = np.zeros_like(probs)
    np.add.at(grad, (states, actions), weights)
    per_state = np.zeros(probs.shape[0])
    np.add.at(per_state, states, weights)
    return grad - per_state[:, None] * probs


def _reinforce_weights(returns: np.ndarray, gamma: float, baseline: bool) -> np.ndarray:
    base = returns.mean(axis=0) if baseline else 0.0
    discounts = gamma ** np.arange(returns.shape[1])
    return discounts[None, :] * (returns - base) / returns.shape[0]


def _clip_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    if max_norm <= 0.0:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


# ---------------------------------------------------------------------------
# rollout collection, continuous


@dataclass(frozen=True)
class ContinuousTask:
    """Vectorized hooks one continuous environment exposes to the solver.

    step and sibling_embed take a batch of states that all live in one
    domain; the solver groups episodes by domain before calling them.
    """

    name: str
    initial_states: object  # (count, rng) -> (count, state_dim)
    step: object            # (states, raw_actions, params) -> (next, reward, cost)
    sibling_embed: object   # (states, raw_actions, [params]) -> (B, n, k)
    feature_fn: object
    feature_dim: int
    action_dim: int
    horizon: int
    gamma: float


def make_pointgoal_task(spec: _pg.PointGoalSpec | None = None) -> ContinuousTask:
    spec = spec or _pg.PointGoalSpec()
    feats, fdim = pointgoal_features(arena=spec.arena)

    def initial_states(count, rng):
        return np.tile(_pg.reset_state(spec), (count, 1))

    def step(states, raw_actions, params):
        return _pg.step_pointgoal(states, raw_actions, params, spec)

    def sibling_embed(states, raw_actions, sibling_params):
        return _pg.sibling_next_states(states, raw_actions, sibling_params, spec)

    return ContinuousTask("pointgoal", initial_states, step, sibling_embed,
                          feats, fdim, 2, spec.horizon, spec.gamma)


def make_cartpole_task(spec: _cp.CartpoleSpec | None = None) -> ContinuousTask:
    spec = spec or _cp.CartpoleSpec()
    feats, fdim = cartpole_features()

    def initial_states(count, rng):
        states = np.tile(_cp.reset_state(spec), (count, 1))
        states[:, 2] += 0.05 * rng.standard_normal(count)  # break left/right symmetry
        return states

    def step(states, raw_actions, params):
        return _cp.step_cartpole(states, raw_actions[..., 0], params, spec)

    def sibling_embed(states, raw_actions, sibling_params):
        return _cp.sibling_next_states(states, raw_actions[..., 0],
                                       sibling_params, spec)

    return ContinuousTask("cartpole", initial_states, step, sibling_embed,
                          feats, fdim, 1, spec.horizon, spec.gamma)


@dataclass
class ContinuousRolloutBatch:
    """(episodes, horizon, ...) arrays from one collection pass."""

    features: np.ndarray
    raw_actions: np.ndarray
    rewards: np.ndarray
    costs_raw: np.ndarray
    costs_penalized: np.ndarray
    upsilons: np.ndarray
    domain_index: np.ndarray
    gamma: float


def collect_continuous_rollouts(task: ContinuousTask, policy: LinearGaussianPolicy,
                                rollout_params: list, sibling_params: list,
                                penalty: PenaltyConfig | None,
                                episodes_per_domain: int,
                                rng_main: np.random.Generator) -> ContinuousRolloutBatch:
    """Batched rollouts grouped by domain; sibling probes are deterministic
    one-step predictions, so only the policy consumes randomness here."""
    if penalty is not None and penalty.mode == "exact":
        raise ValueError("continuous families support the sampled estimator only")
    num_domains = len(rollout_params)
    batch = num_domains * episodes_per_domain
    horizon = task.horizon
    lam = 0.0 if penalty is None else penalty.lam

    states = task.initial_states(batch, rng_main)
    phis = np.empty((batch, horizon, task.feature_dim))
    raws = np.empty((batch, horizon, task.action_dim))
    rewards = np.empty((batch, horizon))
    costs = np.empty((batch, horizon))
    ups = np.zeros((batch, horizon))
    dom = np.repeat(np.arange(num_domains), episodes_per_domain)

    groups = [slice(g * episodes_per_domain, (g + 1) * episodes_per_domain)
              for g in range(num_domains)]
    next_states = np.empty_like(states)
    for t in range(horizon):
        raw, phi = policy.sample(states, rng_main)
        phis[:, t] = phi
        raws[:, t] = raw
        for g, sl in enumerate(groups):
            nxt, r, c = task.step(states[sl], raw[sl], rollout_params[g])
            next_states[sl] = nxt
            rewards[sl, t] = r
            costs[sl, t] = c
            if penalty is not None:
                emb = task.sibling_embed(states[sl], raw[sl], sibling_params[g])
                ups[sl, t] = emb.var(axis=-2).sum(axis=-1)
        states = next_states.copy()

    return ContinuousRolloutBatch(features=phis, raw_actions=raws, rewards=rewards,
                                  costs_raw=costs,
                                  costs_penalized=costs + lam * ups,
                                  upsilons=ups, domain_index=dom, gamma=task.gamma)


# ---------------------------------------------------------------------------
# training, tabular


def _mean_values(envs, tab: TabularPolicy) -> tuple[float, float]:
    js, cs = [], []
    for env in envs:
        vals = evaluate_policy(env, tab)
        js.append(vals.j_value)
        cs.append(vals.c_value)
    return float(np.mean(js)), float(np.mean(cs))


def _occupancy_upsilon(envs, tab: TabularPolicy, ups: np.ndarray) -> tuple[float, float]:
    """Visitation-weighted mean and visited max of the disagreement table."""
    means, maxes = [], []
    for env in envs:
        w = occupancy(env, tab).weights
        means.append(float((w * ups).sum()))
        visited = w > 1e-12
        maxes.append(float(ups[visited].max()) if visited.any() else 0.0)
    return float(np.mean(means)), float(max(maxes))


def _eval_exact(family: DomainFamily, tab: TabularPolicy, count: int,
                rng: np.random.Generator) -> tuple[float, float]:
    dist = family.distribution.with_phase("eval")
    xis = sample_box(dist, count, rng)
    return dr_objective(family, xis, tab)


def _kernels_coincide(envs) -> bool:
    return all(np.allclose(env.transitions, envs[0].transitions,
                           rtol=0.0, atol=1e-12) for env in envs[1:])


def _enumerate_deterministic(env_raw: TabularCMDP, env_pen: TabularCMDP,
                             budget: float, cap: int):
    """Scan deterministic policies of a single environment.

    Returns (best_feasible, min_penalized): each is (actions, j, c_raw, c_pen)
    or None.  Feasible means penalized cost within the budget; the best
    feasible maximizes reward value, ties going to the lexicographically
    smallest action assignment.
    """
    s, a = env_raw.num_states, env_raw.num_actions
    if a ** s > cap:
        return None, None
    best = None
    least = None
    for assignment in itertools.product(range(a), repeat=s):
        tab = TabularPolicy.deterministic(np.array(assignment), a)
        vals_pen = evaluate_policy(env_pen, tab)
        j, c_pen = vals_pen.j_value, vals_pen.c_value
        c_raw = evaluate_policy(env_raw, tab).c_value
        entry = (assignment, j, c_raw, c_pen)
        if least is None or c_pen < least[3] - _FEAS_TOL:
            least = entry
        if c_pen <= budget + _FEAS_TOL and (best is None or j > best[1] + _FEAS_TOL):
            best = entry
    return best, least


def _train_tabular_oneshot(family, envs, envs_pen, ups_table, budget,
                           solver, seed, started) -> TrainResult:
    best, least = _enumerate_deterministic(envs[0], envs_pen[0], budget,
                                           solver.max_enumeration)
    if best is None and least is None:
        raise ValueError("state-action space too large to enumerate; "
                         "use sampled mode or raise max_enumeration")
    infeasible = best is None
    chosen = least if infeasible else best
    tab = TabularPolicy.deterministic(np.array(chosen[0]), envs[0].num_actions)
    j_train, c_raw = _mean_values(envs, tab)
    c_pen = _mean_values(envs_pen, tab)[1]
    mean_u, max_u = _occupancy_upsilon(envs, tab, ups_table)
    j_eval, c_eval = _eval_exact(family, tab, solver.eval_samples,
                                 derive_stream(seed, _TAG_EVAL, 0))
    record = MetricsRecord(iteration=0, j_train=j_train, c_train_raw=c_raw,
                           c_train_penalized=c_pen, j_eval=j_eval, c_eval=c_eval,
                           dual=0.0, mean_upsilon=mean_u, max_upsilon=max_u,
                           update_kind="enumeration")
    return TrainResult(policy=tab, metrics=[record], infeasible=infeasible,
                       runtime_s=time.perf_counter() - started, collect_s=0.0,
                       final_j_eval=j_eval, final_c_eval=c_eval,
                       upsilon_trace=np.array([mean_u]),
                       upsilon_return_trace=np.array([mean_u / (1.0 - envs[0].gamma)]))


def _should_eval(it: int, total: int, every: int) -> bool:
    return (it + 1) % every == 0 or it == total - 1


def _tail_infeasible(metrics, budget: float, fraction: float) -> bool:
    tail = metrics[-max(1, len(metrics) // 4):]
    violated = [m.c_train_penalized > budget + _FEAS_TOL for m in tail]
    return bool(np.mean(violated) >= fraction)


def train_tabular(family: DomainFamily, budget: float, embedding: np.ndarray,
                  penalty: PenaltyConfig | None, ensemble: EnsembleSpec,
                  solver: SolverConfig, seed: int,
                  horizon: int | None = None) -> TrainResult:
    """Train on sampled domains of a tabular family against the penalized cost.

    Exact mode with coincident kernels solves the problem by enumeration in
    a single iteration; exact mode otherwise runs the configured gradient
    loop on closed-form values; sampled mode estimates everything from
    rollouts of length `horizon` (default: enough steps for a 1e-3 tail).
    penalty None trains on raw costs with no disagreement probing at all.
    """
    started = time.perf_counter()
    samples = sample_domains(family.distribution, ensemble)
    envs = [family.build(xi) for xi in samples.rollout]
    emb = np.asarray(embedding, dtype=float)

    if penalty is not None and penalty.mode == "exact":
        ups_table = upsilon_exact_matrix(family, samples.rollout, emb)
        ctilde = penalize_cost(envs[0].costs, ups_table, penalty.lam)
        envs_pen = [env.with_costs(ctilde) for env in envs]
        if _kernels_coincide(envs):
            return _train_tabular_oneshot(family, envs, envs_pen, ups_table,
                                          budget, solver, seed, started)
        return _train_tabular_exact_loop(family, envs, envs_pen, ctilde, ups_table,
                                         budget, solver, seed, started)
    if horizon is None:
        gamma = envs[0].gamma
        horizon = int(np.ceil(np.log(1e-3) / np.log(gamma)))
    return _train_tabular_sampled(family, samples, envs, emb, budget, penalty,
                                  solver, seed, horizon, started)


def _train_tabular_exact_loop(family, envs, envs_pen, ctilde, ups_table, budget,
                              solver, seed, started) -> TrainResult:
    env0 = envs[0]
    policy = SoftmaxTabularPolicy(env0.num_states, env0.num_actions)
    dual = 0.0
    metrics = []
    for it in range(solver.iterations):
        tab = policy.to_tabular()
        j_train, c_raw = _mean_values(envs, tab)
        c_pen = _mean_values(envs_pen, tab)[1]
        mean_u, max_u = _occupancy_upsilon(envs, tab, ups_table)
        g_r = exact_gradient(envs, policy, "reward")
        g_c = exact_gradient(envs, policy, "cost", cost_table=ctilde)
        if solver.algorithm == "crpo":
            policy.logits, kind = crpo_update(policy.logits, g_r, g_c, c_pen,
                                              budget, solver.step_size,
                                              solver.crpo_tolerance)
        else:
            policy.logits, dual = primal_dual_update(policy.logits, g_r, g_c,
                                                     c_pen, budget, dual,
                                                     solver.step_size,
                                                     solver.dual_step)
            kind = "primal-dual"
        j_eval = c_eval = None
        if _should_eval(it, solver.iterations, solver.eval_every):
            j_eval, c_eval = _eval_exact(family, tab, solver.eval_samples,
                                         derive_stream(seed, _TAG_EVAL, it))
        metrics.append(MetricsRecord(it, j_train, c_raw, c_pen, j_eval, c_eval,
                                     dual, mean_u, max_u, kind))
    final_tab = policy.to_tabular()
    final_j, final_c = _eval_exact(family, final_tab, solver.eval_samples,
                                   derive_stream(seed, _TAG_EVAL, solver.iterations))
    gamma = env0.gamma
    return TrainResult(policy=final_tab, metrics=metrics,
                       infeasible=_tail_infeasible(metrics, budget,
                                                   solver.infeasibility_fraction),
                       runtime_s=time.perf_counter() - started, collect_s=0.0,
                       final_j_eval=final_j, final_c_eval=final_c,
                       upsilon_trace=np.array([m.mean_upsilon for m in metrics]),
                       upsilon_return_trace=np.array(
                           [m.mean_upsilon / (1.0 - gamma) for m in metrics]))


def _train_tabular_sampled(family, samples, envs, emb, budget, penalty, solver,
                           seed, horizon, started) -> TrainResult:
    env0 = envs[0]
    policy = SoftmaxTabularPolicy(env0.num_states, env0.num_actions)
    dual = 0.0
    metrics = []
    ups_returns = []
    collect_s = 0.0
    episodes_per_domain = max(1, solver.batch_episodes // len(envs))
    for it in range(solver.iterations):
        tick = time.perf_counter()
        batch = collect_penalized_rollouts(
            family, samples, policy, penalty, emb,
            horizon, episodes_per_domain,
            derive_stream(seed, _TAG_COLLECT, it),
            derive_stream(seed, _TAG_PROBE, it))
        collect_s += time.perf_counter() - tick
        probs = policy.probs()
        g_returns = discounted_returns(batch.rewards, batch.gamma)
        c_returns = discounted_returns(batch.costs_penalized, batch.gamma)
        raw_returns = discounted_returns(batch.costs_raw, batch.gamma)
        ups_returns.append(
            float(discounted_returns(batch.upsilons, batch.gamma)[:, 0].mean()))
        j_hat = float(g_returns[:, 0].mean())
        c_hat = float(c_returns[:, 0].mean())
        c_hat_raw = float(raw_returns[:, 0].mean())
        s_flat = batch.states.ravel()
        a_flat = batch.actions.ravel()
        g_r = _clip_norm(_softmax_batch_grad(probs, s_flat, a_flat,
                                             _reinforce_weights(g_returns, batch.gamma,
                                                                solver.baseline).ravel()),
                         solver.max_grad_norm)
        g_c = _clip_norm(_softmax_batch_grad(probs, s_flat, a_flat,
                                             _reinforce_weights(c_returns, batch.gamma,
                                                                solver.baseline).ravel()),
                         solver.max_grad_norm)
        if solver.algorithm == "crpo":
            policy.logits, kind = crpo_update(policy.logits, g_r, g_c, c_hat,
                                              budget, solver.step_size,
                                              solver.crpo_tolerance)
        else:
            policy.logits, dual = primal_dual_update(policy.logits, g_r, g_c,
                                                     c_hat, budget, dual,
                                                     solver.step_size,
                                                     solver.dual_step)
            kind = "primal-dual"
        j_eval = c_eval = None
        if _should_eval(it, solver.iterations, solver.eval_every):
            # tabular evaluation is exact even when training is sampled
            j_eval, c_eval = _eval_exact(family, policy.to_tabular(),
                                         solver.eval_samples,
                                         derive_stream(seed, _TAG_EVAL, it))
        metrics.append(MetricsRecord(it, j_hat, c_hat_raw, c_hat, j_eval, c_eval,
                                     dual, float(batch.upsilons.mean()),
                                     float(batch.upsilons.max()), kind))
    final_tab = policy.to_tabular()
    final_j, final_c = _eval_exact(family, final_tab, solver.eval_samples,
                                   derive_stream(seed, _TAG_EVAL, solver.iterations))
    return TrainResult(policy=final_tab, metrics=metrics,
                       infeasible=_tail_infeasible(metrics, budget,
                                                   solver.infeasibility_fraction),
                       runtime_s=time.perf_counter() - started,
                       collect_s=collect_s, final_j_eval=final_j,
                       final_c_eval=final_c,
                       upsilon_trace=np.array([m.mean_upsilon for m in metrics]),
                       upsilon_return_trace=np.array(ups_returns))


# ---------------------------------------------------------------------------
# training, continuous


def _eval_continuous(task: ContinuousTask, family: DomainFamily,
                     policy: LinearGaussianPolicy, count: int,
                     rng: np.random.Generator) -> tuple[float, float]:
    """Deterministic-mode evaluation on fresh draws from the eval box."""
    dist = family.distribution.with_phase("eval")
    xis = sample_box(dist, count, rng)
    discounts = task.gamma ** np.arange(task.horizon)
    js, cs = [], []
    for xi in xis:
        params = family.build(xi)
        state = task.initial_states(1, rng)
        rewards = np.empty(task.horizon)
        costs = np.empty(task.horizon)
        for t in range(task.horizon):
            action = policy.mean_action(state)
            state, r, c = task.step(state, action, params)
            rewards[t] = float(np.squeeze(r))
            costs[t] = float(np.squeeze(c))
        js.append(float(discounts @ rewards))
        cs.append(float(discounts @ costs))
    return float(np.mean(js)), float(np.mean(cs))


def train_continuous(task: ContinuousTask, family: DomainFamily, budget: float,
                     penalty: PenaltyConfig, ensemble: EnsembleSpec,
                     solver: SolverConfig, seed: int) -> TrainResult:
    """Policy-gradient training of a feature-linear Gaussian controller."""
    started = time.perf_counter()
    samples = sample_domains(family.distribution, ensemble)
    rollout_params = [family.build(xi) for xi in samples.rollout]
    sibling_params = [[family.build(xi) for xi in samples.siblings[i]]
                      for i in range(len(rollout_params))]
    policy = LinearGaussianPolicy(task.feature_fn, task.feature_dim,
                                  task.action_dim, solver.policy_std)
    dual = 0.0
    metrics = []
    ups_returns = []
    collect_s = 0.0
    episodes_per_domain = max(1, solver.batch_episodes // len(rollout_params))
    inv_var = 1.0 / (solver.policy_std ** 2)
    for it in range(solver.iterations):
        tick = time.perf_counter()
        batch = collect_continuous_rollouts(task, policy, rollout_params,
                                            sibling_params, penalty,
                                            episodes_per_domain,
                                            derive_stream(seed, _TAG_COLLECT, it))
        collect_s += time.perf_counter() - tick
        mean = batch.features @ policy.weights.T
        score = (batch.raw_actions - mean) * inv_var  # (B, H, adim)
        g_returns = discounted_returns(batch.rewards, batch.gamma)
        c_returns = discounted_returns(batch.costs_penalized, batch.gamma)
        raw_returns = discounted_returns(batch.costs_raw, batch.gamma)
        ups_returns.append(
            float(discounted_returns(batch.upsilons, batch.gamma)[:, 0].mean()))
        w_r = _reinforce_weights(g_returns, batch.gamma, solver.baseline)
        w_c = _reinforce_weights(c_returns, batch.gamma, solver.baseline)
        g_r = _clip_norm(np.einsum("bt,bta,btf->af", w_r, score, batch.features),
                         solver.max_grad_norm)
        g_c = _clip_norm(np.einsum("bt,bta,btf->af", w_c, score, batch.features),
                         solver.max_grad_norm)
        j_hat = float(g_returns[:, 0].mean())
        c_hat = float(c_returns[:, 0].mean())
        c_hat_raw = float(raw_returns[:, 0].mean())
        if solver.algorithm == "crpo":
            policy.weights, kind = crpo_update(policy.weights, g_r, g_c, c_hat,
                                               budget, solver.step_size,
                                               solver.crpo_tolerance)
        else:
            policy.weights, dual = primal_dual_update(policy.weights, g_r, g_c,
                                                      c_hat, budget, dual,
                                                      solver.step_size,
                                                      solver.dual_step)
            kind = "primal-dual"
        j_eval = c_eval = None
        if _should_eval(it, solver.iterations, solver.eval_every):
            j_eval, c_eval = _eval_continuous(task, family, policy,
                                              solver.eval_samples,
                                              derive_stream(seed, _TAG_EVAL, it))
        metrics.append(MetricsRecord(it, j_hat, c_hat_raw, c_hat, j_eval, c_eval,
                                     dual, float(batch.upsilons.mean()),
                                     float(batch.upsilons.max()), kind))
    final_j, final_c = _eval_continuous(task, family, policy,
                                        max(solver.eval_samples, 8),
                                        derive_stream(seed, _TAG_EVAL,
                                                      solver.iterations))
    return TrainResult(policy=policy, metrics=metrics,
                       infeasible=_tail_infeasible(metrics, budget,
                                                   solver.infeasibility_fraction),
                       runtime_s=time.perf_counter() - started,
                       collect_s=collect_s, final_j_eval=final_j,
                       final_c_eval=final_c,
                       upsilon_trace=np.array([m.mean_upsilon for m in metrics]),
                       upsilon_return_trace=np.array(ups_returns))
