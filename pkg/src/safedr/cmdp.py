"""Exact machinery for finite constrained MDPs.

Dense tabular representation plus the closed-form operations everything else
is verified against: policy evaluation by direct linear solves, discounted
occupancy measures, an occupancy-measure LP for the constrained optimum, and
the telescoping decomposition of the cost gap between two kernels that share
rewards and costs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

__all__ = [
    "TabularCMDP",
    "TabularPolicy",
    "ValueFunctions",
    "OccupancyMeasure",
    "CmdpSolution",
    "evaluate_policy",
    "occupancy",
    "solve_cmdp_lp",
    "telescoping_residual",
]

_ROW_SUM_TOL = 1e-12


def _freeze(a):
    arr = np.asarray(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabularCMDP:
    """Finite CMDP with dense transitions.

    transitions: (S, A, S) array, transitions[s, a, s'] = p(s'|s,a).
    rewards, costs: (S, A) arrays, rewards in [0, r_max], costs in [0, c_max].
    gamma: discount in (0, 1).  rho: initial state distribution (S,).
    budget: cost budget for the discounted cost value (>= 0).
    """

    transitions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    gamma: float
    rho: np.ndarray
    budget: float
    r_max: float = 1.0
    c_max: float = 1.0

    def __post_init__(self):
        p = _freeze(self.transitions)
        r = _freeze(self.rewards)
        c = _freeze(self.costs)
        rho = _freeze(self.rho)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "rho", rho)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transitions must be (S, A, S), got {p.shape}")
        s, a = p.shape[0], p.shape[1]
        if r.shape != (s, a) or c.shape != (s, a):
            raise ValueError("rewards/costs must be shaped (S, A)")
        if rho.shape != (s,):
            raise ValueError("rho must be shaped (S,)")
        if np.any(p < -_ROW_SUM_TOL):
            raise ValueError("transition probabilities must be nonnegative")
        rowerr = np.abs(p.sum(axis=2) - 1.0).max()
        if rowerr > _ROW_SUM_TOL:
            raise ValueError(f"transition rows must sum to 1 (max error {rowerr:.3e})")
        if abs(rho.sum() - 1.0) > _ROW_SUM_TOL or np.any(rho < -_ROW_SUM_TOL):
            raise ValueError("rho must be a probability distribution")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if np.any(r < -_ROW_SUM_TOL) or np.any(r > self.r_max + _ROW_SUM_TOL):
            raise ValueError("rewards must lie in [0, r_max]")
        if np.any(c < -_ROW_SUM_TOL) or np.any(c > self.c_max + _ROW_SUM_TOL):
            raise ValueError("costs must lie in [0, c_max]")
        if self.budget < 0.0:
            raise ValueError("budget must be nonnegative")

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    def with_costs(self, costs) -> "TabularCMDP":
        """Same CMDP with a replacement cost table (bounds re-derived)."""
        c = np.asarray(costs, dtype=float)
        return TabularCMDP(
            transitions=self.transitions,
            rewards=self.rewards,
            costs=c,
            gamma=self.gamma,
            rho=self.rho,
            budget=self.budget,
            r_max=self.r_max,
            c_max=max(self.c_max, float(c.max(initial=0.0))),
        )

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.transitions, self.rewards, self.costs, self.rho):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(np.float64(self.gamma).tobytes())
        h.update(np.float64(self.budget).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class TabularPolicy:
    """Stationary stochastic policy, probs[s, a] = pi(a|s)."""

    probs: np.ndarray

    def __post_init__(self):
        p = _freeze(self.probs)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2:
            raise ValueError("policy must be shaped (S, A)")
        if np.any(p < -_ROW_SUM_TOL):
            raise ValueError("policy probabilities must be nonnegative")
        rowerr = np.abs(p.sum(axis=1) - 1.0).max()
        if rowerr > 1e-9:
            raise ValueError(f"policy rows must sum to 1 (max error {rowerr:.3e})")

    @staticmethod
    def deterministic(actions, num_actions: int) -> "TabularPolicy":
        acts = np.asarray(actions, dtype=int)
        probs = np.zeros((acts.shape[0], num_actions))
        probs[np.arange(acts.shape[0]), acts] = 1.0
        return TabularPolicy(probs)

    @staticmethod
    def uniform(num_states: int, num_actions: int) -> "TabularPolicy":
        return TabularPolicy(np.full((num_states, num_actions), 1.0 / num_actions))


@dataclass(frozen=True)
class ValueFunctions:
    """State and state-action values for reward and cost under one policy."""

    v_reward: np.ndarray
    v_cost: np.ndarray
    q_reward: np.ndarray
    q_cost: np.ndarray
    j_value: float
    c_value: float


@dataclass(frozen=True)
class OccupancyMeasure:
    """Normalized discounted state-action occupancy, sums to one."""

    weights: np.ndarray
    state_weights: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        w = _freeze(self.weights)
        object.__setattr__(self, "weights", w)
        if self.state_weights is not None:
            object.__setattr__(self, "state_weights", _freeze(self.state_weights))


def _averaged(mdp: TabularCMDP, policy: TabularPolicy):
    p_pi = np.einsum("saz,sa->sz", mdp.transitions, policy.probs)
    r_pi = np.einsum("sa,sa->s", mdp.rewards, policy.probs)
    c_pi = np.einsum("sa,sa->s", mdp.costs, policy.probs)
    return p_pi, r_pi, c_pi


def evaluate_policy(mdp: TabularCMDP, policy: TabularPolicy) -> ValueFunctions:
    """Exact policy evaluation by solving the two Bellman linear systems."""
    if policy.probs.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError("policy shape does not match the CMDP")
    p_pi, r_pi, c_pi = _averaged(mdp, policy)
    eye = np.eye(mdp.num_states)
    a = eye - mdp.gamma * p_pi
    v_r = np.linalg.solve(a, r_pi)
    v_c = np.linalg.solve(a, c_pi)
    q_r = mdp.rewards + mdp.gamma * np.einsum("saz,z->sa", mdp.transitions, v_r)
    q_c = mdp.costs + mdp.gamma * np.einsum("saz,z->sa", mdp.transitions, v_c)
    return ValueFunctions(
        v_reward=v_r,
        v_cost=v_c,
        q_reward=q_r,
        q_cost=q_c,
        j_value=float(mdp.rho @ v_r),
        c_value=float(mdp.rho @ v_c),
    )


def occupancy(mdp: TabularCMDP, policy: TabularPolicy) -> OccupancyMeasure:
    """Normalized discounted occupancy d(s,a) = (1-gamma) sum_t gamma^t P(s_t=s) pi(a|s)."""
    p_pi, _, _ = _averaged(mdp, policy)
    eye = np.eye(mdp.num_states)
    state_w = (1.0 - mdp.gamma) * np.linalg.solve(eye - mdp.gamma * p_pi.T, mdp.rho)
    weights = state_w[:, None] * policy.probs
    return OccupancyMeasure(weights=weights, state_weights=state_w)


@dataclass(frozen=True)
class CmdpSolution:
    """Outcome of the occupancy LP; infeasibility is a result, not an error."""

    status: str  # "optimal" or "infeasible"
    policy: TabularPolicy | None
    j_value: float | None
    c_value: float | None
    occupancy: OccupancyMeasure | None

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


def solve_cmdp_lp(mdp: TabularCMDP) -> CmdpSolution:
    """Constrained optimum over stationary stochastic policies.

    Occupancy-measure LP: maximize <d, r> subject to the flow-conservation
    equalities, <d, c> <= (1-gamma) * budget and d >= 0; the policy is
    recovered as pi(a|s) = d(s,a) / sum_a d(s,a), uniform on states with zero
    occupancy.  Solved with the deterministic HiGHS backend.
    """
    s, a = mdp.num_states, mdp.num_actions
    n = s * a
    gamma = mdp.gamma
    # flow conservation: sum_a d(z,a) - gamma * sum_{s,a} p(z|s,a) d(s,a) = (1-gamma) rho(z)
    a_eq = np.zeros((s, n))
    for z in range(s):
        out = np.zeros((s, a))
        out[z, :] = 1.0
        a_eq[z] = (out - gamma * mdp.transitions[:, :, z]).reshape(n)
    b_eq = (1.0 - gamma) * mdp.rho
    a_ub = mdp.costs.reshape(1, n)
    b_ub = np.array([(1.0 - gamma) * mdp.budget])
    res = optimize.linprog(
        c=-mdp.rewards.reshape(n),
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0.0, None),
        method="highs",
    )
    if res.status == 2:
        return CmdpSolution("infeasible", None, None, None, None)
    if not res.success:
        raise RuntimeError(f"occupancy LP failed: {res.message}")
    d = np.clip(res.x.reshape(s, a), 0.0, None)
    state_w = d.sum(axis=1)
    probs = np.empty((s, a))
    zero = state_w <= 0.0
    probs[~zero] = d[~zero] / state_w[~zero, None]
    probs[zero] = 1.0 / a
    policy = TabularPolicy(probs)
    j_star = float(d.reshape(n) @ mdp.rewards.reshape(n) / (1.0 - gamma))
    c_star = float(d.reshape(n) @ mdp.costs.reshape(n) / (1.0 - gamma))
    occ = OccupancyMeasure(weights=d / max(d.sum(), 1e-300), state_weights=state_w)
    return CmdpSolution("optimal", policy, j_star, c_star, occ)


def telescoping_residual(mdp_p: TabularCMDP, mdp_q: TabularCMDP,
                         policy: TabularPolicy) -> float:
    """Residual of the exact cost-gap decomposition between two kernels.

    For CMDPs that differ only in the transition kernel,
    C_q - C_p = (gamma / (1-gamma)) * E_{(s,a)~d_q}[ <q(.|s,a) - p(.|s,a), V_c^{p,pi}> ].
    Returns |lhs - rhs|; exact arithmetic drives it to machine precision.
    """
    for name in ("rewards", "costs", "rho"):
        if not np.array_equal(getattr(mdp_p, name), getattr(mdp_q, name)):
            raise ValueError(f"CMDPs must share {name} to telescope the cost gap")
    if mdp_p.gamma != mdp_q.gamma:
        raise ValueError("CMDPs must share gamma")
    vals_p = evaluate_policy(mdp_p, policy)
    vals_q = evaluate_policy(mdp_q, policy)
    advantage = np.einsum("saz,z->sa", mdp_q.transitions - mdp_p.transitions, vals_p.v_cost)
    d_q = occupancy(mdp_q, policy).weights
    lhs = vals_q.c_value - vals_p.c_value
    rhs = mdp_p.gamma / (1.0 - mdp_p.gamma) * float(np.sum(d_q * advantage))
    return abs(lhs - rhs)
