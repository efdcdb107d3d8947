"""Pessimism machinery: disagreement penalties and transfer-bound reports.

The uncertainty estimate (upsilon) is the summed per-coordinate variance of
embedded next states across an ensemble of randomized domains; scaled by
lambda it is added to the cost so that a solver treats poorly identified
state-actions as expensive.  The module also carries the exact transfer
bound the penalty is a surrogate for: deployment cost is bounded by the
domain-averaged cost plus an occupancy-weighted Wasserstein term, and the
oracle penalty built from that bound certifies deployment safety.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .cmdp import TabularCMDP, TabularPolicy, evaluate_policy, occupancy
from .domains import DomainFamily, mixture_kernel

__all__ = [
    "PenaltyConfig",
    "WassersteinMetric",
    "BoundReport",
    "CalibrationResult",
    "upsilon_sampled",
    "upsilon_exact_tabular",
    "upsilon_exact_matrix",
    "penalize_cost",
    "wasserstein_1d",
    "wasserstein_lp",
    "transfer_bound_report",
    "oracle_penalty",
    "calibrate_lambda",
    "underestimation_gap",
    "penalty_sufficiency",
]


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weight and which upsilon estimator feeds it."""

    lam: float = 0.0
    mode: str = "sampled"

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("lambda must be nonnegative")
        if self.mode not in ("sampled", "exact"):
            raise ValueError("mode must be 'sampled' or 'exact'")


@dataclass(frozen=True)
class WassersteinMetric:
    """Ground geometry for transport distances between next-state laws.

    Transport uses the 2-norm between embedded states; Lipschitz slopes of
    value functions are reported under the 1-norm (the bound's convention)
    with the 2-norm slope used wherever the pairing must be valid.  The two
    coincide for one-dimensional embeddings.
    """

    embedding: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=float)
        if emb.ndim == 1:
            emb = emb[:, None]
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    def pairwise_cost(self) -> np.ndarray:
        d = self.embedding[:, None, :] - self.embedding[None, :, :]
        return np.sqrt((d ** 2).sum(-1))

    def min_gap(self, norm: int = 2) -> float:
        d = self.embedding[:, None, :] - self.embedding[None, :, :]
        if norm == 1:
            mat = np.abs(d).sum(-1)
        else:
            mat = np.sqrt((d ** 2).sum(-1))
        off = mat[~np.eye(mat.shape[0], dtype=bool)]
        return float(off.min()) if off.size else 0.0

    def distance(self, p: np.ndarray, q: np.ndarray) -> float:
        """Transport distance between two laws on the embedded states."""
        if self.dim == 1:
            coords = self.embedding[:, 0]
            order = np.argsort(coords, kind="stable")
            return wasserstein_1d(np.asarray(p)[order], np.asarray(q)[order], coords[order])
        return wasserstein_lp(p, q, self.pairwise_cost())

    def slope(self, values: np.ndarray, norm: int = 2) -> float:
        """Largest pairwise |values difference| / embedding distance."""
        dv = np.abs(values[:, None] - values[None, :])
        d = self.embedding[:, None, :] - self.embedding[None, :, :]
        dist = np.abs(d).sum(-1) if norm == 1 else np.sqrt((d ** 2).sum(-1))
        mask = ~np.eye(values.shape[0], dtype=bool)
        dist = dist[mask]
        dv = dv[mask]
        if np.any((dist == 0.0) & (dv > 0.0)):
            raise ValueError("distinct values on coincident embeddings: slope undefined")
        ok = dist > 0.0
        return float((dv[ok] / dist[ok]).max()) if ok.any() else 0.0


@dataclass(frozen=True)
class BoundReport:
    """Both sides of the transfer bound for one (family, deployment, policy)."""

    lhs: float
    rhs: float
    slack: float
    lipschitz_cost: float
    per_state_wasserstein: np.ndarray
    sim_cost_mean: float
    penalty_term: float
    transport_slope: float


def upsilon_sampled(next_embedded: np.ndarray) -> float:
    """Summed per-coordinate population variance of n sibling next states.

    next_embedded: (n, k) or (n,) array of embedded one-step predictions.
    Divisor is n (population form), so the estimator's mean for i.i.d.
    siblings is (n-1)/n times the exact value.
    """
    arr = np.asarray(next_embedded, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("next_embedded must be (n, k)")
    if arr.shape[0] < 2:
        raise ValueError("sampled upsilon needs at least 2 siblings")
    return float(arr.var(axis=0, ddof=0).sum())


def upsilon_exact_tabular(family: DomainFamily, domains: np.ndarray, state: int,
                          action: int, embedding: np.ndarray) -> float:
    """Infinite-sibling limit at one (s, a): variance under the two-stage draw
    (domain uniform over the given set, then next state from its kernel)."""
    return float(upsilon_exact_matrix(family, domains, embedding)[state, action])


def upsilon_exact_matrix(family: DomainFamily, domains: np.ndarray,
                         embedding: np.ndarray) -> np.ndarray:
    """(S, A) table of exact upsilon values under the equal-weight domain mixture."""
    emb = np.asarray(embedding, dtype=float)
    if emb.ndim == 1:
        emb = emb[:, None]
    mix = mixture_kernel(family, domains)  # (S, A, S)
    mean = np.einsum("saz,zk->sak", mix, emb)
    mean_sq = np.einsum("saz,zk->sak", mix, emb ** 2)
    return np.clip(mean_sq - mean ** 2, 0.0, None).sum(axis=-1)


def penalize_cost(cost, upsilon, lam: float):
    """c_tilde = c + lambda * upsilon, elementwise."""
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    ups = np.asarray(upsilon, dtype=float)
    if np.any(ups < 0.0):
        raise ValueError("upsilon must be nonnegative")
    out = np.asarray(cost, dtype=float) + lam * ups
    return float(out) if np.ndim(out) == 0 else out


def wasserstein_1d(p: np.ndarray, q: np.ndarray, support: np.ndarray) -> float:
    """Transport distance on a sorted 1-D support via the CDF-difference sum."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    x = np.asarray(support, dtype=float)
    if not (p.shape == q.shape == x.shape) or p.ndim != 1:
        raise ValueError("p, q and support must be 1-D arrays of equal length")
    if np.any(np.diff(x) < 0.0):
        raise ValueError("support must be sorted ascending")
    if np.any(p < -1e-12) or np.any(q < -1e-12):
        raise ValueError("masses must be nonnegative")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("masses must each sum to 1")
    cdf_gap = np.abs(np.cumsum(p - q))[:-1]
    return float(np.sum(cdf_gap * np.diff(x)))


def wasserstein_lp(p: np.ndarray, q: np.ndarray, ground_cost: np.ndarray) -> float:
    """Transport distance by solving the coupling LP (independent route).

    minimize <coupling, ground_cost> subject to the coupling's marginals
    being p and q.  Ground cost must be a nonnegative (len(p), len(q)) matrix.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = np.asarray(ground_cost, dtype=float)
    if c.shape != (p.size, q.size):
        raise ValueError("ground_cost must be shaped (len(p), len(q))")
    if np.any(c < 0.0):
        raise ValueError("ground_cost must be nonnegative")
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ValueError("masses must balance")
    m, k = p.size, q.size
    a_eq = np.zeros((m + k, m * k))
    for i in range(m):
        a_eq[i, i * k:(i + 1) * k] = 1.0
    for j in range(k):
        a_eq[m + j, j::k] = 1.0
    b_eq = np.concatenate([p, q])
    res = optimize.linprog(c=c.reshape(-1), A_eq=a_eq[:-1], b_eq=b_eq[:-1],
                           bounds=(0.0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def _wasserstein_table(envs: list[TabularCMDP], real_env: TabularCMDP,
                       metric: WassersteinMetric) -> np.ndarray:
    """(num_domains, S, A) transport distances between each domain row and the
    deployment row."""
    s, a = real_env.num_states, real_env.num_actions
    out = np.empty((len(envs), s, a))
    for d, env in enumerate(envs):
        for i in range(s):
            for j in range(a):
                out[d, i, j] = metric.distance(env.transitions[i, j],
                                               real_env.transitions[i, j])
    return out


def transfer_bound_report(family: DomainFamily, domains: np.ndarray,
                          real_env: TabularCMDP, policy: TabularPolicy,
                          embedding: np.ndarray) -> BoundReport:
    """Evaluate both sides of the transfer bound exactly.

    lhs: deployment cost of the policy.  rhs: domain-averaged cost plus
    (gamma * L / (1 - gamma)) times the domain-averaged occupancy-weighted
    transport distance between each domain kernel and the deployment kernel.
    The slope L multiplying the 2-norm transport term is the 2-norm slope of
    the deployment cost value function (the valid pairing); the 1-norm slope
    is recorded as lipschitz_cost.
    """
    metric = WassersteinMetric(embedding)
    xi = np.atleast_2d(np.asarray(domains, dtype=float))
    envs = [family.build(row) for row in xi]
    real_vals = evaluate_policy(real_env, policy)
    slope1 = metric.slope(real_vals.v_cost, norm=1)
    slope2 = metric.slope(real_vals.v_cost, norm=2)
    tables = _wasserstein_table(envs, real_env, metric)
    gamma = real_env.gamma
    sim_costs = []
    weighted = []
    for env, table in zip(envs, tables):
        sim_costs.append(evaluate_policy(env, policy).c_value)
        occ = occupancy(env, policy).weights
        weighted.append(float(np.sum(occ * table)))
    sim_cost_mean = float(np.mean(sim_costs))
    penalty_term = gamma * slope2 / (1.0 - gamma) * float(np.mean(weighted))
    lhs = real_vals.c_value
    rhs = sim_cost_mean + penalty_term
    return BoundReport(lhs=lhs, rhs=rhs, slack=rhs - lhs, lipschitz_cost=slope1,
                       per_state_wasserstein=tables.mean(axis=0),
                       sim_cost_mean=sim_cost_mean, penalty_term=penalty_term,
                       transport_slope=slope2)


def oracle_penalty(family: DomainFamily, domains: np.ndarray,
                   real_env: TabularCMDP, embedding: np.ndarray) -> np.ndarray:
    """(S, A) penalty that certifies deployment safety for every policy.

    penalty(s, a) = (gamma * L / (1 - gamma)) * max over domains of the
    transport distance to the deployment kernel at (s, a).  L is the
    policy-uniform slope bound c_max / ((1 - gamma) * smallest embedding
    gap), which dominates the cost value function's slope for any policy; a
    per-policy slope could not certify the bound over all policies at once.
    """
    metric = WassersteinMetric(embedding)
    xi = np.atleast_2d(np.asarray(domains, dtype=float))
    envs = [family.build(row) for row in xi]
    gap = metric.min_gap(norm=2)
    if gap <= 0.0:
        raise ValueError("embedding must separate states to bound the slope")
    slope = real_env.c_max / ((1.0 - real_env.gamma) * gap)
    table = _wasserstein_table(envs, real_env, metric).max(axis=0)
    return real_env.gamma * slope / (1.0 - real_env.gamma) * table


@dataclass(frozen=True)
class CalibrationResult:
    lam_suggested: float
    lam_range: tuple[float, float]
    degenerate: bool


def calibrate_lambda(upsilon_values, c_max: float) -> CalibrationResult:
    """lambda suggestion c_max / mean(upsilon) with a one-decade range around it.

    upsilon_values: upsilon samples over visited state-actions (from a run
    with lambda = 0).  A zero mean (no disagreement) is flagged degenerate
    and suggests lambda = 0.
    """
    ups = np.asarray(upsilon_values, dtype=float).reshape(-1)
    if ups.size == 0:
        raise ValueError("need at least one upsilon sample")
    if np.any(ups < 0.0):
        raise ValueError("upsilon must be nonnegative")
    if c_max <= 0.0:
        raise ValueError("c_max must be positive")
    mean = float(ups.mean())
    if mean == 0.0:
        return CalibrationResult(0.0, (0.0, 0.0), True)
    lam = c_max / mean
    return CalibrationResult(lam, (lam / 10.0, lam * 10.0), False)


def underestimation_gap(c_eval: float, c_train: float) -> float:
    """Signed gap between evaluation cost and training cost estimates."""
    return float(c_eval) - float(c_train)


def penalty_sufficiency(c_train_penalized: float, c_train_raw: float,
                        c_eval: float) -> float:
    """Penalty coverage margin: (penalized - raw training cost) - |eval - train gap|.

    Nonnegative means the accumulated penalty was at least as large as the
    observed transfer gap; negative means the penalty under-covered it.
    """
    coverage = float(c_train_penalized) - float(c_train_raw)
    return coverage - abs(underestimation_gap(c_eval, c_train_raw))
