"""Cart-pole swingup with a slider-limit cost and randomized actuation.

Angle convention: theta = 0 is the pole hanging down, theta = pi upright,
so reward (1 - cos theta) / 2 is 1 upright at rest and 0 hanging.  The
upright equilibrium is the unstable one; one-step predictions under
different actuator gears diverge fastest there, which is exactly the rank
structure the disagreement heatmap checks.

Dynamics are the frictionless cart-pole equations integrated with RK4 at a
fixed substep; a control step holds the force for several substeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domains import DomainDistribution, DomainFamily, DomainParamSpec

__all__ = ["CartpoleSpec", "CartpoleParams", "make_cartpole_family",
           "step_cartpole", "reset_state", "energy", "upsilon_heatmap",
           "HeatmapResult"]

STATE_DIM = 4  # x, xdot, theta, thetadot


@dataclass(frozen=True)
class CartpoleSpec:
    masscart: float = 1.0
    masspole: float = 0.1
    half_length: float = 0.5   # pivot to pole center of mass
    gravity: float = 9.8
    base_gear: float = 10.0
    x_max: float = 1.0
    dt: float = 0.01           # RK4 substep
    substeps: int = 15         # substeps per control step
    horizon: int = 400
    gamma: float = 0.99
    budget: float = 20.0

    def __post_init__(self):
        if self.dt <= 0.0 or self.substeps < 1:
            raise ValueError("dt must be positive and substeps >= 1")
        if min(self.masscart, self.masspole, self.half_length, self.base_gear) <= 0.0:
            raise ValueError("physical constants must be positive")


@dataclass(frozen=True)
class CartpoleParams:
    gear: float
    half_length: float

    def __post_init__(self):
        if self.gear < 0.0 or self.half_length <= 0.0:
            raise ValueError("gear must be nonnegative, half_length positive")


def make_cartpole_family(spec: CartpoleSpec = CartpoleSpec()) -> DomainFamily:
    """Gear offset is randomized in training; pole length shifts only at eval."""
    params = (
        DomainParamSpec("gear_offset", train_range=(0.0, 5.0), eval_range=(0.0, 5.0)),
        DomainParamSpec("length_shift", train_range=(0.0, 0.0), eval_range=(-0.1, 0.1)),
    )
    dist = DomainDistribution(params=params, phase="train")

    def builder(xi: np.ndarray) -> CartpoleParams:
        gear_offset, length_shift = float(xi[0]), float(xi[1])
        return CartpoleParams(gear=spec.base_gear + gear_offset,
                              half_length=spec.half_length + length_shift)

    base = builder(np.array([2.5, 0.0]))  # midpoint gear as the nominal domain
    return DomainFamily(builder=builder, base_env=base, distribution=dist)


def _accel(state, force, params: CartpoleParams, spec: CartpoleSpec):
    """(xddot, thetaddot) for theta measured from the downward vertical."""
    theta = state[..., 2]
    thetadot = state[..., 3]
    sin, cos = np.sin(theta), np.cos(theta)
    m, total = spec.masspole, spec.masscart + spec.masspole
    length = params.half_length
    xddot = (force + m * length * thetadot ** 2 * sin
             + 0.75 * m * spec.gravity * sin * cos) / (total - 0.75 * m * cos ** 2)
    thetaddot = -3.0 * (xddot * cos + spec.gravity * sin) / (4.0 * length)
    return xddot, thetaddot


def _deriv(state, force, params, spec):
    xddot, thetaddot = _accel(state, force, params, spec)
    return np.stack([state[..., 1], xddot, state[..., 3], thetaddot], axis=-1)


def rk4_substep(state, force, params: CartpoleParams, spec: CartpoleSpec):
    h = spec.dt
    k1 = _deriv(state, force, params, spec)
    k2 = _deriv(state + 0.5 * h * k1, force, params, spec)
    k3 = _deriv(state + 0.5 * h * k2, force, params, spec)
    k4 = _deriv(state + h * k3, force, params, spec)
    return state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_control_step(state, force, params: CartpoleParams, spec: CartpoleSpec):
    """Hold the force for spec.substeps RK4 substeps.  Broadcasts over batches."""
    out = np.asarray(state, dtype=float)
    for _ in range(spec.substeps):
        out = rk4_substep(out, force, params, spec)
    return out


def reset_state(spec: CartpoleSpec) -> np.ndarray:
    return np.zeros(STATE_DIM)  # hanging at rest, cart centered


def energy(state, params: CartpoleParams, spec: CartpoleSpec) -> float:
    """Total mechanical energy; conserved by the free dynamics."""
    x_dot, theta, theta_dot = state[..., 1], state[..., 2], state[..., 3]
    m, mc, length = spec.masspole, spec.masscart, params.half_length
    kinetic = (0.5 * (mc + m) * x_dot ** 2
               + m * length * x_dot * theta_dot * np.cos(theta)
               + (2.0 / 3.0) * m * length ** 2 * theta_dot ** 2)
    potential = -m * spec.gravity * length * np.cos(theta)
    return kinetic + potential


def step_cartpole(state, action, params: CartpoleParams,
                  spec: CartpoleSpec = CartpoleSpec()):
    """One control step; returns (next_state, reward, cost).

    reward = (1 - cos theta') / 2: 1 upright at rest, 0 hanging.
    cost = 1 when the cart leaves the slider range |x| <= x_max.
    """
    action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    force = params.gear * action
    next_state = integrate_control_step(np.asarray(state, dtype=float), force, params, spec)
    reward = 0.5 * (1.0 - np.cos(next_state[..., 2]))
    cost = np.where(np.abs(next_state[..., 0]) > spec.x_max, 1.0, 0.0)
    if np.ndim(reward) == 0:
        return next_state, float(reward), float(cost)
    return next_state, reward, cost


def sibling_next_states(state, action, sibling_params: list[CartpoleParams],
                        spec: CartpoleSpec) -> np.ndarray:
    """One control-step predictions under each sibling domain, main state untouched.

    state (4,) + scalar action gives (n, 4); batch (B, 4) + (B,) gives (B, n, 4).
    """
    state = np.asarray(state, dtype=float)
    action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    gears = np.array([p.gear for p in sibling_params])
    lengths = np.array([p.half_length for p in sibling_params])
    batched = np.broadcast_to(state[..., None, :],
                              state.shape[:-1] + (len(sibling_params), STATE_DIM)).copy()
    force = gears * action[..., None]
    # integrate all siblings at once; half_length varies per sibling so fold it
    # into a params object per sibling only if lengths differ
    if np.all(lengths == lengths[0]):
        p = CartpoleParams(gear=1.0, half_length=float(lengths[0]))
        return integrate_control_step(batched, force, p, spec)
    out = np.empty_like(batched)
    for j, params in enumerate(sibling_params):
        out[..., j, :] = integrate_control_step(batched[..., j, :],
                                                force[..., j], params, spec)
    return out


@dataclass(frozen=True)
class HeatmapResult:
    theta_grid: np.ndarray
    thetadot_grid: np.ndarray
    actions: np.ndarray
    values: np.ndarray  # (actions, theta, thetadot)

    def mean_by_action(self) -> np.ndarray:
        return self.values.mean(axis=(1, 2))

    def mean_near(self, theta: float, action_index: int, tol: float = 0.45) -> float:
        wrap = np.minimum(np.abs(self.theta_grid - theta),
                          2.0 * np.pi - np.abs(self.theta_grid - theta))
        mask = wrap <= tol
        return float(self.values[action_index][mask].mean())


def upsilon_heatmap(family: DomainFamily, n: int = 64, seed: int = 0,
                    theta_grid=None, thetadot_grid=None,
                    actions=(0.0, 0.3, 0.7, 1.0),
                    spec: CartpoleSpec = CartpoleSpec()) -> HeatmapResult:
    """Sampled disagreement over a (theta, thetadot) grid for each action.

    For every cell, n sibling domains are drawn from the training
    distribution and one control step is simulated from (x=0, xdot=0,
    theta, thetadot); the sampled upsilon of the n predicted states fills
    the cell.  Cell streams are keyed by indices, so the map is reproducible
    and independent of grid traversal order.
    """
    from ..domains import EnsembleSpec, sample_domains
    from ..pessimism import upsilon_sampled

    if theta_grid is None:
        theta_grid = np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False)
    if thetadot_grid is None:
        thetadot_grid = np.linspace(-2.0, 2.0, 9)
    theta_grid = np.asarray(theta_grid, dtype=float)
    thetadot_grid = np.asarray(thetadot_grid, dtype=float)
    actions = np.asarray(actions, dtype=float)
    values = np.empty((actions.size, theta_grid.size, thetadot_grid.size))
    for ti, theta in enumerate(theta_grid):
        for di, thetadot in enumerate(thetadot_grid):
            cell_seed = (int(seed) << 16) ^ (ti * 1024 + di)
            draws = sample_domains(family.distribution,
                                   EnsembleSpec(num_rollout=1, num_siblings=n,
                                                seed=cell_seed))
            siblings = [family.build(x) for x in draws.siblings[0]]
            state = np.array([0.0, 0.0, theta, thetadot])
            for ai, action in enumerate(actions):
                nxt = sibling_next_states(state, np.asarray(action), siblings, spec)
                values[ai, ti, di] = upsilon_sampled(nxt)
    return HeatmapResult(theta_grid=theta_grid, thetadot_grid=thetadot_grid,
                         actions=actions, values=values)
