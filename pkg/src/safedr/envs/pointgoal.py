"""Point-mass navigation with a hazard astride the straight path to the goal.

A 2-D point mass is force-controlled toward a goal region; crossing the
hazard disk costs kinetic energy per step, so the cheap way through is to
slow down.  Training randomizes the actuator gear; evaluation additionally
lowers damping and raises mass, which makes the same controller faster and
therefore costlier inside the hazard - the transfer gap this task exists
to exhibit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domains import DomainDistribution, DomainFamily, DomainParamSpec

__all__ = ["PointGoalSpec", "PointGoalParams", "make_pointgoal_family",
           "step_pointgoal", "reset_state", "embed_state", "phys_step"]

STATE_DIM = 6  # x, y, vx, vy, prev action (2)


@dataclass(frozen=True)
class PointGoalSpec:
    start: tuple[float, float] = (-1.2, 0.0)
    goal: tuple[float, float] = (1.2, 0.0)
    goal_radius: float = 0.3
    # three stacked disks form a wall between start and goal: no detour exists,
    # so the optimum must cross and the only safety lever is crossing speed
    hazards: tuple[tuple[float, float, float], ...] = (
        (0.0, 0.0, 0.5), (0.0, 0.6, 0.5), (0.0, -0.6, 0.5))  # (cx, cy, r)
    arena: tuple[float, float] = (1.5, 1.0)  # half extents
    dt: float = 0.05
    horizon: int = 400
    gamma: float = 0.99
    ctrl_penalty: float = 0.01
    smooth_penalty: float = 0.005
    base_mass: float = 1.0
    base_damping: float = 1.0
    base_gain: float = 1.0
    budget: float = 2.5

    def __post_init__(self):
        if self.dt <= 0.0 or self.horizon < 1:
            raise ValueError("dt must be positive and horizon >= 1")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.goal_radius <= 0.0:
            raise ValueError("goal_radius must be positive")
        for cx, cy, r in self.hazards:
            if r <= 0.0:
                raise ValueError("hazard radius must be positive")
            if abs(cx) > self.arena[0] or abs(cy) > self.arena[1]:
                raise ValueError("hazard centers must lie inside the arena")


@dataclass(frozen=True)
class PointGoalParams:
    mass: float
    damping: float
    gain: float

    def __post_init__(self):
        if self.mass <= 0.0 or self.damping < 0.0 or self.gain <= 0.0:
            raise ValueError("mass and gain must be positive, damping nonnegative")


def make_pointgoal_family(spec: PointGoalSpec = PointGoalSpec()) -> DomainFamily:
    """Gear and damping are randomized in training; evaluation shifts the
    damping well below the randomized band (and nudges mass), so the
    deployment dynamics lie outside the training set."""
    params = (
        DomainParamSpec("gear", train_range=(-0.2, 0.2), eval_range=(-0.2, 0.2)),
        DomainParamSpec("mass_scale", train_range=(1.0, 1.0), eval_range=(1.0, 1.05),
                        mode="multiplicative"),
        DomainParamSpec("damping_shift", train_range=(-0.1, 0.1), eval_range=(-0.5, -0.35)),
    )
    dist = DomainDistribution(params=params, phase="train")

    def builder(xi: np.ndarray) -> PointGoalParams:
        gear, mass_scale, damping_shift = (float(v) for v in xi)
        return PointGoalParams(
            mass=params[1].apply(spec.base_mass, mass_scale),
            damping=params[2].apply(spec.base_damping, damping_shift),
            gain=params[0].apply(spec.base_gain, gear),
        )

    base = builder(np.array([0.0, 1.0, 0.0]))
    return DomainFamily(builder=builder, base_env=base, distribution=dist)


def reset_state(spec: PointGoalSpec) -> np.ndarray:
    state = np.zeros(STATE_DIM)
    state[0], state[1] = spec.start
    return state


def embed_state(state: np.ndarray) -> np.ndarray:
    """Coordinates entering the disagreement estimate: position and velocity."""
    return np.asarray(state)[..., :4]


def phys_step(pos, vel, action, mass, damping, gain, dt):
    """Semi-implicit Euler step; broadcasts over leading batch dimensions.

    pos, vel, action: (..., 2); mass, damping, gain: broadcastable scalars.
    """
    accel = (gain * action - damping * vel) / mass
    new_vel = vel + dt * accel
    new_pos = pos + dt * new_vel
    return new_pos, new_vel


def _dist(pos, point):
    return np.sqrt(((pos - np.asarray(point)) ** 2).sum(-1))


def state_cost(state, params: PointGoalParams, spec: PointGoalSpec):
    """Cost of being where you are: kinetic energy inside a hazard, 1 outside the arena."""
    pos = np.asarray(state)[..., 0:2]
    vel = np.asarray(state)[..., 2:4]
    kinetic = 0.5 * params.mass * (vel ** 2).sum(-1)
    in_hazard = np.zeros(pos.shape[:-1], dtype=bool)
    for cx, cy, r in spec.hazards:
        in_hazard |= _dist(pos, (cx, cy)) <= r
    outside = (np.abs(pos[..., 0]) > spec.arena[0]) | (np.abs(pos[..., 1]) > spec.arena[1])
    return np.where(in_hazard, kinetic, 0.0) + np.where(outside, 1.0, 0.0)


def step_pointgoal(state, action, params: PointGoalParams,
                   spec: PointGoalSpec = PointGoalSpec()):
    """One control step; returns (next_state, reward, cost).

    Reward: progress toward the goal, plus 1 while within the goal region,
    minus control magnitude and action smoothness penalties.  Cost is charged
    at the state being left (kinetic energy inside hazards, 1 outside the
    arena).  Positions are clamped to the arena after the cost is assessed.
    """
    state = np.asarray(state, dtype=float)
    action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    pos, vel, prev_a = state[..., 0:2], state[..., 2:4], state[..., 4:6]
    cost = state_cost(state, params, spec)
    new_pos, new_vel = phys_step(pos, vel, action, params.mass, params.damping,
                                 params.gain, spec.dt)
    d_prev = _dist(pos, spec.goal)
    d_new = _dist(new_pos, spec.goal)
    reward = (d_prev - d_new
              + np.where(d_new <= spec.goal_radius, 1.0, 0.0)
              - spec.ctrl_penalty * np.sqrt((action ** 2).sum(-1))
              - spec.smooth_penalty * ((action - prev_a) ** 2).sum(-1))
    clamped = np.clip(new_pos, (-spec.arena[0], -spec.arena[1]),
                      (spec.arena[0], spec.arena[1]))
    new_vel = np.where(clamped == new_pos, new_vel, 0.0)
    next_state = np.concatenate([clamped, new_vel, action], axis=-1)
    return next_state, reward, cost


def sibling_next_states(state, action, sibling_params: list[PointGoalParams],
                        spec: PointGoalSpec) -> np.ndarray:
    """One-step physical predictions under each sibling domain (never advances
    the main state).

    state (6,) with action (2,) gives (n, 4); a batch (B, 6) with actions
    (B, 2) gives (B, n, 4).  Only the dynamics run here, none of the reward
    or cost bookkeeping, so probing stays cheap next to a full step.
    """
    state = np.asarray(state, dtype=float)
    action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    mass = np.array([p.mass for p in sibling_params])[:, None]
    damping = np.array([p.damping for p in sibling_params])[:, None]
    gain = np.array([p.gain for p in sibling_params])[:, None]
    pos = state[..., None, 0:2]
    vel = state[..., None, 2:4]
    new_pos, new_vel = phys_step(pos, vel, action[..., None, :],
                                 mass, damping, gain, spec.dt)
    return np.concatenate([new_pos, new_vel], axis=-1)
