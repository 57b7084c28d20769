"""Deterministic episodic toy environments with trajectory-level scoring.

Three environments share one interface:

- ``point_gait``: a 1-D walker driven by two "legs". A leg is in contact when
  its action component is strictly positive; contacts accelerate the body,
  drag limits the speed. Reward each step is forward velocity plus a survive
  bonus of 1 minus a torque penalty. The descriptor is the per-leg fraction
  of steps in contact, so fast gaits and unusual gaits compete for cells.
- ``point_nav``: a 2-D point mass accelerated by the action inside the arena
  [-1, 1]^2. Reward is only the (negative) torque penalty; the descriptor is
  the final position.
- ``bandit``: a 1-state continuous bandit with reward -(a - 0.5)^2, used by
  the single-policy training harness; its optimum is analytic.

Dynamics are pure functions of (state, action, t); episodes never terminate
early (done is set on the final step only).
"""

from dataclasses import dataclass

import numpy as np

from . import heads, nets
from .errors import NumericFault, ShapeError

ENV_IDS = ("point_gait", "point_nav", "bandit")
_DEFAULT_T = {"point_gait": 100, "point_nav": 100, "bandit": 1}


@dataclass(frozen=True)
class EnvSpec:
    id: str
    episode_length: int
    state_dim: int
    action_dim: int
    descriptor_dim: int
    dt: float
    drag: float
    torque_cost: float
    descriptor_low: tuple[float, ...]
    descriptor_high: tuple[float, ...]


def make_env(env_id: str, episode_length: int | None = None, dt: float = 0.05,
             drag: float = 0.1, torque_cost: float = 0.1) -> EnvSpec:
    if env_id not in ENV_IDS:
        raise ShapeError(f"unknown environment {env_id!r}")
    t = _DEFAULT_T[env_id] if episode_length is None else int(episode_length)
    if t < 1:
        raise ShapeError("episode_length must be positive")
    if env_id == "point_gait":
        return EnvSpec(env_id, t, 4, 2, 2, dt, drag, torque_cost,
                       (0.0, 0.0), (1.0, 1.0))
    if env_id == "point_nav":
        return EnvSpec(env_id, t, 4, 2, 2, dt, drag, torque_cost,
                       (-1.0, -1.0), (1.0, 1.0))
    return EnvSpec(env_id, t, 1, 1, 1, dt, drag, torque_cost, (-1.0,), (1.0,))


def reset(spec: EnvSpec) -> np.ndarray:
    """Fixed initial state; identical across calls."""
    if spec.id == "point_gait":
        return np.array([0.0, 0.0, 0.0, 1.0])  # x, v, sin(0), cos(0)
    if spec.id == "point_nav":
        return np.zeros(4)  # x, y, vx, vy
    return np.zeros(1)


def step(spec: EnvSpec, state: np.ndarray, action: np.ndarray, t: int):
    """One dynamics step; returns (next_state, reward, contact_flags)."""
    action = np.asarray(action, dtype=np.float64)
    if not np.isfinite(action).all():
        idx = int(np.argmin(np.isfinite(action)))
        raise NumericFault(f"non-finite action component {idx}", idx)
    a = np.clip(action, -1.0, 1.0)
    torque = spec.torque_cost * float(np.sum(a * a))
    if spec.id == "point_gait":
        x, v = state[0], state[1]
        contact = a > 0.0
        v2 = (1.0 - spec.drag) * v + spec.dt * float(np.sum(a[contact]))
        x2 = x + spec.dt * v2
        phase = 2.0 * np.pi * (t + 1) / spec.episode_length
        next_state = np.array([x2, v2, np.sin(phase), np.cos(phase)])
        reward = v2 + 1.0 - torque
        return next_state, reward, contact
    if spec.id == "point_nav":
        pos, vel = state[:2], state[2:]
        v2 = (1.0 - spec.drag) * vel + spec.dt * a
        p2 = np.clip(pos + spec.dt * v2, -1.0, 1.0)
        return np.concatenate([p2, v2]), -torque, np.zeros(0, dtype=bool)
    reward = -((a[0] - 0.5) ** 2)
    return np.zeros(1), reward, np.zeros(0, dtype=bool)


def fitness_floor(spec: EnvSpec) -> float:
    """A lower bound on episode fitness, used as the QD-score offset."""
    if spec.id == "point_gait":
        return 0.0
    if spec.id == "point_nav":
        return -spec.torque_cost * spec.action_dim * spec.episode_length
    return -2.25 * spec.episode_length  # worst bandit pull is a = -1


def fitness_ceiling(spec: EnvSpec) -> float | None:
    """Upper fitness bound where one exists (drag-limited terminal velocity)."""
    if spec.id == "point_gait":
        v_max = spec.dt * spec.action_dim / spec.drag
        return spec.episode_length * (v_max + 1.0)
    return None


@dataclass
class Trajectory:
    """One episode: stacked per-step arrays plus its score and descriptor."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    contacts: np.ndarray
    fitness: float
    descriptor: np.ndarray

    def __len__(self) -> int:
        return self.rewards.shape[0]


def descriptor_of(spec: EnvSpec, traj) -> np.ndarray:
    """Trajectory descriptor: contact fractions, final position, or mean action."""
    if len(traj) == 0:
        raise ShapeError("cannot take the descriptor of an empty trajectory")
    if spec.id == "point_gait":
        return traj.contacts.mean(axis=0)
    if spec.id == "point_nav":
        return traj.next_states[-1][:2].copy()
    return traj.actions.mean(axis=0)


def rollout(spec: EnvSpec, net: nets.NetSpec, params: np.ndarray, head: str,
            mode: str = "deterministic", rng: np.random.Generator | None = None
            ) -> Trajectory:
    """Run one full episode of the policy; deterministic unless asked not to be."""
    if mode not in ("deterministic", "stochastic"):
        raise ShapeError(f"unknown rollout mode {mode!r}")
    stochastic = mode == "stochastic" and head == heads.HEAD_GAUSS
    t_len = spec.episode_length
    n_contacts = spec.action_dim if spec.id == "point_gait" else 0
    states = np.empty((t_len, spec.state_dim))
    actions = np.empty((t_len, spec.action_dim))
    next_states = np.empty((t_len, spec.state_dim))
    rewards = np.empty(t_len)
    contacts = np.zeros((t_len, n_contacts), dtype=bool)
    state = reset(spec)
    for t in range(t_len):
        action = heads.act(net, params, head, state, stochastic, rng)
        next_state, reward, contact = step(spec, state, action, t)
        states[t] = state
        actions[t] = np.clip(action, -1.0, 1.0)
        next_states[t] = next_state
        rewards[t] = reward
        if n_contacts:
            contacts[t] = contact
        state = next_state
    dones = np.zeros(t_len, dtype=bool)
    dones[-1] = True
    traj = Trajectory(states, actions, next_states, rewards, dones, contacts,
                      0.0, np.zeros(spec.descriptor_dim))
    traj.fitness = float(np.sum(rewards))
    traj.descriptor = descriptor_of(spec, traj)
    ceiling = fitness_ceiling(spec)
    assert ceiling is None or traj.fitness <= ceiling, "fitness above drag bound"
    low = np.asarray(spec.descriptor_low)
    high = np.asarray(spec.descriptor_high)
    assert ((traj.descriptor >= low) & (traj.descriptor <= high)).all(), \
        "descriptor outside its declared range"
    return traj
