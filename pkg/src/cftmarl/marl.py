"""Competitive N-agent Markov game plumbing: replay, reward shaping, TD targets
and the episode/training loop that drives heterogeneous agents."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GameSpec:
    n_agents: int
    state_dim: int
    action_dims: tuple
    gamma: float = 0.95
    alpha: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "action_dims", tuple(int(a) for a in self.action_dims))
        if self.n_agents < 1 or self.state_dim < 1:
            raise ConfigError("n_agents and state_dim must be positive")
        if len(self.action_dims) != self.n_agents or min(self.action_dims) < 1:
            raise ConfigError("need one positive action dim per agent")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.alpha > 0.0 and self.n_agents < 2:
            raise ConfigError("competitive shaping (alpha > 0) needs at least 2 agents")

    @property
    def joint_action_dim(self):
        return sum(self.action_dims)

    def action_slices(self):
        out, lo = [], 0
        for a in self.action_dims:
            out.append(slice(lo, lo + a))
            lo += a
        return out


@dataclass
class JointTransition:
    state: np.ndarray
    actions: list
    rewards: np.ndarray
    next_state: np.ndarray
    # agent index -> (intents (K, a_dim), scenario index); recorded by CFT agents
    extras: dict = field(default_factory=dict)


def shape_rewards(rewards, alpha, i):
    """Own reward blended against the negated mean of the opponents' rewards."""
    rewards = np.asarray(rewards, dtype=np.float64)
    n = rewards.shape[-1]
    if alpha == 0.0:
        return rewards[..., i]
    if n < 2:
        raise ConfigError("alpha > 0 requires at least two agents")
    others = rewards.sum(axis=-1) - rewards[..., i]
    return (1.0 - alpha) * rewards[..., i] - alpha * others / (n - 1)


def shape_all(rewards, alpha):
    """Shaped rewards for every agent; works on ``(..., N)`` arrays."""
    rewards = np.asarray(rewards, dtype=np.float64)
    n = rewards.shape[-1]
    if alpha == 0.0:
        return rewards.copy()
    if n < 2:
        raise ConfigError("alpha > 0 requires at least two agents")
    others = rewards.sum(axis=-1, keepdims=True) - rewards
    return (1.0 - alpha) * rewards - alpha * others / (n - 1)


def td_target(q_next, shaped_reward, gamma):
    return gamma * q_next + shaped_reward


@dataclass
class Batch:
    states: np.ndarray          # (B, S)
    actions: np.ndarray         # (B, sum a_i), agents concatenated in order
    rewards: np.ndarray         # (B, N) raw
    next_states: np.ndarray     # (B, S)
    extras: dict                # agent -> (intents (B, K, a), scenarios (B,))
    slices: list

    def __len__(self):
        return self.states.shape[0]

    def agent_actions(self, i):
        return self.actions[:, self.slices[i]]


class ReplayBuffer:
    """Fixed-capacity ring of joint transitions backed by preallocated arrays."""

    def __init__(self, capacity, spec):
        if capacity < 1:
            raise ConfigError("replay capacity must be positive")
        self.capacity = int(capacity)
        self.spec = spec
        self._slices = spec.action_slices()
        self._alloc = 0
        self._head = 0      # next write position
        self.size = 0
        self._states = self._actions = self._rewards = self._next = None
        self._extras = {}   # agent -> [intents array, scenario array]
        self._grow(1)

    def __len__(self):
        return self.size

    def _grow(self, need):
        new = min(self.capacity, max(need, 2 * self._alloc, 256))
        if new <= self._alloc:
            return
        sp = self.spec

        def grow(arr, shape, dtype=np.float64):
            out = np.zeros((new,) + shape, dtype=dtype)
            if arr is not None:
                out[:self._alloc] = arr
            return out

        self._states = grow(self._states, (sp.state_dim,))
        self._actions = grow(self._actions, (sp.joint_action_dim,))
        self._rewards = grow(self._rewards, (sp.n_agents,))
        self._next = grow(self._next, (sp.state_dim,))
        for i, (intents, scen) in self._extras.items():
            self._extras[i] = [grow(intents, intents.shape[1:]),
                               grow(scen, (), np.int64)]
        self._alloc = new

    def push(self, tr):
        sp = self.spec
        if len(tr.actions) != sp.n_agents or len(tr.rewards) != sp.n_agents:
            raise DimensionError("transition does not match the game spec")
        rewards = np.asarray(tr.rewards, dtype=np.float64)
        if not np.all(np.isfinite(rewards)):
            raise NumericalError("non-finite reward in transition")
        if self._head >= self._alloc:
            self._grow(self._head + 1)
        j = self._head
        self._states[j] = tr.state
        self._actions[j] = np.concatenate([np.asarray(a, dtype=np.float64).ravel()
                                           for a in tr.actions])
        self._rewards[j] = rewards
        self._next[j] = tr.next_state
        for i, (intents, scen) in tr.extras.items():
            if i not in self._extras:
                intents = np.asarray(intents)
                self._extras[i] = [np.zeros((self._alloc,) + intents.shape),
                                   np.zeros(self._alloc, dtype=np.int64)]
            self._extras[i][0][j] = intents
            self._extras[i][1][j] = scen
        self._head = (self._head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _order(self):
        """Physical indices of stored entries, oldest first."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.size) + self._head) % self.capacity

    def _gather(self, idx):
        extras = {i: (v[0][idx], v[1][idx]) for i, v in self._extras.items()}
        return Batch(self._states[idx], self._actions[idx], self._rewards[idx],
                     self._next[idx], extras, self._slices)

    def sample(self, batch_size, rng):
        """Uniform sampling with replacement."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        if self.size == self.capacity:
            idx = (idx + self._head) % self.capacity
        return self._gather(idx)

    def all(self):
        return self._gather(self._order())

    def states(self):
        return self._states[self._order()]

    def transitions(self):
        """Stored transitions as objects, oldest first."""
        b = self.all()
        out = []
        for r in range(len(b)):
            extras = {i: (v[0][r], int(v[1][r])) for i, v in b.extras.items()}
            out.append(JointTransition(b.states[r], [b.actions[r, s] for s in b.slices],
                                       b.rewards[r], b.next_states[r], extras))
        return out

    def to_arrays(self):
        b = self.all()
        out = {"states": b.states, "actions": b.actions, "rewards": b.rewards,
               "next_states": b.next_states}
        for i, (intents, scen) in b.extras.items():
            out[f"intents_{i}"] = intents
            out[f"scenarios_{i}"] = scen
        return out

    def load_arrays(self, arrays):
        n = arrays["states"].shape[0]
        self._alloc = 0
        self._states = self._actions = self._rewards = self._next = None
        self._extras = {}
        self._head = 0
        self.size = 0
        self._grow(max(n, 1))
        self._states[:n] = arrays["states"]
        self._actions[:n] = arrays["actions"]
        self._rewards[:n] = arrays["rewards"]
        self._next[:n] = arrays["next_states"]
        for key in arrays:
            if key.startswith("intents_"):
                i = int(key.split("_")[1])
                intents = arrays[key]
                self._extras[i] = [np.zeros((self._alloc,) + intents.shape[1:]),
                                   np.zeros(self._alloc, dtype=np.int64)]
                self._extras[i][0][:n] = intents
                self._extras[i][1][:n] = arrays[f"scenarios_{i}"]
        self.size = n
        self._head = n % self.capacity


@dataclass
class EpisodeLog:
    episode: int
    raw: np.ndarray
    shaped: np.ndarray
    wall_ms: float = 0.0


@dataclass
class Schedule:
    steps_per_episode: int = 100
    batch_size: int = 100
    exploration_episodes: int = 10
    tau: float = 0.01


def train_step(agents, buffer, batch_size, spec, rng, tau):
    """One synchronized update: every critic, then every actor, then targets.

    Returns per-agent diagnostics, or ``None`` when the buffer is too small.
    """
    if len(buffer) < batch_size:
        log.info("replay holds %d < %d transitions; update skipped",
                 len(buffer), batch_size)
        return None
    batch = buffer.sample(batch_size, rng)
    next_actions = [ag.target_actions(batch.next_states) for ag in agents]
    shaped = shape_all(batch.rewards, spec.alpha)
    stats = []
    for i, ag in enumerate(agents):
        crit = ag.update_critic(batch, next_actions, shaped[:, i], spec)
        obj = ag.update_actor(batch)
        stats.append((crit, obj))
    for ag in agents:
        ag.sync_targets(tau)
    return stats


class Simulation:
    """One run context: environment, agents, replay and the master RNG."""

    def __init__(self, env, agents, spec, schedule, buffer, rng, refit_every=10):
        if len(agents) != spec.n_agents or env.n_agents != spec.n_agents:
            raise ConfigError("agent count does not match the environment")
        self.env = env
        self.agents = agents
        self.spec = spec
        self.schedule = schedule
        self.buffer = buffer
        self.rng = rng
        self.refit_every = refit_every
        self.episode = 0
        self.trace = None           # set to a list to record executed actions
        self.on_update = None       # callback(sim, stats) after each train_step

    def run_episode(self, steps=None, explore=True):
        """Play one episode, pushing transitions and training after exploration."""
        steps = self.schedule.steps_per_episode if steps is None else steps
        t0 = time.perf_counter()
        n = self.spec.n_agents
        raw = np.zeros(n)
        shaped = np.zeros(n)
        state = self.env.reset(int(self.rng.integers(2**63 - 1)))
        learn = self.episode >= self.schedule.exploration_episodes
        for _ in range(steps):
            actions, extras = [], {}
            for i, ag in enumerate(self.agents):
                a, extra = ag.decide(state, explore, self.rng)
                actions.append(a)
                if extra is not None:
                    extras[i] = extra
            if self.trace is not None:
                self.trace.append(np.concatenate(actions))
            next_state, rewards = self.env.step(actions)
            rewards = np.asarray(rewards, dtype=np.float64)
            raw += rewards
            shaped += shape_all(rewards, self.spec.alpha)
            self.buffer.push(JointTransition(state, actions, rewards, next_state, extras))
            state = next_state
            if learn:
                stats = train_step(self.agents, self.buffer, self.schedule.batch_size,
                                   self.spec, self.rng, self.schedule.tau)
                if stats is not None and self.on_update is not None:
                    self.on_update(self, stats)
        for ag in self.agents:
            ag.end_episode(self)
        entry = EpisodeLog(self.episode, raw, shaped,
                           (time.perf_counter() - t0) * 1000.0)
        self.episode += 1
        return entry

    def should_refit(self):
        return self.refit_every > 0 and (self.episode + 1) % self.refit_every == 0


def run_episode(sim, steps=None, explore=True):
    return sim.run_episode(steps, explore)


def summarize(logs, exploration_episodes):
    """Mean and population std of accumulative raw rewards after exploration."""
    rows = [l.raw for l in logs if l.episode >= exploration_episodes]
    if not rows:
        return None
    arr = np.vstack(rows)
    return arr.mean(axis=0), arr.std(axis=0)


def check_finite(value, what):
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {what}: {value}")
    return value
