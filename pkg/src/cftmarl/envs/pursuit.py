"""Simplified pursuit water-world.

Pursuers (the agents) move in the unit square, evaders flee the nearest
pursuer, poisons sit still. Capturing an evader pays +10, touching a poison
costs -1; both respawn uniformly at random.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels as K
from ..errors import ConfigError, DimensionError

CAPTURE_REWARD = 10.0
POISON_REWARD = -1.0


class PursuitWorld:
    action_dim = 2

    def __init__(self, n_pursuers=2, n_evaders=50, n_poisons=50, capture_radius=0.03,
                 poison_radius=0.03, max_speed=0.05, seed=0):
        if n_pursuers < 1 or n_evaders < 0 or n_poisons < 0:
            raise ConfigError("entity counts must be non-negative (pursuers >= 1)")
        if not (capture_radius > 0 and poison_radius > 0 and max_speed > 0):
            raise ConfigError("radii and max_speed must be positive")
        self.n_agents = n_pursuers
        self.n_evaders = n_evaders
        self.n_poisons = n_poisons
        self.capture_radius = capture_radius
        self.poison_radius = poison_radius
        self.max_speed = max_speed
        self.reset(seed)

    @property
    def state_dim(self):
        return 2 * (self.n_agents + self.n_evaders + self.n_poisons)

    @property
    def action_dims(self):
        return (2,) * self.n_agents

    def reset(self, seed):
        self.rng = np.random.default_rng(seed)
        self.pursuers = self.rng.random((self.n_agents, 2))
        self.velocities = np.zeros((self.n_agents, 2))
        self.evaders = self.rng.random((self.n_evaders, 2))
        self.poisons = self.rng.random((self.n_poisons, 2))
        return self.state()

    def state(self):
        return np.concatenate([self.pursuers.ravel(), self.evaders.ravel(),
                               self.poisons.ravel()])

    def step(self, actions):
        """Advance one tick; returns ``(next_state, rewards)``."""
        if len(actions) != self.n_agents:
            raise DimensionError(f"expected {self.n_agents} actions, got {len(actions)}")
        acts = np.asarray(actions, dtype=np.float64)
        if acts.shape != (self.n_agents, 2):
            raise DimensionError(f"actions must be ({self.n_agents}, 2), got {acts.shape}")
        acts = np.clip(acts, -1.0, 1.0)
        self.velocities = acts * self.max_speed
        self.pursuers = np.clip(self.pursuers + self.velocities, 0.0, 1.0)
        rewards = np.zeros(self.n_agents)

        hit = K.nearest_within(self.pursuers, self.evaders, self.capture_radius)
        caught = np.nonzero(hit >= 0)[0]
        np.add.at(rewards, hit[caught], CAPTURE_REWARD)
        self.evaders[caught] = self.rng.random((caught.size, 2))

        touch = K.nearest_within(self.pursuers, self.poisons, self.poison_radius)
        touched = np.nonzero(touch >= 0)[0]
        np.add.at(rewards, touch[touched], POISON_REWARD)
        self.poisons[touched] = self.rng.random((touched.size, 2))

        self.evaders = K.flee(self.evaders, self.pursuers, 0.5 * self.max_speed)
        return self.state(), rewards
