"""Run configuration, loaded from JSON with strict key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

ENVS = ("pursuit", "market")
AGENT_KINDS = ("ddpg", "cft")
DEFAULT_K = {"pursuit": 4, "market": 6}

# JSON key -> attribute name, where they differ
_RENAMED = {"lambda": "lam"}


@dataclass
class RunConfig:
    env: str = "pursuit"
    agents: list = field(default_factory=lambda: ["cft", "ddpg"])
    episodes: int = 100
    steps_per_episode: int = 100
    exploration_episodes: int = 10
    batch_size: int = 100
    buffer_capacity: int = 50000
    seed: int = 0
    alpha: float = 0.5
    gamma: float = 0.95
    tau: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    noise_sigma: float = 0.2
    noise_decay: float = 0.999
    hidden: list = field(default_factory=lambda: [64, 64])
    K: int | None = None
    L: int = 16
    epsilon: float = 0.1
    lam: float = 0.5
    temperature: float = 0.5
    mixture_weights: str = "softmin"
    refit_every: int = 10
    checkpoint_every: int = 0
    output_dir: str = "runs/default"
    calibration_csv: str | None = None
    env_options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def n_agents(self):
        return len(self.agents)

    @property
    def intents(self):
        return DEFAULT_K[self.env] if self.K is None else self.K

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.env in ENVS, f"env must be one of {ENVS}, got {self.env!r}")
        need(isinstance(self.agents, list) and len(self.agents) >= 2,
             "need at least 2 agent slots")
        need(all(a in AGENT_KINDS for a in self.agents),
             f"agent kinds must be drawn from {AGENT_KINDS}")
        for name in ("episodes", "exploration_episodes", "seed", "checkpoint_every",
                     "refit_every"):
            need(isinstance(getattr(self, name), int) and getattr(self, name) >= 0,
                 f"{name} must be a non-negative integer")
        for name in ("steps_per_episode", "batch_size", "buffer_capacity", "L"):
            need(isinstance(getattr(self, name), int) and getattr(self, name) >= 1,
                 f"{name} must be a positive integer")
        need(self.K is None or (isinstance(self.K, int) and self.K >= 1),
             "K must be a positive integer")
        need(0.0 <= self.alpha < 1.0, "alpha must lie in [0, 1)")
        need(0.0 < self.gamma < 1.0, "gamma must lie in (0, 1)")
        need(0.0 <= self.tau <= 1.0, "tau must lie in [0, 1]")
        need(self.actor_lr >= 0 and self.critic_lr >= 0, "learning rates must be >= 0")
        need(self.noise_sigma >= 0 and 0 < self.noise_decay <= 1,
             "noise_sigma must be >= 0 and noise_decay in (0, 1]")
        need(0.0 <= self.epsilon <= 1.0, "epsilon must lie in [0, 1]")
        need(0.0 <= self.lam <= 1.0, "lambda must lie in [0, 1]")
        need(self.temperature > 0, "temperature must be positive")
        need(self.mixture_weights in ("softmin", "regret_weighted"),
             "mixture_weights must be 'softmin' or 'regret_weighted'")
        need(isinstance(self.hidden, list) and self.hidden
             and all(isinstance(h, int) and h >= 1 for h in self.hidden),
             "hidden must be a non-empty list of positive integers")
        need(isinstance(self.env_options, dict), "env_options must be an object")
        need(self.calibration_csv is None or self.env == "market",
             "calibration_csv only applies to the market environment")

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            attr = _RENAMED.get(key, key)
            if attr not in names or key in _RENAMED.values():
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[attr] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return RunConfig(**d)
