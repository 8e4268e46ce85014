"""Experiment runner: builds a run context from a config and writes its outputs.

Files written into the output directory:

* ``rewards.csv``  one row per episode with raw and shaped accumulative rewards
* ``timing.csv``   wall-clock milliseconds per episode
* ``summary.json`` mean and std of raw rewards over post-exploration episodes
* ``checkpoint.json`` (+ ``checkpoint.buffer.npz``) final run state
"""

from __future__ import annotations

import gc
import json
import logging
import os
import time
from pathlib import Path

import numpy as np

from .cft import CftAgent
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .ddpg import DdpgAgent
from .envs import MarketWorld, PursuitWorld, fit_demand_model, load_price_volume_csv
from .errors import ConfigError
from .marl import GameSpec, ReplayBuffer, Schedule, Simulation

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "CFTMARL_OUTPUT_ROOT"


def output_dir(config):
    out = Path(config.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def make_env(config):
    opts = dict(config.env_options)
    try:
        if config.env == "pursuit":
            return PursuitWorld(n_pursuers=config.n_agents, **opts)
        if config.calibration_csv:
            fit = fit_demand_model(*load_price_volume_csv(config.calibration_csv))
            if len(fit.intercepts) != config.n_agents:
                raise ConfigError(f"calibration data has {len(fit.intercepts)} sellers, "
                                  f"config has {config.n_agents} agents")
            return MarketWorld.from_fit(fit, **opts)
        return MarketWorld(n_sellers=config.n_agents, **opts)
    except TypeError as exc:
        raise ConfigError(f"bad env_options: {exc}") from exc


def make_agents(config, spec, rng):
    agents = []
    for i, kind in enumerate(config.agents):
        common = dict(hidden=tuple(config.hidden), actor_lr=config.actor_lr,
                      critic_lr=config.critic_lr)
        if kind == "ddpg":
            agents.append(DdpgAgent(i, spec, rng, noise_sigma=config.noise_sigma,
                                    noise_decay=config.noise_decay, **common))
        else:
            agents.append(CftAgent(i, spec, rng, K=config.intents, L=config.L,
                                   epsilon=config.epsilon, lam=config.lam,
                                   temperature=config.temperature,
                                   mixture_weights=config.mixture_weights,
                                   noise_sigma=config.noise_sigma,
                                   noise_decay=config.noise_decay, **common))
    return agents


def build_simulation(config):
    env = make_env(config)
    spec = GameSpec(env.n_agents, env.state_dim, env.action_dims, config.gamma,
                    config.alpha)
    rng = np.random.default_rng(config.seed)
    agents = make_agents(config, spec, rng)
    schedule = Schedule(config.steps_per_episode, config.batch_size,
                        config.exploration_episodes, config.tau)
    buffer = ReplayBuffer(config.buffer_capacity, spec)
    return Simulation(env, agents, spec, schedule, buffer, rng, config.refit_every)


def _fmt(x):
    return repr(float(x))


def rewards_header(n):
    return (["episode"] + [f"raw_{i}" for i in range(n)]
            + [f"shaped_{i}" for i in range(n)])


def rewards_row(entry):
    return ",".join([str(entry.episode)] + [_fmt(x) for x in entry.raw]
                    + [_fmt(x) for x in entry.shaped])


def summary_dict(config, logs):
    post = [l for l in logs if l.episode >= config.exploration_episodes]
    agents = []
    for i, kind in enumerate(config.agents):
        vals = np.array([l.raw[i] for l in post])
        shaped = np.array([l.shaped[i] for l in post])
        agents.append({
            "slot": i, "kind": kind,
            "mean": float(vals.mean()) if vals.size else None,
            "std": float(vals.std()) if vals.size else None,
            "shaped_mean": float(shaped.mean()) if shaped.size else None,
        })
    return {"env": config.env, "seed": config.seed, "episodes": len(logs),
            "post_exploration_episodes": len(post), "agents": agents}


class RunWriter:
    """Streams per-episode rows so a failed run keeps its partial CSV."""

    def __init__(self, out, n_agents, logs=()):
        out.mkdir(parents=True, exist_ok=True)
        self.out = out
        self._rewards = open(out / "rewards.csv", "w", newline="")
        self._timing = open(out / "timing.csv", "w", newline="")
        self._rewards.write(",".join(rewards_header(n_agents)) + "\n")
        self._timing.write("episode,wall_ms\n")
        for entry in logs:
            self.write(entry)

    def write(self, entry):
        self._rewards.write(rewards_row(entry) + "\n")
        self._timing.write(f"{entry.episode},{entry.wall_ms:.3f}\n")
        self._rewards.flush()
        self._timing.flush()

    def close(self):
        self._rewards.close()
        self._timing.close()


def execute(config, sim=None, logs=None, episodes=None, progress=None):
    """Run (or continue) training to ``episodes`` total; returns the episode logs."""
    sim = build_simulation(config) if sim is None else sim
    logs = [] if logs is None else list(logs)
    episodes = config.episodes if episodes is None else episodes
    out = output_dir(config)
    writer = RunWriter(out, sim.spec.n_agents, logs)
    try:
        while sim.episode < episodes:
            entry = sim.run_episode()
            logs.append(entry)
            writer.write(entry)
            if progress is not None:
                progress(entry)
            if config.checkpoint_every and sim.episode % config.checkpoint_every == 0 \
                    and sim.episode < episodes:
                save_checkpoint(out / f"checkpoint_{sim.episode:05d}.json",
                                config, sim, logs)
    finally:
        writer.close()
    with open(out / "summary.json", "w") as fh:
        json.dump(summary_dict(config, logs), fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_checkpoint(out / "checkpoint.json", config, sim, logs)
    return logs


def run(config, progress=None):
    return execute(config, progress=progress)


def resume(path, episodes=None, progress=None):
    """Continue a run from a checkpoint, rewriting its output files."""
    config, sim, logs = load_checkpoint(path, build_simulation)
    if episodes is not None:
        config = config.replace(episodes=episodes)
    return execute(config, sim, logs, config.episodes, progress)


def bench(config, sweep, values, episodes=3, warmup=1):
    """Mean wall-clock per training episode at each sweep point.

    ``sweep`` is ``"K"`` (intent count of every CFT slot) or ``"agents"``
    (number of slots, all of the first slot's kind). Exploration is disabled
    so every timed episode includes updates; ``warmup`` episodes fill the
    replay buffer untimed. Timed episodes are interleaved round-robin across
    sweep points so slow drift in machine load affects all points alike, and,
    as with ``timeit``, the garbage collector is paused while timing.
    """
    if sweep not in ("K", "agents"):
        raise ConfigError(f"unknown sweep {sweep!r}")
    if not values:
        raise ConfigError("empty sweep")
    sims = []
    for v in values:
        if sweep == "K":
            cfg = config.replace(K=int(v), exploration_episodes=0, refit_every=0)
        else:
            if int(v) < 2:
                raise ConfigError("agent sweep values must be >= 2")
            cfg = config.replace(agents=[config.agents[0]] * int(v),
                                 exploration_episodes=0, refit_every=0)
        sims.append(build_simulation(cfg))
    for sim in sims:
        for _ in range(warmup):
            sim.run_episode()
    totals = [0.0] * len(sims)
    gc.collect()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(episodes):
            for i, sim in enumerate(sims):
                t0 = time.perf_counter()
                sim.run_episode()
                totals[i] += time.perf_counter() - t0
    finally:
        if was_enabled:
            gc.enable()
    rows = []
    for v, total in zip(values, totals):
        ms = total * 1000.0 / episodes if episodes else 0.0
        log.info("bench %s=%s: %.1f ms/episode", sweep, v, ms)
        rows.append((sweep, int(v), ms))
    return rows


def write_bench(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("sweep,value,mean_wall_ms\n")
        for sweep, v, ms in rows:
            fh.write(f"{sweep},{v},{ms:.3f}\n")
