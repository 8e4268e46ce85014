"""Run checkpoints: a JSON document plus an ``.npz`` sidecar for the replay buffer."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import CheckpointError, ConfigError
from .marl import EpisodeLog

CHECKPOINT_FORMAT = "cftmarl-checkpoint"
CHECKPOINT_VERSION = 1


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.stem + ".buffer.npz")


def save_checkpoint(path, config, sim, logs):
    path = Path(path)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "episode": sim.episode,
        "rng_state": sim.rng.bit_generator.state,
        "agents": [ag.to_dict() for ag in sim.agents],
        "logs": [{"episode": l.episode, "raw": l.raw.tolist(),
                  "shaped": l.shaped.tolist(), "wall_ms": l.wall_ms} for l in logs],
        "buffer_file": _sidecar(path).name,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(_sidecar(path), **sim.buffer.to_arrays())
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    tmp.replace(path)


def read_checkpoint(path):
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt or truncated checkpoint ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {doc.get('version')!r} is not the supported "
            f"version {CHECKPOINT_VERSION}")
    return doc


def load_checkpoint(path, build_simulation):
    """Rebuild ``(config, simulation, logs)`` from a checkpoint file."""
    path = Path(path)
    doc = read_checkpoint(path)
    try:
        config = RunConfig.from_dict(doc["config"])
        sim = build_simulation(config)
        if len(doc["agents"]) != len(sim.agents):
            raise CheckpointError("agent count in checkpoint does not match its config")
        for ag, d in zip(sim.agents, doc["agents"]):
            ag.load_dict(d)
        sim.rng.bit_generator.state = doc["rng_state"]
        sim.episode = int(doc["episode"])
        logs = [EpisodeLog(int(l["episode"]), np.asarray(l["raw"], dtype=np.float64),
                           np.asarray(l["shaped"], dtype=np.float64), float(l["wall_ms"]))
                for l in doc["logs"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (CheckpointError, ConfigError)):
            raise
        raise CheckpointError(f"{path}: malformed checkpoint ({exc!r})") from exc
    sidecar = path.with_name(doc["buffer_file"])
    try:
        with np.load(sidecar) as data:
            sim.buffer.load_arrays({k: data[k] for k in data.files})
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"cannot restore replay buffer from {sidecar}: {exc}") from exc
    return config, sim, logs
