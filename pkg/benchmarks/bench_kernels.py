"""Compare the numba kernels against the pure-numpy reference path.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--episodes 3]

Kernel timings call both implementations in-process. The episode timing runs
a short training segment twice in subprocesses, once with the default backend
and once with CFTMARL_NO_NUMBA=1.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cftmarl import _kernels as K

EPISODE_SNIPPET = """
import time
from cftmarl import BACKEND
from cftmarl.config import RunConfig
from cftmarl.runner import build_simulation
cfg = RunConfig(agents=["cft", "ddpg"], exploration_episodes=0, refit_every=0,
                output_dir="unused")
sim = build_simulation(cfg)
sim.run_episode()
t = time.perf_counter()
for _ in range({episodes}):
    sim.run_episode()
print(BACKEND, (time.perf_counter() - t) * 1000.0 / {episodes})
"""


def cases(rng):
    x = rng.normal(size=(100, 208))
    W = rng.normal(size=(64, 208))
    b = rng.normal(size=64)
    y = K.dense_forward(x, W, b, K.ACT_RELU)
    gy = rng.normal(size=y.shape)
    X = rng.normal(size=(5000, 204))
    C = rng.normal(size=(16, 204))
    P = rng.random((2, 2))
    T = rng.random((50, 2))
    return {
        "dense_forward": (x, W, b, K.ACT_RELU),
        "dense_backward": (x, W, y, gy, K.ACT_RELU, True),
        "assign_nearest": (X, C),
        "nearest_within": (P, T, 0.03),
        "flee": (T, P, 0.025),
    }


def time_call(fn, args, repeat):
    fn(*args)  # compile / warm caches
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)) * 1e6


def episode_ms(no_numba, episodes):
    env = dict(os.environ)
    if no_numba:
        env["CFTMARL_NO_NUMBA"] = "1"
    else:
        env.pop("CFTMARL_NO_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", EPISODE_SNIPPET.format(episodes=episodes)],
                         env=env, capture_output=True, text=True, check=True)
    backend, ms = out.stdout.split()
    return backend, float(ms)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--episodes", type=int, default=3)
    args = ap.parse_args()

    print(f"active backend: {K.BACKEND}")
    print(f"{'kernel':<16}{'active us':>12}{'numpy us':>12}{'speedup':>10}")
    for name, a in cases(np.random.default_rng(0)).items():
        fast = time_call(getattr(K, name), a, args.repeat)
        ref = time_call(K.NUMPY_KERNELS[name], a, args.repeat)
        print(f"{name:<16}{fast:>12.1f}{ref:>12.1f}{ref / fast:>9.2f}x")

    print()
    for flag in (False, True):
        backend, ms = episode_ms(flag, args.episodes)
        print(f"training episode ({backend}): {ms:.1f} ms")


if __name__ == "__main__":
    main()
