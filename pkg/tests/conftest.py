import numpy as np
import pytest

from cftmarl.marl import Batch, GameSpec


def central_diff(f, arr, h=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. every entry of ``arr`` (in place)."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        fp = f()
        flat[k] = old - h
        fm = f()
        flat[k] = old
        gf[k] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    a = np.ravel(a)
    b = np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def make_batch(spec, B, rng, extras=None):
    sl = spec.action_slices()
    return Batch(rng.normal(size=(B, spec.state_dim)),
                 rng.uniform(-1, 1, size=(B, spec.joint_action_dim)),
                 rng.normal(size=(B, spec.n_agents)),
                 rng.normal(size=(B, spec.state_dim)),
                 extras or {}, sl)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec():
    return GameSpec(n_agents=2, state_dim=3, action_dims=(2, 1), gamma=0.9, alpha=0.5)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
