import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cftmarl.envs import (MarketWorld, PursuitWorld, fit_demand_model,
                          load_price_volume_csv)
from cftmarl.errors import ConfigError, DataError, DimensionError


# -- pursuit ----------------------------------------------------------------

def placed_world(pursuers, evaders=(), poisons=(), **kw):
    w = PursuitWorld(n_pursuers=len(pursuers), n_evaders=len(evaders),
                     n_poisons=len(poisons), **kw)
    w.pursuers = np.array(pursuers, dtype=np.float64).reshape(-1, 2)
    w.evaders = np.array(evaders, dtype=np.float64).reshape(-1, 2)
    w.poisons = np.array(poisons, dtype=np.float64).reshape(-1, 2)
    return w


def test_capture_pays_ten():
    w = placed_world([[0.5, 0.5], [0.1, 0.1]], evaders=[[0.501, 0.5]], capture_radius=0.05)
    _, r = w.step(np.zeros((2, 2)))
    assert r.tolist() == [10.0, 0.0]


def test_poison_costs_one():
    w = placed_world([[0.5, 0.5]], poisons=[[0.5, 0.5]])
    _, r = w.step(np.zeros((1, 2)))
    assert r.tolist() == [-1.0]


def test_null_step():
    w = placed_world([[0.2, 0.3], [0.7, 0.9]])
    start = w.pursuers.copy()
    _, r = w.step(np.zeros((2, 2)))
    assert r.tolist() == [0.0, 0.0]
    assert np.array_equal(w.pursuers, start)


def test_capture_goes_to_nearest_pursuer():
    w = placed_world([[0.50, 0.5], [0.52, 0.5]], evaders=[[0.515, 0.5]])
    _, r = w.step(np.zeros((2, 2)))
    assert r.tolist() == [0.0, 10.0]


def test_pursuer_moves_by_speed():
    w = placed_world([[0.5, 0.5]])
    w.step(np.array([[1.0, -0.5]]))
    np.testing.assert_allclose(w.pursuers[0], [0.55, 0.475], atol=1e-15)


def test_evader_flees_at_half_speed():
    w = placed_world([[0.5, 0.5]], evaders=[[0.7, 0.5]])
    w.step(np.zeros((1, 2)))
    np.testing.assert_allclose(w.evaders[0], [0.725, 0.5], atol=1e-15)


def test_state_layout():
    w = placed_world([[0.1, 0.2]], evaders=[[0.3, 0.4]], poisons=[[0.5, 0.6]])
    assert w.state().tolist() == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    assert PursuitWorld().state_dim == 204


def test_wrong_action_count():
    with pytest.raises(DimensionError):
        PursuitWorld().step(np.zeros((3, 2)))


def test_invalid_radius():
    with pytest.raises(ConfigError):
        PursuitWorld(capture_radius=0.0)


def test_reset_determinism_and_bounds():
    a, b = PursuitWorld().reset(7), PursuitWorld().reset(7)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, PursuitWorld().reset(8))
    assert np.all((a >= 0) & (a <= 1))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 100))
def test_pursuit_invariants(seed, scale):
    rng = np.random.default_rng(seed)
    w = PursuitWorld(n_evaders=20, n_poisons=20, capture_radius=0.08, poison_radius=0.08,
                     seed=seed)
    for _ in range(30):
        before_e = w.evaders.copy()
        before_p = w.poisons.copy()
        before_q = w.pursuers.copy()
        s, r = w.step(rng.normal(size=(2, 2)) * scale)
        assert np.all((s >= 0) & (s <= 1))
        assert w.evaders.shape == (20, 2) and w.poisons.shape == (20, 2)
        # reward is +10 per captured evader and -1 per touched poison
        moved = np.clip(before_q + np.clip(w.velocities / w.max_speed, -1, 1) * w.max_speed,
                        0, 1)
        d_e = np.linalg.norm(before_e[:, None] - moved[None], axis=2)
        d_p = np.linalg.norm(before_p[:, None] - moved[None], axis=2)
        captures = (d_e.min(axis=1) <= w.capture_radius).sum()
        touches = (d_p.min(axis=1) <= w.poison_radius).sum()
        assert r.sum() == pytest.approx(10.0 * captures - 1.0 * touches, abs=1e-12)


def test_pursuit_replay_deterministic():
    acts = np.random.default_rng(0).uniform(-1, 1, size=(25, 2, 2))
    out = []
    for _ in range(2):
        w = PursuitWorld(seed=3)
        out.append(np.array([w.step(a)[0] for a in acts]))
    assert np.array_equal(out[0], out[1])


# -- market -----------------------------------------------------------------

def test_symmetric_sellers_equal_revenue():
    w = MarketWorld(3, [10, 10, 10], [1, 1, 1], [0.5, 0.5, 0.5], noise_sigma=0.0)
    v, r = w.step(np.zeros((3, 1)))
    assert len(set(v.tolist())) == 1 and len(set(r.tolist())) == 1


def test_choke_price():
    w = MarketWorld(2, [10, 10], [2, 2], [0, 0], noise_sigma=0.0)
    assert w.volumes(np.array([5.0, 5.0])).tolist() == [0.0, 0.0]


def test_volume_hand_value():
    w = MarketWorld(3, [10, 10, 10], [1, 1, 1], [0.5, 0.5, 0.5], noise_sigma=0.0)
    v = w.volumes(np.array([2.0, 3.0, 5.0]))
    assert v[0] == 10.0 and 2.0 * v[0] == 20.0


def test_price_mapping():
    w = MarketWorld(2, noise_sigma=0.0)
    np.testing.assert_allclose(w.prices([[-1.0], [1.0]]), [1.0, 10.0])
    np.testing.assert_allclose(w.prices([[0.0], [5.0]]), [5.5, 10.0])


def test_market_config_checks():
    with pytest.raises(ConfigError):
        MarketWorld(2, slopes=[1.0, 0.0])
    with pytest.raises(ConfigError):
        MarketWorld(2, intercepts=[1.0])


@settings(max_examples=100)
@given(p=st.lists(st.floats(1, 10), min_size=3, max_size=3), dp=st.floats(0, 5))
def test_market_monotonicity(p, dp):
    w = MarketWorld(3, noise_sigma=0.0)
    p = np.asarray(p)
    base = w.volumes(p)
    own = p.copy()
    own[0] += dp
    assert w.volumes(own)[0] <= base[0]
    rival = p.copy()
    rival[1] += dp
    assert w.volumes(rival)[0] >= base[0]


def test_revenue_is_price_times_volume():
    w = MarketWorld(4, seed=2)
    acts = np.array([[-0.5], [0.0], [0.3], [0.9]])
    v, r = w.step(acts)
    assert np.array_equal(r, w.prices(acts) * v)


def test_market_determinism():
    runs = []
    for _ in range(2):
        w = MarketWorld(3, seed=11)
        runs.append([w.step(np.full((3, 1), 0.1 * t))[1] for t in range(5)])
    assert np.array_equal(runs[0], runs[1])


# -- demand fit -------------------------------------------------------------

def synthetic(T, n, b, a, c, rng):
    P = rng.uniform(1, 10, size=(T, n))
    rivals = (P.sum(axis=1, keepdims=True) - P) / (n - 1)
    return P, b - a * P + c * rivals


def test_fit_recovers_parameters(rng):
    P, V = synthetic(40, 3, 10.0, 1.0, 0.5, rng)
    fit = fit_demand_model(P, V)
    np.testing.assert_allclose(fit.intercepts, 10.0, atol=1e-6)
    np.testing.assert_allclose(fit.slopes, 1.0, atol=1e-6)
    np.testing.assert_allclose(fit.cross, 0.5, atol=1e-6)
    assert np.all(fit.rmse < 1e-9)


def test_fit_flat_response(rng):
    P = rng.uniform(1, 10, size=(20, 2))
    fit = fit_demand_model(P, np.full((20, 2), 4.0))
    np.testing.assert_allclose(fit.slopes, 0.0, atol=1e-9)
    np.testing.assert_allclose(fit.cross, 0.0, atol=1e-9)
    np.testing.assert_allclose(fit.intercepts, 4.0, atol=1e-9)


def test_fit_rejects_two_rows(rng):
    with pytest.raises(DataError):
        fit_demand_model(rng.uniform(size=(2, 2)), rng.uniform(size=(2, 2)))


def test_fit_rejects_constant_prices():
    with pytest.raises(DataError, match="degenerate"):
        fit_demand_model(np.full((10, 2), 3.0), np.ones((10, 2)))


def test_csv_loader(tmp_path, rng):
    P, V = synthetic(6, 2, 9.0, 1.0, 0.25, rng)
    path = tmp_path / "pv.csv"
    lines = ["p_1,p_2,v_1,v_2"] + [",".join(repr(float(x)) for x in list(p) + list(v)) for p, v in zip(P, V)]
    path.write_text("\n".join(lines) + "\n")
    P2, V2 = load_price_volume_csv(path)
    assert np.array_equal(P, P2) and np.array_equal(V, V2)


def test_csv_loader_names_bad_line(tmp_path):
    path = tmp_path / "pv.csv"
    path.write_text("p_1,p_2,v_1,v_2\n1,2,3,4\n1,2,3\n")
    with pytest.raises(DataError, match="line 3"):
        load_price_volume_csv(path)


def test_csv_loader_bad_header(tmp_path):
    path = tmp_path / "pv.csv"
    path.write_text("price,volume\n1,2\n")
    with pytest.raises(DataError):
        load_price_volume_csv(path)
