import json

import numpy as np
import pytest

import cftmarl.ddpg as ddpg_mod
from cftmarl.ddpg import DdpgAgent
from cftmarl.errors import DimensionError
from cftmarl.marl import Batch, GameSpec
from cftmarl.neural import AdamState, Layer, Mlp, ParamTensor

from conftest import central_diff, make_batch, rel_error


def linear(weights, bias=0.0):
    w = np.asarray(weights, dtype=np.float64)[None, :]
    return Mlp([Layer(ParamTensor(w), ParamTensor([bias]), "identity")])


def zero_actor(agent):
    for p in agent.actor.params():
        p.values[...] = 0.0
    agent.actor.touch()


# -- act --------------------------------------------------------------------

def test_zero_actor_gives_zero_action(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(4,))
    zero_actor(ag)
    assert np.array_equal(ag.act(np.ones(3), False, rng), np.zeros(2))


def test_act_without_noise_is_deterministic(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(4,))
    s = rng.normal(size=3)
    assert np.array_equal(ag.act(s, False, rng), ag.act(s, False, rng))


def test_zero_sigma_equals_no_exploration(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(4,), noise_sigma=0.0)
    s = rng.normal(size=3)
    assert np.array_equal(ag.act(s, True, rng), ag.act(s, False, rng))


def test_noisy_actions_stay_in_box(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(4,), noise_sigma=5.0)
    for _ in range(200):
        a = ag.act(rng.normal(size=3) * 10, True, rng)
        assert np.all(np.abs(a) <= 1.0)


def test_act_rejects_wrong_state(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(4,))
    with pytest.raises(DimensionError):
        ag.act(np.ones(4), False, rng)


def test_noise_decays_per_episode(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, noise_sigma=0.2, noise_decay=0.5)
    ag.end_episode(None)
    assert ag.noise_sigma == pytest.approx(0.1)


def test_network_shapes(small_spec, rng):
    ag = DdpgAgent(1, small_spec, rng, hidden=(5, 4))
    assert ag.critic.input_dim == 3 + 3
    assert ag.actor.output_dim == 1


# -- critic -----------------------------------------------------------------

def scalar_spec():
    return GameSpec(n_agents=2, state_dim=1, action_dims=(1, 1), gamma=0.9, alpha=0.5)


def test_critic_hand_value(rng):
    spec = scalar_spec()
    ag = DdpgAgent(0, spec, rng, hidden=(3,), critic_lr=0.0)
    ag.critic = linear([1.0, 2.0, -1.0], 0.5)
    ag.critic_target = linear([0.5, 1.0, 1.0], 0.0)
    ag.critic_opt = AdamState.for_params(ag.critic.params())
    s, a1, a2, s2 = 0.3, 0.2, -0.4, 0.7
    n1, n2 = 0.1, 0.6
    shaped = 1.5
    batch = Batch(np.array([[s]]), np.array([[a1, a2]]), np.array([[0.0, 0.0]]),
                  np.array([[s2]]), {}, spec.action_slices())
    loss = ag.update_critic(batch, [np.array([[n1]]), np.array([[n2]])],
                            np.array([shaped]), spec)
    q = 1.0 * s + 2.0 * a1 - 1.0 * a2 + 0.5
    q_next = 0.5 * s2 + 1.0 * n1 + 1.0 * n2
    assert loss == pytest.approx((q - (0.9 * q_next + shaped)) ** 2, abs=1e-12)


def test_critic_fixed_point_leaves_params(rng):
    spec = scalar_spec()
    ag = DdpgAgent(0, spec, rng, hidden=(3,))
    ag.critic = Mlp.zeros([3, 4, 1], "relu", "identity")
    ag.critic_target = ag.critic.copy()
    ag.critic_opt = AdamState.for_params(ag.critic.params())
    batch = make_batch(spec, 6, rng)
    loss = ag.update_critic(batch, [np.zeros((6, 1))] * 2, np.zeros(6), spec)
    assert loss == 0.0
    assert all(not np.any(p.values) for p in ag.critic.params())


def test_critic_loss_trends_down(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(8, 8))
    batch = make_batch(small_spec, 16, rng)
    nxt = [rng.uniform(-1, 1, size=(16, 2)), rng.uniform(-1, 1, size=(16, 1))]
    shaped = rng.normal(size=16)
    losses = [ag.update_critic(batch, nxt, shaped, small_spec) for _ in range(50)]
    assert losses[-1] < losses[0]


def test_critic_other_action_permutation(rng):
    spec = GameSpec(3, 2, (1, 1, 1))
    ag = DdpgAgent(0, spec, rng, hidden=(4,))
    s = rng.normal(size=(5, 2))
    a = rng.uniform(-1, 1, size=(5, 3))
    swapped = a[:, [0, 2, 1]]
    q1, q2 = ag.q_values(s, a), ag.q_values(s, swapped)
    assert q1.shape == q2.shape == (5,)
    assert not np.allclose(q1, q2)


# -- actor ------------------------------------------------------------------

def test_zero_actor_lr_leaves_params(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(4,), actor_lr=0.0)
    before = [p.values.copy() for p in ag.actor.params()]
    ag.update_actor(make_batch(small_spec, 8, rng))
    assert all(np.array_equal(b, p.values) for b, p in zip(before, ag.actor.params()))


def test_actor_follows_increasing_critic(rng):
    spec = GameSpec(1, 2, (1,), alpha=0.0)
    ag = DdpgAgent(0, spec, rng, hidden=(4,), actor_lr=1e-2)
    ag.critic = linear([0.0, 0.0, 1.0])
    batch = make_batch(spec, 20, rng)
    before = ag.actor(batch.states).mean()
    ag.update_actor(batch)
    assert ag.actor(batch.states).mean() > before


def test_actor_gradient_matches_finite_differences(small_spec, rng, monkeypatch):
    ag = DdpgAgent(0, small_spec, rng, hidden=(6, 5))
    batch = make_batch(small_spec, 7, rng)
    grads = []

    def capture(net, state, lr):
        grads.append([p.grads.copy() for p in net.params()])
        net.zero_grad()
    monkeypatch.setattr(ddpg_mod, "optimize", capture)
    ag.update_actor(batch)

    def mean_q():
        joint = batch.actions.copy()
        joint[:, batch.slices[0]] = ag.actor(batch.states)
        return float(ag.q_values(batch.states, joint).mean())
    worst = 0.0
    for p, g in zip(ag.actor.params(), grads[0]):
        # update_actor descends on -Q, so its gradient is -dQ/dtheta
        worst = max(worst, rel_error(-g, central_diff(mean_q, p.values)))
    assert worst < 1e-4


def test_actor_objective_is_pre_step_mean_q(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(4,))
    batch = make_batch(small_spec, 5, rng)
    joint = batch.actions.copy()
    joint[:, batch.slices[0]] = ag.actor(batch.states)
    expected = ag.q_values(batch.states, joint).mean()
    assert ag.update_actor(batch) == pytest.approx(expected, abs=1e-12)


# -- targets ----------------------------------------------------------------

def test_sync_targets_extremes(small_spec, rng):
    ag = DdpgAgent(0, small_spec, rng, hidden=(4,))
    for p in ag.actor.params() + ag.critic.params():
        p.values += 1.0
    old = [p.values.copy() for p in ag.actor_target.params()]
    ag.sync_targets(0.0)
    assert all(np.array_equal(o, p.values) for o, p in zip(old, ag.actor_target.params()))
    ag.sync_targets(1.0)
    for a, b in ((ag.actor, ag.actor_target), (ag.critic, ag.critic_target)):
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a.params(), b.params()))


def test_sync_targets_one_percent(rng):
    spec = GameSpec(1, 1, (1,), alpha=0.0)
    ag = DdpgAgent(0, spec, rng, hidden=(2,))
    ag.actor = linear([1.0])
    ag.actor_target = linear([0.0])
    ag.critic = linear([2.0, 2.0])
    ag.critic_target = linear([0.0, 0.0])
    ag.sync_targets(0.01)
    assert ag.actor_target.layers[0].weight.values[0, 0] == pytest.approx(0.01, abs=1e-15)
    assert ag.critic_target.layers[0].weight.values[0, 0] == pytest.approx(0.02, abs=1e-15)


# -- persistence ------------------------------------------------------------

def test_agent_round_trip(small_spec, rng):
    ag = DdpgAgent(1, small_spec, rng, hidden=(4,))
    ag.update_actor(make_batch(small_spec, 4, rng))
    other = DdpgAgent(1, small_spec, np.random.default_rng(0), hidden=(4,))
    other.load_dict(json.loads(json.dumps(ag.to_dict())))
    s = rng.normal(size=3)
    assert np.array_equal(ag.act(s, False, rng), other.act(s, False, rng))
    assert other.actor_opt.t == ag.actor_opt.t
