"""DDPG agent with a centralized critic over the global state and all actions."""

from __future__ import annotations

import numpy as np

from .errors import CheckpointError, DimensionError
from .marl import check_finite, td_target
from .neural import AdamState, Mlp, adam_step, gaussian_noise, soft_update


def optimize(net, state, lr):
    adam_step(net.params(), state, lr)
    net.touch()


def build_critic(spec, hidden, rng):
    sizes = [spec.state_dim + spec.joint_action_dim] + list(hidden) + [1]
    return Mlp.build(sizes, "relu", "identity", rng)


class CentralCritic:
    """Mixin holding the per-agent centralized critic and its TD update."""

    def _init_critic(self, spec, hidden, rng, critic_lr):
        self.critic = build_critic(spec, hidden, rng)
        self.critic_target = self.critic.copy()
        self.critic_opt = AdamState.for_params(self.critic.params())
        self.critic_lr = critic_lr

    def q_values(self, states, joint_actions, target=False):
        net = self.critic_target if target else self.critic
        return net(np.hstack([states, joint_actions]))[:, 0]

    def td_step(self, batch, next_actions, shaped, spec, weight=1.0):
        """One Adam step on ``weight * mean((Q - y)^2)``; returns the unweighted loss."""
        q_next = self.q_values(batch.next_states, np.hstack(next_actions), target=True)
        y = td_target(q_next, shaped, spec.gamma)
        q, cache = self.critic.forward(np.hstack([batch.states, batch.actions]))
        err = q[:, 0] - y
        loss = check_finite(float(np.mean(err * err)), "critic loss")
        grad = (2.0 * weight / len(err)) * err[:, None]
        self.critic.backward(cache, grad)
        optimize(self.critic, self.critic_opt, self.critic_lr)
        return loss

    def action_gradient(self, states, joint_actions, own_slice):
        """Mean Q over the batch and its gradient w.r.t. this agent's action."""
        x = np.hstack([states, joint_actions])
        q, cache = self.critic.forward(x)
        gx = self.critic.backward(cache, np.full_like(q, 1.0 / q.shape[0]),
                                  accumulate=False)
        off = states.shape[1]
        return float(q.mean()), gx[:, off + own_slice.start:off + own_slice.stop]


class DdpgAgent(CentralCritic):
    kind = "ddpg"

    def __init__(self, index, spec, rng, hidden=(64, 64), actor_lr=1e-4,
                 critic_lr=1e-3, noise_sigma=0.2, noise_decay=0.999):
        self.index = index
        self.spec = spec
        self.action_dim = spec.action_dims[index]
        self.actor = Mlp.build([spec.state_dim] + list(hidden) + [self.action_dim],
                               "tanh", "tanh", rng)
        self.actor_target = self.actor.copy()
        self.actor_opt = AdamState.for_params(self.actor.params())
        self.actor_lr = actor_lr
        self._init_critic(spec, hidden, rng, critic_lr)
        self.noise_sigma = noise_sigma
        self.noise_decay = noise_decay

    def act(self, state, explore, rng):
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.spec.state_dim,):
            raise DimensionError(f"state shape {state.shape} != ({self.spec.state_dim},)")
        a = self.actor(state)
        if explore:
            a = np.clip(a + gaussian_noise(self.action_dim, self.noise_sigma, rng),
                        -1.0, 1.0)
        return a

    def decide(self, state, explore, rng):
        return self.act(state, explore, rng), None

    def target_actions(self, states):
        return self.actor_target(states)

    def update_critic(self, batch, next_actions, shaped, spec):
        return self.td_step(batch, next_actions, shaped, spec)

    def update_actor(self, batch):
        """Ascend mean Q(s, a_1..mu(s)..a_N); other actions come from the batch."""
        own = batch.slices[self.index]
        mu, cache = self.actor.forward(batch.states)
        joint = batch.actions.copy()
        joint[:, own] = mu
        objective, ga = self.action_gradient(batch.states, joint, own)
        check_finite(objective, "actor objective")
        self.actor.backward(cache, -ga)
        optimize(self.actor, self.actor_opt, self.actor_lr)
        return objective

    def sync_targets(self, tau):
        soft_update(self.actor_target, self.actor, tau)
        soft_update(self.critic_target, self.critic, tau)

    def end_episode(self, sim):
        self.noise_sigma *= self.noise_decay

    def to_dict(self):
        return {
            "kind": self.kind, "index": self.index,
            "actor": self.actor.to_dict(), "actor_target": self.actor_target.to_dict(),
            "critic": self.critic.to_dict(), "critic_target": self.critic_target.to_dict(),
            "actor_opt": self.actor_opt.to_dict(), "critic_opt": self.critic_opt.to_dict(),
            "noise_sigma": self.noise_sigma,
        }

    def load_dict(self, d):
        if d.get("kind") != self.kind or d.get("index") != self.index:
            raise CheckpointError(
                f"checkpoint slot holds {d.get('kind')}#{d.get('index')}, "
                f"expected {self.kind}#{self.index}")
        self.actor = Mlp.from_dict(d["actor"])
        self.actor_target = Mlp.from_dict(d["actor_target"])
        self.critic = Mlp.from_dict(d["critic"])
        self.critic_target = Mlp.from_dict(d["critic_target"])
        self.actor_opt = AdamState.from_dict(d["actor_opt"])
        self.critic_opt = AdamState.from_dict(d["critic_opt"])
        self.noise_sigma = float(d["noise_sigma"])
