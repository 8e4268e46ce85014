"""Counterfactual-thinking actor-critic agent.

The actor produces K intent actions from a shared state encoder followed by K
linear heads, matches the state to a scenario (nearest k-means centroid) and
commits either a sampled intent or a regret-weighted mixture of intents. The
critic scores every intent counterfactually, turns the scores into posterior
regrets and pulls the scenario's regret column toward them under KL, while the
usual centralized TD update trains the Q network.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels as K
from .ddpg import CentralCritic
from .errors import CheckpointError, ConfigError, DimensionError
from .marl import check_finite
from .neural import (AdamState, Mlp, ParamTensor, adam_step, gaussian_noise, soft_update,
                     soft_update_tensor)

KL_FLOOR = 1e-6  # added to posterior regrets before normalizing
M_STEP = 0.05    # gradient step on the regret matrix


# ---------------------------------------------------------------------------
# regret arithmetic
# ---------------------------------------------------------------------------

def softmin(regrets, temperature=1.0):
    """``softmax(-regrets / temperature)`` along the last axis."""
    if not temperature > 0.0:
        raise ValueError("temperature must be positive")
    z = -np.asarray(regrets, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def posterior_regrets(q_values):
    q = np.asarray(q_values, dtype=np.float64)
    if q.shape[-1] < 1:
        raise ValueError("need at least one q-value")
    return q.max(axis=-1, keepdims=True) - q


def normalize(v, floor=KL_FLOOR):
    v = np.asarray(v, dtype=np.float64) + floor
    return v / v.sum(axis=-1, keepdims=True)


def kl_divergence(p, q):
    """KL(p || q) with the convention 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def regret_column_step(m, target, step):
    """Exponentiated-gradient step on ``KL(m || target)`` over the simplex.

    A gradient step in log space followed by renormalization, which is the
    KL projection back onto the simplex. Entries stay strictly positive.
    """
    grad = np.log(m / target) + 1.0
    logm = np.log(m) - step * grad
    e = np.exp(logm - logm.max())
    return e / e.sum()


# ---------------------------------------------------------------------------
# scenario model (k-means)
# ---------------------------------------------------------------------------

def _gemm_sqdist(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(X, L, rng):
    """k-means++ seeding; once every point is covered, picks fall back to uniform."""
    n = X.shape[0]
    centroids = np.empty((L, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = _gemm_sqdist(X, centroids[:1])[:, 0]
    for j in range(1, L):
        total = d2.sum()
        if total > 0.0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centroids[j] = X[idx]
        d2 = np.minimum(d2, _gemm_sqdist(X, centroids[j:j + 1])[:, 0])
    return centroids


def lloyd(X, init, max_iter=100, tol=1e-6):
    """Lloyd iterations from ``init``; empty clusters keep their previous centroid."""
    C = np.array(init, dtype=np.float64)
    L = C.shape[0]
    prev = None
    for _ in range(max_iter):
        d = _gemm_sqdist(X, C)
        labels = np.argmin(d, axis=1)
        inertia = float(d[np.arange(X.shape[0]), labels].sum())
        counts = np.bincount(labels, minlength=L)
        onehot = np.zeros((X.shape[0], L))
        onehot[np.arange(X.shape[0]), labels] = 1.0
        sums = onehot.T @ X
        filled = counts > 0
        C[filled] = sums[filled] / counts[filled, None]
        if prev is not None and abs(prev - inertia) <= tol * max(prev, 1e-300):
            break
        prev = inertia
    return C


class ScenarioModel:
    """L centroids in state space; only the first ``n_filled`` are live."""

    def __init__(self, L, state_dim):
        if L < 1:
            raise ConfigError("scenario count L must be >= 1")
        self.L = L
        self.centroids = np.zeros((L, state_dim))
        self.n_filled = 0

    def observe(self, state):
        """Seed centroids with the first L distinct states seen."""
        if self.n_filled >= self.L:
            return
        live = self.centroids[:self.n_filled]
        if self.n_filled and np.any(np.all(live == state, axis=1)):
            return
        self.centroids[self.n_filled] = state
        self.n_filled += 1

    def match(self, state):
        if self.n_filled == 0:
            return 0
        labels, _ = K.assign_nearest(np.asarray(state, dtype=np.float64)[None, :],
                                     self.centroids[:self.n_filled])
        return int(labels[0])

    def match_batch(self, states):
        if self.n_filled == 0:
            return np.zeros(states.shape[0], dtype=np.int64)
        return K.assign_nearest(states, self.centroids[:self.n_filled])[0]

    def to_dict(self):
        return {"L": self.L, "n_filled": self.n_filled,
                "centroids": self.centroids.ravel().tolist()}

    @classmethod
    def from_dict(cls, d, state_dim):
        sm = cls(int(d["L"]), state_dim)
        sm.centroids = np.asarray(d["centroids"], dtype=np.float64).reshape(sm.L, state_dim)
        sm.n_filled = int(d["n_filled"])
        return sm


def refit_scenarios(model, states, rng, max_iter=100, tol=1e-6):
    """Re-cluster ``states`` into ``model.L`` scenarios, in place.

    New centroids are permuted to best match the old ones so regret-matrix
    columns keep referring to roughly the same region of state space.
    """
    X = np.asarray(states, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("refit_scenarios needs at least one state")
    new = lloyd(X, kmeans_pp_init(X, model.L, rng), max_iter, tol)
    if model.n_filled > 0:
        old = model.centroids[:model.n_filled]
        rows, cols = linear_sum_assignment(_gemm_sqdist(old, new))
        order = np.empty(model.L, dtype=np.int64)
        order[rows] = cols
        rest = np.setdiff1d(np.arange(model.L), cols)
        order[model.n_filled:] = rest
        new = new[order]
    model.centroids = new
    model.n_filled = model.L
    return model


# ---------------------------------------------------------------------------
# K-parallel policy layer
# ---------------------------------------------------------------------------

class KParallelPolicy:
    """Shared encoder ``g`` and K heads: ``I^k = squash(g(s) @ C^k)``.

    ``encoder=None`` makes ``g`` the identity.
    """

    def __init__(self, encoder, C, squash="tanh"):
        self.encoder = encoder
        self.C = C if isinstance(C, ParamTensor) else ParamTensor(C)
        if self.C.values.ndim != 3:
            raise DimensionError("policy tensor must be (K, |g(s)|, |a|)")
        if encoder is not None and encoder.output_dim != self.C.shape[1]:
            raise DimensionError("encoder output does not match the policy tensor")
        if squash not in ("tanh", "identity"):
            raise DimensionError(f"unknown squash {squash!r}")
        self.squash = squash

    @classmethod
    def build(cls, state_dim, action_dim, K_, hidden, rng):
        enc = Mlp.build([state_dim] + list(hidden), "tanh", "tanh", rng)
        h = hidden[-1]
        bound = 1.0 / math.sqrt(h)
        return cls(enc, rng.uniform(-bound, bound, size=(K_, h, action_dim)))

    @property
    def K(self):
        return self.C.shape[0]

    def params(self):
        return ([] if self.encoder is None else self.encoder.params()) + [self.C]

    def touch(self):
        if self.encoder is not None:
            self.encoder.touch()

    def forward(self, states):
        """``(B, S) -> (B, K, a)`` intents plus a cache for :meth:`backward`."""
        states = np.asarray(states, dtype=np.float64)
        if self.encoder is None:
            g, enc_cache = states, None
        else:
            g, enc_cache = self.encoder.forward(states)
        z = np.einsum("bh,kha->bka", g, self.C.values)
        intents = np.tanh(z) if self.squash == "tanh" else z
        return intents, (g, enc_cache, intents)

    def backward(self, cache, grad_intents):
        g, enc_cache, intents = cache
        gz = grad_intents * (1.0 - intents * intents) if self.squash == "tanh" \
            else grad_intents
        self.C.grads += np.einsum("bh,bka->kha", g, gz)
        if self.encoder is not None:
            self.encoder.backward(enc_cache, np.einsum("bka,kha->bh", gz, self.C.values))

    def copy(self):
        enc = None if self.encoder is None else self.encoder.copy()
        return KParallelPolicy(enc, ParamTensor(self.C.values), self.squash)

    def to_dict(self):
        return {"encoder": None if self.encoder is None else self.encoder.to_dict(),
                "C": self.C.to_dict(), "squash": self.squash}

    @classmethod
    def from_dict(cls, d):
        enc = None if d["encoder"] is None else Mlp.from_dict(d["encoder"])
        return cls(enc, ParamTensor.from_dict(d["C"]), d["squash"])


def random_regret_matrix(K_, L, rng):
    m = rng.random((K_, L)) + 1e-3
    return m / m.sum(axis=0, keepdims=True)


# ---------------------------------------------------------------------------
# agent
# ---------------------------------------------------------------------------

class CftAgent(CentralCritic):
    kind = "cft"

    def __init__(self, index, spec, rng, K=4, L=16, hidden=(64, 64), actor_lr=1e-4,
                 critic_lr=1e-3, epsilon=0.1, lam=0.5, temperature=0.5,
                 mixture_weights="softmin", noise_sigma=0.2, noise_decay=0.999):
        if not 0.0 <= epsilon <= 1.0 or not 0.0 <= lam <= 1.0:
            raise ConfigError("epsilon and lambda must lie in [0, 1]")
        if not temperature > 0.0:
            raise ConfigError("softmin temperature must be positive")
        if mixture_weights not in ("softmin", "regret_weighted"):
            raise ConfigError(f"unknown mixture_weights {mixture_weights!r}")
        if K < 1:
            raise ConfigError("K must be >= 1")
        self.index = index
        self.spec = spec
        self.action_dim = spec.action_dims[index]
        self.policy = KParallelPolicy.build(spec.state_dim, self.action_dim, K,
                                            hidden, rng)
        self.policy_target = self.policy.copy()
        self.actor_opt = AdamState.for_params(self.policy.params())
        self.actor_lr = actor_lr
        self._init_critic(spec, hidden, rng, critic_lr)
        self.M = random_regret_matrix(K, L, rng)
        self.scenarios = ScenarioModel(L, spec.state_dim)
        self.epsilon = epsilon
        self.lam = lam
        self.temperature = temperature
        self.mixture_weights = mixture_weights
        self.noise_sigma = noise_sigma
        self.noise_decay = noise_decay

    @property
    def K(self):
        return self.policy.K

    @property
    def L(self):
        return self.scenarios.L

    # -- acting ------------------------------------------------------------

    def generate_intents(self, state, target=False):
        pol = self.policy_target if target else self.policy
        state = np.asarray(state, dtype=np.float64)
        if state.shape[-1] != self.spec.state_dim:
            raise DimensionError(f"state dim {state.shape[-1]} != {self.spec.state_dim}")
        if state.ndim == 1:
            return pol.forward(state[None, :])[0][0]
        return pol.forward(state)[0]

    def match_scenario(self, state):
        return self.scenarios.match(state)

    def weights(self, columns):
        """Mixture weights for regret columns given as ``(..., K)``."""
        if self.mixture_weights == "softmin":
            return softmin(columns, self.temperature)
        return columns

    def cft_act(self, state, rng, explore=True):
        """Return ``(action, intents, scenario)`` for a single state."""
        state = np.asarray(state, dtype=np.float64)
        intents = self.generate_intents(state)
        self.scenarios.observe(state)
        l = self.match_scenario(state)
        column = self.M[:, l]
        if explore and self.epsilon > 0.0 and rng.random() < self.epsilon:
            p = softmin(column, self.temperature)
            k = min(int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(),
                                        side="right")), self.K - 1)
            action = intents[k].copy()
        else:
            action = self.weights(column) @ intents
        return action, intents, l

    def act(self, state, explore, rng):
        return self.decide(state, explore, rng)[0]

    def decide(self, state, explore, rng):
        """Behaviour policy: :meth:`cft_act` plus Gaussian noise while exploring."""
        action, intents, l = self.cft_act(state, rng, explore)
        if explore:
            action = np.clip(action + gaussian_noise(self.action_dim, self.noise_sigma, rng),
                             -1.0, 1.0)
        return action, (intents, l)

    def _mixture(self, intents, states):
        labels = self.scenarios.match_batch(states)
        w = self.weights(self.M[:, labels].T)            # (B, K)
        return np.einsum("bk,bka->ba", w, intents), w

    def target_actions(self, states):
        intents = self.policy_target.forward(states)[0]
        return self._mixture(intents, states)[0]

    # -- learning ----------------------------------------------------------

    def counterfactual_q(self, states, joint_actions, intents):
        """Critic values with this agent's action replaced by each intent.

        ``states (B, S)``, ``joint_actions (B, A)``, ``intents (B, K, a)`` ->
        ``(B, K)``. Unbatched inputs give ``(K,)``.
        """
        states = np.asarray(states, dtype=np.float64)
        single = states.ndim == 1
        if single:
            states = states[None]
            joint_actions = np.asarray(joint_actions, dtype=np.float64)[None]
            intents = np.asarray(intents, dtype=np.float64)[None]
        B, K_ = intents.shape[:2]
        own = self.spec.action_slices()[self.index]
        joint = np.repeat(joint_actions[:, None, :], K_, axis=1)
        joint[:, :, own] = intents
        q = self.critic.call_split(states, joint)[:, :, 0]
        return q[0] if single else q

    def regret_targets(self, batch):
        """Per-scenario batch-mean normalized posterior regrets."""
        intents, scen = batch.extras[self.index]
        q = self.counterfactual_q(batch.states, batch.actions, intents)
        p = normalize(posterior_regrets(q))
        targets = {}
        for l in np.unique(scen):
            targets[int(l)] = p[scen == l].mean(axis=0)
        return targets

    def critic_update(self, batch, next_actions, shaped, spec):
        """Joint TD + KL step; returns the pre-step ``(td_loss, kl_loss)``."""
        if self.index not in batch.extras:
            raise DimensionError("batch carries no intents for this agent")
        targets = self.regret_targets(batch)
        kls = []
        for l, p in targets.items():
            kls.append(kl_divergence(self.M[:, l], p))
        kl_loss = check_finite(float(np.mean(kls)), "KL loss")
        td_loss = self.td_step(batch, next_actions, shaped, spec, weight=self.lam)
        if self.lam < 1.0:
            step = M_STEP * (1.0 - self.lam)
            for l, p in targets.items():
                self.M[:, l] = regret_column_step(self.M[:, l], p, step)
        return td_loss, kl_loss

    def update_critic(self, batch, next_actions, shaped, spec):
        return self.critic_update(batch, next_actions, shaped, spec)

    def actor_update(self, batch):
        """Ascend mean Q through the deterministic mixture; M held constant."""
        own = batch.slices[self.index]
        intents, cache = self.policy.forward(batch.states)
        action, w = self._mixture(intents, batch.states)
        joint = batch.actions.copy()
        joint[:, own] = action
        objective, ga = self.action_gradient(batch.states, joint, own)
        check_finite(objective, "actor objective")
        self.policy.backward(cache, -w[:, :, None] * ga[:, None, :])
        adam_step(self.policy.params(), self.actor_opt, self.actor_lr)
        self.policy.touch()
        return objective

    def update_actor(self, batch):
        return self.actor_update(batch)

    def sync_targets(self, tau):
        if self.policy.encoder is not None:
            soft_update(self.policy_target.encoder, self.policy.encoder, tau)
        soft_update_tensor(self.policy_target.C, self.policy.C, tau)
        soft_update(self.critic_target, self.critic, tau)

    def end_episode(self, sim):
        self.noise_sigma *= self.noise_decay
        if sim.should_refit() and len(sim.buffer) > 0:
            refit_scenarios(self.scenarios, sim.buffer.states(), sim.rng)

    # -- persistence -------------------------------------------------------

    def to_dict(self):
        return {
            "kind": self.kind, "index": self.index,
            "policy": self.policy.to_dict(), "policy_target": self.policy_target.to_dict(),
            "critic": self.critic.to_dict(), "critic_target": self.critic_target.to_dict(),
            "actor_opt": self.actor_opt.to_dict(), "critic_opt": self.critic_opt.to_dict(),
            "M": {"K": self.M.shape[0], "L": self.M.shape[1],
                  "values": self.M.ravel().tolist()},
            "scenarios": self.scenarios.to_dict(),
            "noise_sigma": self.noise_sigma,
        }

    def load_dict(self, d):
        if d.get("kind") != self.kind or d.get("index") != self.index:
            raise CheckpointError(
                f"checkpoint slot holds {d.get('kind')}#{d.get('index')}, "
                f"expected {self.kind}#{self.index}")
        try:
            self.policy = KParallelPolicy.from_dict(d["policy"])
            self.policy_target = KParallelPolicy.from_dict(d["policy_target"])
            self.critic = Mlp.from_dict(d["critic"])
            self.critic_target = Mlp.from_dict(d["critic_target"])
            self.actor_opt = AdamState.from_dict(d["actor_opt"])
            self.critic_opt = AdamState.from_dict(d["critic_opt"])
            self.M = np.asarray(d["M"]["values"], dtype=np.float64).reshape(
                d["M"]["K"], d["M"]["L"])
            self.scenarios = ScenarioModel.from_dict(d["scenarios"], self.spec.state_dim)
            self.noise_sigma = float(d["noise_sigma"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"malformed CFT agent record: {exc}") from exc
