"""Feed-forward MLPs with explicit backpropagation, Adam and soft target updates.

Everything runs in float64. Weights are stored ``(out, in)`` so a layer
computes ``y = act(W x + b)``; batched inputs are rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import CheckpointError, DimensionError, NumericalError

ACTIVATIONS = {"identity": K.ACT_IDENTITY, "tanh": K.ACT_TANH, "relu": K.ACT_RELU}

FORMAT_VERSION = 1


def _activate(z, name):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


class ParamTensor:
    """A parameter array with a same-shaped gradient accumulator."""

    __slots__ = ("shape", "values", "grads")

    def __init__(self, values):
        self.values = np.array(values, dtype=np.float64)
        self.shape = tuple(self.values.shape)
        self.grads = np.zeros_like(self.values)

    @property
    def size(self):
        return self.values.size

    def zero_grad(self):
        self.grads.fill(0.0)

    def to_dict(self):
        return {"shape": list(self.shape), "values": self.values.ravel().tolist()}

    @classmethod
    def from_dict(cls, d):
        shape = tuple(int(s) for s in d["shape"])
        flat = np.asarray(d["values"], dtype=np.float64)
        if flat.size != math.prod(shape):
            raise CheckpointError(f"tensor of shape {shape} has {flat.size} values")
        return cls(flat.reshape(shape))


@dataclass
class Layer:
    weight: ParamTensor
    bias: ParamTensor
    activation: str

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


@dataclass
class ForwardCache:
    """Layer inputs and outputs recorded by :meth:`Mlp.forward`."""

    owner: int
    version: int
    squeeze: bool
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)


class Mlp:
    def __init__(self, layers):
        if not layers:
            raise DimensionError("an Mlp needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        for layer in layers:
            if layer.activation not in ACTIVATIONS:
                raise DimensionError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise DimensionError("bias shape does not match weight rows")
        self.layers = list(layers)
        # bumped whenever parameter values change; stale caches are refused
        self.version = 0

    @classmethod
    def build(cls, sizes, hidden_activation, output_activation, rng):
        """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
        layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / math.sqrt(n_in)
            W = rng.uniform(-bound, bound, size=(n_out, n_in))
            b = rng.uniform(-bound, bound, size=n_out)
            act = output_activation if k == len(sizes) - 2 else hidden_activation
            layers.append(Layer(ParamTensor(W), ParamTensor(b), act))
        return cls(layers)

    @classmethod
    def zeros(cls, sizes, hidden_activation="tanh", output_activation="identity"):
        layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = output_activation if k == len(sizes) - 2 else hidden_activation
            layers.append(Layer(ParamTensor(np.zeros((n_out, n_in))),
                                ParamTensor(np.zeros(n_out)), act))
        return cls(layers)

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def params(self):
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def n_params(self):
        return sum(p.size for p in self.params())

    def touch(self):
        self.version += 1

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def forward(self, x):
        """Return ``(output, cache)``. A 1-D input gives a 1-D output."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(
                f"expected input of dim {self.input_dim}, got shape {x.shape}")
        cache = ForwardCache(id(self), self.version, squeeze)
        h = x
        for layer in self.layers:
            cache.inputs.append(h)
            h = K.dense_forward(h, layer.weight.values, layer.bias.values,
                                ACTIVATIONS[layer.activation])
            cache.outputs.append(h)
        return (h[0] if squeeze else h), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def call_split(self, shared, varying):
        """Evaluate inputs ``[shared_b, varying_bk]`` for every ``k``.

        ``shared (B, s)`` and ``varying (B, K, v)`` -> ``(B, K, out)``. The
        first layer's product with ``shared`` is computed once per row rather
        than once per ``k``; no cache is kept.
        """
        shared = np.asarray(shared, dtype=np.float64)
        varying = np.asarray(varying, dtype=np.float64)
        B, K_, v = varying.shape
        s = shared.shape[1]
        if shared.shape[0] != B or s + v != self.input_dim:
            raise DimensionError(f"split input {shared.shape} + {varying.shape} does not "
                                 f"match input dim {self.input_dim}")
        first = self.layers[0]
        W = first.weight.values
        z = (shared @ W[:, :s].T + first.bias.values)[:, None, :] + varying @ W[:, s:].T
        h = _activate(z.reshape(B * K_, -1), first.activation)
        for layer in self.layers[1:]:
            h = K.dense_forward(h, layer.weight.values, layer.bias.values,
                                ACTIVATIONS[layer.activation])
        return h.reshape(B, K_, -1)

    def backward(self, cache, output_grad, accumulate=True):
        """Backpropagate ``output_grad``; return the gradient w.r.t. the input.

        Parameter gradients are added into each ``ParamTensor.grads`` unless
        ``accumulate`` is false (input gradient only).
        """
        if not isinstance(cache, ForwardCache) or cache.owner != id(self) \
                or cache.version != self.version \
                or len(cache.inputs) != len(self.layers):
            raise DimensionError("cache does not belong to this network state")
        g = np.asarray(output_grad, dtype=np.float64)
        if cache.squeeze:
            g = g[None, :] if g.ndim == 1 else g
        if g.shape != cache.outputs[-1].shape:
            raise DimensionError(
                f"output_grad shape {g.shape} != output shape {cache.outputs[-1].shape}")
        for layer, x, y in zip(reversed(self.layers), reversed(cache.inputs),
                               reversed(cache.outputs)):
            g, gW, gb = K.dense_backward(x, layer.weight.values, y, g,
                                         ACTIVATIONS[layer.activation], accumulate)
            if accumulate:
                layer.weight.grads += gW
                layer.bias.grads += gb
        return g[0] if cache.squeeze else g

    def copy(self):
        layers = [Layer(ParamTensor(l.weight.values), ParamTensor(l.bias.values),
                        l.activation) for l in self.layers]
        return Mlp(layers)

    def same_architecture(self, other):
        return len(self.layers) == len(other.layers) and all(
            a.weight.shape == b.weight.shape and a.activation == b.activation
            for a, b in zip(self.layers, other.layers))

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "layers": [{"weight": l.weight.to_dict(), "bias": l.bias.to_dict(),
                        "activation": l.activation} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != FORMAT_VERSION:
            raise CheckpointError(
                f"Mlp format version {d.get('version')} != {FORMAT_VERSION}")
        try:
            layers = [Layer(ParamTensor.from_dict(l["weight"]),
                            ParamTensor.from_dict(l["bias"]), l["activation"])
                      for l in d["layers"]]
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"malformed Mlp record: {exc}") from exc
        return cls(layers)


class AdamState:
    """First/second moment estimates over a flat concatenation of parameters."""

    def __init__(self, n, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon

    @classmethod
    def for_params(cls, params, **kw):
        return cls(sum(p.size for p in params), **kw)

    def to_dict(self):
        return {"version": FORMAT_VERSION, "m": self.m.tolist(), "v": self.v.tolist(),
                "t": self.t, "beta1": self.beta1, "beta2": self.beta2,
                "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != FORMAT_VERSION:
            raise CheckpointError(
                f"AdamState format version {d.get('version')} != {FORMAT_VERSION}")
        st = cls(len(d["m"]), d["beta1"], d["beta2"], d["epsilon"])
        st.m = np.asarray(d["m"], dtype=np.float64)
        st.v = np.asarray(d["v"], dtype=np.float64)
        st.t = int(d["t"])
        if st.m.shape != st.v.shape:
            raise CheckpointError("Adam moment vectors differ in length")
        return st


def adam_step(params, state, lr):
    """Bias-corrected Adam descent step on ``params``; grads are zeroed after.

    An all-zero gradient leaves values untouched (moments still decay).
    """
    if not lr >= 0.0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    g = np.concatenate([p.grads.ravel() for p in params]) if params else np.zeros(0)
    if g.size != state.m.size:
        raise DimensionError(f"Adam state sized {state.m.size}, params have {g.size}")
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient; Adam step refused")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * g * g
    if lr > 0.0 and np.any(g):
        m_hat = state.m / (1.0 - b1 ** state.t)
        v_hat = state.v / (1.0 - b2 ** state.t)
        step = lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        offset = 0
        for p in params:
            p.values -= step[offset:offset + p.size].reshape(p.shape)
            offset += p.size
    for p in params:
        p.zero_grad()


def soft_update(target, source, tau):
    """Polyak averaging: ``target <- tau * source + (1 - tau) * target``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if not target.same_architecture(source):
        raise DimensionError("soft_update between different architectures")
    for t, s in zip(target.params(), source.params()):
        _blend(t, s, tau)
    target.touch()


def _blend(target, source, tau):
    if tau == 1.0:
        target.values[...] = source.values
    elif tau > 0.0:
        # incremental form keeps target bit-identical when it equals source
        target.values += tau * (source.values - target.values)


def soft_update_tensor(target, source, tau):
    if target.shape != source.shape:
        raise DimensionError("soft_update between tensors of different shape")
    _blend(target, source, tau)


def gaussian_noise(dim, sigma, rng):
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return sigma * rng.standard_normal(dim)
