"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``CFTMARL_NO_NUMBA`` is unset or ``0``. Both paths compute the same
quantities; they agree to floating-point rounding, not bit-for-bit.

Activation codes: 0 identity, 1 tanh, 2 relu.
"""

import os

import numpy as np

ACT_IDENTITY = 0
ACT_TANH = 1
ACT_RELU = 2


def _numba_requested():
    flag = os.environ.get("CFTMARL_NO_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by CFTMARL_NO_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# pure numpy implementations
# ---------------------------------------------------------------------------

def _np_dense_forward(x, W, b, act):
    z = x @ W.T + b
    if act == ACT_TANH:
        return np.tanh(z)
    if act == ACT_RELU:
        return np.maximum(z, 0.0)
    return z


def _np_dense_backward(x, W, y, gy, act, param_grads):
    if act == ACT_TANH:
        gz = gy * (1.0 - y * y)
    elif act == ACT_RELU:
        gz = gy * (y > 0.0)
    else:
        gz = gy
    gx = gz @ W
    if param_grads:
        return gx, gz.T @ x, gz.sum(axis=0)
    return gx, np.zeros_like(W), np.zeros(W.shape[0])


def _np_sqdist(X, C):
    out = np.empty((X.shape[0], C.shape[0]))
    # chunked to bound the (rows, centroids, dim) temporary
    step = max(1, 262144 // max(1, C.shape[0] * X.shape[1]))
    for lo in range(0, X.shape[0], step):
        d = X[lo:lo + step, None, :] - C[None, :, :]
        out[lo:lo + step] = np.einsum("ijk,ijk->ij", d, d)
    return out


def _np_assign_nearest(X, C):
    d = _np_sqdist(X, C)
    labels = np.argmin(d, axis=1)  # argmin returns the first minimum
    return labels.astype(np.int64), d[np.arange(X.shape[0]), labels]


def _np_nearest_within(points, targets, radius):
    if points.shape[0] == 0 or targets.shape[0] == 0:
        return np.full(targets.shape[0], -1, dtype=np.int64)
    d = _np_sqdist(targets, points)
    idx = np.argmin(d, axis=1)
    best = d[np.arange(targets.shape[0]), idx]
    return np.where(best <= radius * radius, idx, -1).astype(np.int64)


def _np_flee(evaders, pursuers, speed):
    if evaders.shape[0] == 0 or pursuers.shape[0] == 0:
        return evaders.copy()
    d = _np_sqdist(evaders, pursuers)
    near = pursuers[np.argmin(d, axis=1)]
    away = evaders - near
    norm = np.sqrt(np.einsum("ij,ij->i", away, away))
    scale = np.divide(speed, norm, out=np.zeros_like(norm), where=norm > 0.0)
    return np.clip(evaders + away * scale[:, None], 0.0, 1.0)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_dense_forward(x, W, b, act):
        y = np.dot(x, W.T)
        n, m = y.shape
        for i in range(n):
            for j in range(m):
                z = y[i, j] + b[j]
                if act == 1:
                    z = np.tanh(z)
                elif act == 2:
                    if z < 0.0:
                        z = 0.0
                y[i, j] = z
        return y

    @njit(cache=True)
    def _nb_dense_backward(x, W, y, gy, act, param_grads):
        n, m = y.shape
        gz = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                g = gy[i, j]
                if act == 1:
                    g = g * (1.0 - y[i, j] * y[i, j])
                elif act == 2:
                    if y[i, j] <= 0.0:
                        g = 0.0
                gz[i, j] = g
        gx = np.dot(gz, W)
        gb = np.zeros(m)
        if param_grads:
            gW = np.dot(gz.T, x)
            for i in range(n):
                for j in range(m):
                    gb[j] += gz[i, j]
        else:
            gW = np.zeros_like(W)
        return gx, gW, gb

    @njit(cache=True)
    def _nb_sqdist(X, C):
        n, k = X.shape[0], C.shape[0]
        dim = X.shape[1]
        out = np.empty((n, k))
        for i in range(n):
            for j in range(k):
                s = 0.0
                for d in range(dim):
                    t = X[i, d] - C[j, d]
                    s += t * t
                out[i, j] = s
        return out

    @njit(cache=True)
    def _nb_assign_nearest(X, C):
        n, k = X.shape[0], C.shape[0]
        dim = X.shape[1]
        labels = np.empty(n, dtype=np.int64)
        best = np.empty(n)
        for i in range(n):
            bi = -1
            bd = np.inf
            for j in range(k):
                s = 0.0
                for d in range(dim):
                    t = X[i, d] - C[j, d]
                    s += t * t
                if s < bd:
                    bd = s
                    bi = j
            labels[i] = bi
            best[i] = bd
        return labels, best

    @njit(cache=True)
    def _nb_nearest_within(points, targets, radius):
        r2 = radius * radius
        out = np.full(targets.shape[0], -1, dtype=np.int64)
        for t in range(targets.shape[0]):
            bd = np.inf
            bi = -1
            for p in range(points.shape[0]):
                dx = targets[t, 0] - points[p, 0]
                dy = targets[t, 1] - points[p, 1]
                s = dx * dx + dy * dy
                if s < bd:
                    bd = s
                    bi = p
            if bi >= 0 and bd <= r2:
                out[t] = bi
        return out

    @njit(cache=True)
    def _nb_flee(evaders, pursuers, speed):
        out = evaders.copy()
        if pursuers.shape[0] == 0:
            return out
        for e in range(evaders.shape[0]):
            bd = np.inf
            bi = 0
            for p in range(pursuers.shape[0]):
                dx = evaders[e, 0] - pursuers[p, 0]
                dy = evaders[e, 1] - pursuers[p, 1]
                s = dx * dx + dy * dy
                if s < bd:
                    bd = s
                    bi = p
            ax = evaders[e, 0] - pursuers[bi, 0]
            ay = evaders[e, 1] - pursuers[bi, 1]
            norm = np.sqrt(ax * ax + ay * ay)
            if norm > 0.0:
                ax = evaders[e, 0] + ax * (speed / norm)
                ay = evaders[e, 1] + ay * (speed / norm)
                out[e, 0] = min(max(ax, 0.0), 1.0)
                out[e, 1] = min(max(ay, 0.0), 1.0)
        return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


if HAVE_NUMBA:
    BACKEND = "numba"

    def dense_forward(x, W, b, act):
        return _nb_dense_forward(_c(x), _c(W), _c(b), act)

    def dense_backward(x, W, y, gy, act, param_grads=True):
        return _nb_dense_backward(_c(x), _c(W), _c(y), _c(gy), act, param_grads)

    def sqdist(X, C):
        return _nb_sqdist(_c(X), _c(C))

    def assign_nearest(X, C):
        return _nb_assign_nearest(_c(X), _c(C))

    def nearest_within(points, targets, radius):
        return _nb_nearest_within(_c(points), _c(targets), float(radius))

    def flee(evaders, pursuers, speed):
        return _nb_flee(_c(evaders), _c(pursuers), float(speed))

else:
    BACKEND = "numpy"
    dense_forward = _np_dense_forward
    dense_backward = _np_dense_backward
    sqdist = _np_sqdist
    assign_nearest = _np_assign_nearest
    nearest_within = _np_nearest_within
    flee = _np_flee


NUMPY_KERNELS = {
    "dense_forward": _np_dense_forward,
    "dense_backward": _np_dense_backward,
    "sqdist": _np_sqdist,
    "assign_nearest": _np_assign_nearest,
    "nearest_within": _np_nearest_within,
    "flee": _np_flee,
}
