"""Multi-seller market with a linear cross-price demand oracle.

volume_i = max(0, b_i - a_i * p_i + c_i * mean(p_others) + noise)
revenue_i = p_i * volume_i

The state is the vector of instant volumes of all sellers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError, DimensionError


def default_demand(n):
    """Sellers differ only slightly in base demand; seller 0 is the strongest."""
    b = 10.0 - 0.25 * np.arange(n)
    return b, np.ones(n), np.full(n, 0.5)


class MarketWorld:
    def __init__(self, n_sellers=5, intercepts=None, slopes=None, cross=None,
                 p_min=1.0, p_max=10.0, noise_sigma=0.5, seed=0):
        if n_sellers < 1:
            raise ConfigError("need at least one seller")
        b0, a0, c0 = default_demand(n_sellers)
        self.b = np.asarray(b0 if intercepts is None else intercepts, dtype=np.float64)
        self.a = np.asarray(a0 if slopes is None else slopes, dtype=np.float64)
        self.c = np.asarray(c0 if cross is None else cross, dtype=np.float64)
        for name, v in (("intercepts", self.b), ("slopes", self.a), ("cross", self.c)):
            if v.shape != (n_sellers,):
                raise ConfigError(f"{name} must have one entry per seller")
        if np.any(self.a <= 0):
            raise ConfigError("own-price slopes must be positive")
        if np.any(self.b < 0) or np.any(self.c < 0):
            raise ConfigError("intercepts and cross slopes must be non-negative")
        if not p_min < p_max or noise_sigma < 0:
            raise ConfigError("need p_min < p_max and noise_sigma >= 0")
        self.n_agents = n_sellers
        self.p_min = p_min
        self.p_max = p_max
        self.noise_sigma = noise_sigma
        self.reset(seed)

    @classmethod
    def from_fit(cls, fit, **kw):
        return cls(len(fit.intercepts), fit.intercepts, fit.slopes, fit.cross, **kw)

    @property
    def state_dim(self):
        return self.n_agents

    @property
    def action_dims(self):
        return (1,) * self.n_agents

    def prices(self, actions):
        a = np.clip(np.asarray(actions, dtype=np.float64).reshape(-1), -1.0, 1.0)
        return self.p_min + (a + 1.0) * 0.5 * (self.p_max - self.p_min)

    def volumes(self, prices, noise=None):
        p = np.asarray(prices, dtype=np.float64)
        n = p.size
        others = (p.sum() - p) / (n - 1) if n > 1 else np.zeros(n)
        v = self.b - self.a * p + self.c * others
        if noise is not None:
            v = v + noise
        return np.maximum(v, 0.0)

    def reset(self, seed):
        self.rng = np.random.default_rng(seed)
        p = self.rng.uniform(self.p_min, self.p_max, self.n_agents)
        self.volume = self.volumes(p)
        return self.volume.copy()

    def step(self, actions):
        if len(actions) != self.n_agents:
            raise DimensionError(f"expected {self.n_agents} prices, got {len(actions)}")
        p = self.prices(actions)
        noise = self.noise_sigma * self.rng.standard_normal(self.n_agents)
        self.volume = self.volumes(p, noise)
        return self.volume.copy(), p * self.volume


@dataclass
class DemandFit:
    intercepts: np.ndarray
    slopes: np.ndarray
    cross: np.ndarray
    rmse: np.ndarray


def fit_demand_model(prices, volumes):
    """Per-seller least squares of volume on (1, own price, mean rival price)."""
    P = np.asarray(prices, dtype=np.float64)
    V = np.asarray(volumes, dtype=np.float64)
    if P.ndim != 2 or P.shape != V.shape:
        raise DataError("prices and volumes must be equal-shaped (rows, sellers) arrays")
    T, n = P.shape
    if T < 3:
        raise DataError(f"need at least 3 rows to fit demand, got {T}")
    if n < 2:
        raise DataError("need at least two sellers for a cross-price term")
    b, a, c, rmse = (np.zeros(n) for _ in range(4))
    for i in range(n):
        rivals = (P.sum(axis=1) - P[:, i]) / (n - 1)
        X = np.column_stack([np.ones(T), P[:, i], rivals])
        if np.linalg.matrix_rank(X) < 3:
            raise DataError(
                f"seller {i + 1}: price series is degenerate (constant or collinear "
                "with the rival mean); cannot identify the demand model")
        coef, *_ = np.linalg.lstsq(X, V[:, i], rcond=None)
        b[i], a[i], c[i] = coef[0], -coef[1], coef[2]
        resid = V[:, i] - X @ coef
        rmse[i] = np.sqrt(np.mean(resid * resid))
    return DemandFit(b, a, c, rmse)


def load_price_volume_csv(path):
    """Read ``p_1..p_n,v_1..v_n`` rows into ``(prices, volumes)`` arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    n = len(header) // 2
    expected = [f"p_{i}" for i in range(1, n + 1)] + [f"v_{i}" for i in range(1, n + 1)]
    if len(header) % 2 or header != expected:
        raise DataError(f"{path}: header must be {','.join(expected) or 'p_1,...,v_n'}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} columns, "
                            f"got {len(row)}")
        try:
            data.append([float(x) for x in row])
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from exc
    arr = np.asarray(data, dtype=np.float64).reshape(-1, 2 * n)
    return arr[:, :n], arr[:, n:]
