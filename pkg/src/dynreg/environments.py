"""Synthetic loss streams with controlled comparator path-length.

Every stream is a pure function of its :class:`EnvConfig` (all randomness
comes from ``numpy.random.default_rng(seed)``) and is fully materialised at
construction, so the learner sees an oblivious adversary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ConfigError",
    "EnvConfig",
    "LinearPiecewiseEnv",
    "RegressionEnv",
    "ExpConcaveEnv",
    "make_env",
    "gen_linear_piecewise",
    "gen_regression",
    "gen_expconcave",
    "sinusoid_squared_path_length",
]

KINDS = ("linear_piecewise", "regression", "expconcave")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    kind: str = "linear_piecewise"
    d: int = 2
    T: int = 128
    switches: int = 0
    magnitude: float = 1.0
    noise: float = 0.5
    seed: int = 0
    G: float = 1.0
    jump_at: int | None = None
    jump_scale: float = 1.0

    def validate(self) -> "EnvConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown env kind {self.kind!r}; expected one of {KINDS}")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if not 0 <= self.switches < self.T:
            raise ConfigError("need 0 <= switches < T")
        if self.magnitude <= 0:
            raise ConfigError("magnitude must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")
        if self.G <= 0 or self.jump_scale <= 0:
            raise ConfigError("G and jump_scale must be positive")
        if self.kind == "regression" and self.d != 1:
            raise ConfigError("regression streams are one-dimensional (d = 1)")
        return self

    def with_horizon(self, T: int) -> "EnvConfig":
        return replace(self, T=T)


def _ball_points(rng, n: int, d: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * (radius * rng.uniform(size=(n, 1)) ** (1.0 / d))


def _piecewise(rng, cfg: EnvConfig) -> np.ndarray:
    segments = np.array_split(np.arange(cfg.T), cfg.switches + 1)
    values = _ball_points(rng, len(segments), cfg.d, cfg.magnitude)
    u = np.empty((cfg.T, cfg.d))
    for seg, val in zip(segments, values):
        u[seg] = val
    return u


class _Stream:
    cfg: EnvConfig

    @property
    def horizon(self) -> int:
        return self.cfg.T

    def comparator(self, t: int) -> np.ndarray:
        return self.u[t - 1]

    @property
    def comparators(self) -> np.ndarray:
        return self.u


class LinearPiecewiseEnv(_Stream):
    """Linear losses ``<g_t, w>`` against a piecewise-constant comparator.

    ``g_t`` is the unit vector pointing away from ``u_t`` plus Gaussian noise,
    rescaled into the ``G``-ball; an optional jump multiplies every gradient
    from round ``jump_at`` on by ``jump_scale``.
    """

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg.validate()
        rng = np.random.default_rng(cfg.seed)
        self.u = _piecewise(rng, cfg)
        norms = np.linalg.norm(self.u, axis=1, keepdims=True)
        away = -np.divide(self.u, norms, out=np.zeros_like(self.u), where=norms > 0)
        raw = away + cfg.noise * rng.standard_normal((cfg.T, cfg.d)) / math.sqrt(cfg.d)
        raw /= np.maximum(1.0, np.linalg.norm(raw, axis=1, keepdims=True))
        self.g = cfg.G * raw
        if cfg.jump_at is not None:
            self.g[cfg.jump_at - 1 :] *= cfg.jump_scale
        jumps = np.linalg.norm(np.diff(self.u, axis=0), axis=1)
        self.path_length = float(jumps.sum())
        self.max_norm = float(norms.max())

    def loss(self, t, w):
        g = self.g[t - 1]
        return float(g @ w), g

    def comparator_loss(self, t):
        return float(self.g[t - 1] @ self.u[t - 1])

    def __iter__(self):
        return iter(zip(self.g, self.u))


def sinusoid_squared_path_length(amplitude: float, cycles: int, T: int) -> float:
    """Closed form of ``sum_{t=2}^T (y_t - y_{t-1})^2`` for ``y_t = A sin(2 pi c t / T)``."""
    if T < 2 or cycles == 0:
        return 0.0
    w = 2 * math.pi * cycles / T
    n = T - 1
    # sum_{t=2}^T cos((2t - 1) w): arithmetic progression of angles 3w, 5w, ...
    if abs(math.sin(w)) < 1e-15:
        cos_sum = n * math.cos(3 * w)
    else:
        cos_sum = math.sin(n * w) / math.sin(w) * math.cos(3 * w + (n - 1) * w)
    return 2 * amplitude**2 * math.sin(w / 2) ** 2 * (n + cos_sum)


class RegressionEnv(_Stream):
    """Squared-loss forecasting with time as the context.

    Benchmark ``y~_t = (M/2)(1 + sin(2 pi c t / T))`` with ``c = switches``
    cycles; labels add uniform noise in ``[-noise, noise]``.
    """

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg.validate()
        rng = np.random.default_rng(cfg.seed)
        t = np.arange(1, cfg.T + 1)
        self.contexts = t
        self.benchmark = 0.5 * cfg.magnitude * (1 + np.sin(2 * math.pi * cfg.switches * t / cfg.T))
        self.y = self.benchmark + cfg.noise * rng.uniform(-1, 1, size=cfg.T)
        self.u = self.benchmark[:, None]

    def loss(self, t, w):
        pred = float(np.asarray(w).reshape(-1)[0])
        resid = pred - self.y[t - 1]
        return 0.5 * resid**2, np.array([resid])

    def comparator_loss(self, t):
        return 0.5 * (self.benchmark[t - 1] - self.y[t - 1]) ** 2

    def squared_path_length(self) -> float:
        return float(np.sum(np.diff(self.benchmark) ** 2))

    def __iter__(self):
        return iter(zip(self.contexts, self.y, self.benchmark))


class ExpConcaveEnv(_Stream):
    """``l_t(w) = (<a_t, w> - b_t)^2 / 2`` with ``||a_t|| <= 1`` on the ball of radius ``B = M``.

    ``b_t = <a_t, u_t> + noise``; ``beta = 1 / (4 max_t (||a_t|| B + |b_t|)^2)``
    makes every loss ``beta``-exp-concave in the sense used by Newton-step methods.
    """

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg.validate()
        rng = np.random.default_rng(cfg.seed)
        self.radius = cfg.magnitude
        self.u = _piecewise(rng, cfg)
        self.a = _ball_points(rng, cfg.T, cfg.d, 1.0)
        self.b = np.einsum("ij,ij->i", self.a, self.u) + cfg.noise * rng.uniform(-1, 1, size=cfg.T)
        scale = np.linalg.norm(self.a, axis=1) * self.radius + np.abs(self.b)
        self.beta = float(1.0 / (4 * np.max(scale) ** 2))

    def loss(self, t, w):
        a = self.a[t - 1]
        resid = float(a @ w) - self.b[t - 1]
        return 0.5 * resid**2, resid * a

    def comparator_loss(self, t):
        return 0.5 * (float(self.a[t - 1] @ self.u[t - 1]) - self.b[t - 1]) ** 2

    def __iter__(self):
        return iter(zip(self.a, self.b, self.u))


def make_env(cfg: EnvConfig):
    cfg.validate()
    return {"linear_piecewise": LinearPiecewiseEnv, "regression": RegressionEnv,
            "expconcave": ExpConcaveEnv}[cfg.kind](cfg)


def gen_linear_piecewise(cfg: EnvConfig) -> LinearPiecewiseEnv:
    if cfg.kind != "linear_piecewise":
        raise ConfigError("expected kind 'linear_piecewise'")
    return LinearPiecewiseEnv(cfg)


def gen_regression(cfg: EnvConfig) -> RegressionEnv:
    if cfg.kind != "regression":
        raise ConfigError("expected kind 'regression'")
    return RegressionEnv(cfg)


def gen_expconcave(cfg: EnvConfig) -> ExpConcaveEnv:
    if cfg.kind != "expconcave":
        raise ConfigError("expected kind 'expconcave'")
    return ExpConcaveEnv(cfg)
