"""The online protocol: play ``W_t phi(t)``, observe ``l_t``, feed back ``g_t (x) phi(t)``."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

__all__ = [
    "Environment",
    "EnvironmentExhausted",
    "RoundTrace",
    "ClipHint",
    "clip_gradient",
    "project_ball",
    "run_reduction",
    "clipping_deficit",
    "write_trace_csv",
]


class EnvironmentExhausted(RuntimeError):
    pass


class Environment(Protocol):
    horizon: int

    def loss(self, t: int, w: np.ndarray) -> tuple[float, np.ndarray]:
        """Loss value and a subgradient at ``w``."""

    def comparator(self, t: int) -> np.ndarray: ...

    def comparator_loss(self, t: int) -> float: ...


@dataclass
class RoundTrace:
    t: int
    w: np.ndarray
    g: np.ndarray
    loss_play: float
    loss_comp: float
    u: np.ndarray
    w_raw: np.ndarray | None = None
    g_fed: np.ndarray | None = None


@dataclass
class ClipHint:
    """Running max of past gradient norms; zero before the first round."""

    h: float = 0.0


def clip_gradient(g, hint: ClipHint) -> tuple[np.ndarray, ClipHint]:
    """``g min(1, h / ||g||)`` and the hint advanced by ``||g||``."""
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    clipped = g if norm <= hint.h else g * (hint.h / norm)
    return clipped, ClipHint(max(hint.h, norm))


def project_ball(w, radius: float) -> np.ndarray:
    if radius <= 0:
        raise ValueError("radius must be positive")
    w = np.asarray(w, dtype=float)
    norm = float(np.linalg.norm(w))
    # a few ulps of slack keep the projection idempotent
    return w if norm <= radius * (1 + 4 * np.finfo(float).eps) else w * (radius / norm)


def run_reduction(learner, env: Environment, T: int, *, clip: bool = False,
                  radius: float | None = None) -> list[RoundTrace]:
    """Run the kernelized online learning loop for ``T`` rounds.

    ``clip`` feeds the learner clipped gradients (and the clipping hint via
    ``learner.set_hint``); ``radius`` projects each play onto the ball of that
    radius.  Regret is always charged on the true losses.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if getattr(env, "horizon", T) < T:
        raise EnvironmentExhausted(f"environment provides {env.horizon} rounds, {T} requested")
    hint = ClipHint()
    trace = []
    for t in range(1, T + 1):
        if clip:
            learner.set_hint(hint.h)
        w_raw = np.asarray(learner.play(t), dtype=float)
        w = project_ball(w_raw, radius) if radius is not None else w_raw
        value, g = env.loss(t, w)
        g = np.asarray(g, dtype=float)
        fed = g
        if clip:
            fed, hint = clip_gradient(g, hint)
        learner.update(t, fed)
        trace.append(
            RoundTrace(t, w, g, float(value), float(env.comparator_loss(t)),
                       np.asarray(env.comparator(t), dtype=float),
                       w_raw if radius is not None else None, fed if clip else None)
        )
    return trace


def clipping_deficit(trace: Sequence[RoundTrace]) -> tuple[float, float]:
    """``sum_t (||g_t|| - ||g_hat_t||)`` and ``max_t ||g_t||`` for a clipped run."""
    deficit = math.fsum(float(np.linalg.norm(r.g) - np.linalg.norm(r.g_fed)) for r in trace)
    return deficit, max(float(np.linalg.norm(r.g)) for r in trace)


def write_trace_csv(trace: Sequence[RoundTrace], fh) -> None:
    """Columns ``t, w..., g..., loss_play, loss_comp, u...``."""
    d = len(trace[0].w) if trace else 0
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(
        ["t", *(f"w{i}" for i in range(d)), *(f"g{i}" for i in range(d)), "loss_play", "loss_comp",
         *(f"u{i}" for i in range(d))]
    )
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    for r in trace:
        writer.writerow([r.t, *map(fmt, r.w), *map(fmt, r.g), fmt(r.loss_play), fmt(r.loss_comp),
                         *map(fmt, r.u)])

