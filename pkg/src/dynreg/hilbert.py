"""Kernel-trick linear algebra for operators ``sum_s c_s * v_s (x) phi(r_s)``.

Operators from the RKHS into R^d are never materialised: a
:class:`SpanOperator` stores (round, vector, coefficient) triples and every
inner product reduces to ``k(r_i, r_j) <v_i, v_j>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .kernels import Kernel

__all__ = [
    "SolverError",
    "SpanOperator",
    "GramState",
    "BorderedInverse",
    "rank_one_norm",
    "sum_norm_sq",
    "push_s_squared",
    "woodbury_solve",
    "quad_form_inverse",
    "apply_shifted",
    "spd_solve",
]


class SolverError(RuntimeError):
    """An inner positive-definite solve failed even after jitter."""


@dataclass
class SpanOperator:
    rounds: np.ndarray
    vectors: np.ndarray
    coefs: np.ndarray

    def __post_init__(self):
        self.rounds = np.asarray(self.rounds, dtype=np.int64).reshape(-1)
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim == 1:
            self.vectors = self.vectors.reshape(len(self.rounds), -1)
        self.coefs = np.asarray(self.coefs, dtype=float).reshape(-1)
        if not (len(self.rounds) == len(self.vectors) == len(self.coefs)):
            raise ValueError("rounds, vectors and coefs must have equal length")

    @classmethod
    def empty(cls, d: int) -> "SpanOperator":
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, d)), np.zeros(0))

    @classmethod
    def from_gradients(cls, rounds, vectors, coefs=None) -> "SpanOperator":
        rounds = np.asarray(rounds, dtype=np.int64)
        if coefs is None:
            coefs = np.ones(len(rounds))
        return cls(rounds, vectors, coefs)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.rounds)

    def __add__(self, other: "SpanOperator") -> "SpanOperator":
        return SpanOperator(
            np.concatenate([self.rounds, other.rounds]),
            np.vstack([self.vectors, other.vectors]),
            np.concatenate([self.coefs, other.coefs]),
        )

    def __mul__(self, scalar: float) -> "SpanOperator":
        return SpanOperator(self.rounds, self.vectors, self.coefs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def weighted_vectors(self) -> np.ndarray:
        return self.vectors * self.coefs[:, None]

    def apply(self, kernel: Kernel, t: int) -> np.ndarray:
        """Evaluate ``W phi(t)`` in R^d."""
        if len(self) == 0:
            return np.zeros(self.d)
        return kernel.column(self.rounds, t) @ self.weighted_vectors()

    def inner(self, other: "SpanOperator", kernel: Kernel) -> float:
        """Hilbert-Schmidt inner product."""
        if len(self) == 0 or len(other) == 0:
            return 0.0
        kmat = kernel.cross(self.rounds, other.rounds)
        return float(np.sum(kmat * (self.weighted_vectors() @ other.weighted_vectors().T)))

    def norm_sq(self, kernel: Kernel) -> float:
        return self.inner(self, kernel)


def rank_one_norm(g, k_tt: float) -> float:
    """Hilbert-Schmidt norm of ``g (x) phi(t)``: ``||g|| sqrt(k(t, t))``."""
    if k_tt < 0:
        raise ValueError("k(t, t) must be nonnegative")
    return float(np.linalg.norm(g) * math.sqrt(k_tt))


def sum_norm_sq(grads: Sequence[tuple[int, np.ndarray]], kernel: Kernel) -> float:
    """``|| sum_s g_s (x) phi(s) ||^2_HS`` by the full double sum."""
    if len(grads) == 0:
        return 0.0
    rounds = np.array([r for r, _ in grads], dtype=np.int64)
    vecs = np.array([np.asarray(g, dtype=float).reshape(-1) for _, g in grads])
    return float(np.sum(kernel.cross(rounds, rounds) * (vecs @ vecs.T)))


@dataclass
class GramState:
    """Running sums shared by the first-order learners.

    ``s_sq`` is ``||sum_s G_s||^2_HS`` and ``v`` is ``4 G0^2 + sum_s ||G_s||^2``.
    ``g0`` may be raised later (scale-free use); ``v`` follows it.
    """

    kernel: Kernel
    d: int
    g0: float = 1.0
    s_sq: float = 0.0
    sumsq: float = 0.0
    _rounds: list = field(default_factory=list, repr=False)
    _grads: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.g0 < 0:
            raise ValueError("G0 must be nonnegative")
        if self._grads is None:
            self._grads = np.zeros((16, self.d))

    @property
    def v(self) -> float:
        return 4 * self.g0**2 + self.sumsq

    @property
    def n(self) -> int:
        return len(self._rounds)

    @property
    def rounds(self) -> np.ndarray:
        return np.asarray(self._rounds, dtype=np.int64)

    @property
    def grads(self) -> np.ndarray:
        return self._grads[: self.n]

    def weighted_sum(self, t: int) -> np.ndarray:
        """``sum_s k(s, t) g_s`` over stored gradients."""
        if self.n == 0:
            return np.zeros(self.d)
        return self.kernel.column(self.rounds, t) @ self.grads

    def operator(self) -> SpanOperator:
        """``sum_s g_s (x) phi(s)`` as a span operator."""
        return SpanOperator.from_gradients(self.rounds, self.grads.copy())

    def push(self, g, t: int) -> "GramState":
        g = np.asarray(g, dtype=float).reshape(-1)
        if self.n and t <= self._rounds[-1]:
            raise ValueError(f"round {t} is not after the last stored round {self._rounds[-1]}")
        ktt = float(self.kernel.diag(t)[0])
        gsq = float(g @ g)
        cross = 0.0
        if self.n:
            cross = float(self.kernel.column(self.rounds, t) @ (self.grads @ g))
        self.s_sq = max(self.s_sq + ktt * gsq + 2 * cross, 0.0)
        self.sumsq += gsq * ktt
        if self.n == len(self._grads):
            self._grads = np.vstack([self._grads, np.zeros_like(self._grads)])
        self._grads[self.n] = g
        self._rounds.append(int(t))
        return self

    def check(self, rtol: float = 1e-9) -> bool:
        """Compare the incremental ``s_sq`` with the direct double sum."""
        direct = sum_norm_sq(list(zip(self._rounds, self.grads)), self.kernel)
        scale = max(float(np.sum(self.grads**2 * self.kernel.diag(self.rounds)[:, None])), 1e-300)
        return abs(direct - self.s_sq) <= rtol * max(abs(direct), scale)


def push_s_squared(state: GramState, g_t, t: int) -> GramState:
    return state.push(g_t, t)


def spd_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve, retrying once with ``1e-12 * trace`` diagonal jitter."""
    if matrix.shape[0] == 0:
        return np.zeros_like(rhs)
    try:
        return linalg.cho_solve(linalg.cho_factor(matrix, lower=True), rhs)
    except linalg.LinAlgError:
        pass
    jitter = 1e-12 * max(float(np.trace(matrix)), 1e-300)
    try:
        factor = linalg.cho_factor(matrix + jitter * np.eye(matrix.shape[0]), lower=True)
    except linalg.LinAlgError as exc:
        raise SolverError("inner system is not positive definite") from exc
    return linalg.cho_solve(factor, rhs)


def _cross_inner(a: SpanOperator, b: SpanOperator, kernel: Kernel) -> np.ndarray:
    """Matrix of HS inner products between the rank-one terms of ``a`` and ``b``."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    return kernel.cross(a.rounds, b.rounds) * (a.weighted_vectors() @ b.weighted_vectors().T)


def woodbury_solve(c: float, ops: SpanOperator, target: SpanOperator, kernel: Kernel) -> SpanOperator:
    """Return ``(c I + sum_s G_s G_s^*)^{-1} target`` in span representation.

    Each term of ``ops`` is one rank-one ``G_s`` (its coefficient scales it).
    Uses ``(1/c)(target - G (c I_n + G^* G)^{-1} G^* target)``.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    if len(ops) == 0:
        return target * (1.0 / c)
    inner = _cross_inner(ops, ops, kernel)
    rhs = _cross_inner(ops, target, kernel).sum(axis=1)
    alpha = spd_solve(c * np.eye(len(ops)) + inner, rhs)
    correction = SpanOperator(ops.rounds, ops.weighted_vectors(), -alpha)
    return (target + correction) * (1.0 / c)


def quad_form_inverse(c: float, ops: SpanOperator, probe: SpanOperator, kernel: Kernel) -> float:
    """``<probe, (c I + sum_s G_s G_s^*)^{-1} probe>_HS``."""
    value = woodbury_solve(c, ops, probe, kernel).inner(probe, kernel)
    return max(value, 0.0)


def apply_shifted(c: float, ops: SpanOperator, x: SpanOperator, kernel: Kernel) -> SpanOperator:
    """``(c I + sum_s G_s G_s^*) x``; used to check solves by their residual."""
    if len(ops) == 0:
        return x * c
    weights = _cross_inner(ops, x, kernel).sum(axis=1)
    return x * c + SpanOperator(ops.rounds, ops.weighted_vectors(), weights)


class BorderedInverse:
    """Inverse of ``c I + M_n`` grown one row/column at a time.

    ``M_n`` is a PSD gram matrix; appending a row costs O(n^2) through the
    Schur complement instead of refactorising.
    """

    def __init__(self, shift: float, capacity: int = 64):
        if shift <= 0:
            raise ValueError("shift must be positive")
        self.shift = float(shift)
        self.n = 0
        self._inv = np.zeros((capacity, capacity))

    @property
    def matrix(self) -> np.ndarray:
        return self._inv[: self.n, : self.n]

    def append(self, column: np.ndarray, diagonal: float) -> None:
        """Add a row/column: ``column`` against existing rows, ``diagonal`` of M."""
        n = self.n
        if n == len(self._inv):
            grown = np.zeros((2 * n, 2 * n))
            grown[:n, :n] = self._inv[:n, :n]
            self._inv = grown
        b = np.asarray(column, dtype=float)
        a_inv = self._inv[:n, :n]
        x = a_inv @ b if n else np.zeros(0)
        schur = self.shift + diagonal - float(b @ x)
        if schur <= 0:
            raise SolverError("bordered update lost positive definiteness")
        self._inv[:n, :n] += np.outer(x, x) / schur
        self._inv[:n, n] = -x / schur
        self._inv[n, :n] = -x / schur
        self._inv[n, n] = 1.0 / schur
        self.n += 1
