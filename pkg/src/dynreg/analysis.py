"""Regret metrics, comparator complexity measures and bound evaluators."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .hilbert import SolverError, SpanOperator, quad_form_inverse, spd_solve
from .kernels import Kernel

__all__ = [
    "RegretReport",
    "dynamic_regret",
    "path_length",
    "comparator_rkhs_norm",
    "effective_dimension",
    "spline_closed_forms",
    "spline_kernel_norm_sq",
    "spline_eigenvalues_stated",
    "logdet_sum_check",
    "bound_optimal_pl",
    "pf_static_bound",
    "vaw_bound",
    "curvature_gap",
    "shrink_comparators",
    "build_report",
]


def dynamic_regret(trace) -> float:
    """``sum_t (l_t(w_t) - l_t(u_t))`` over a list of round records."""
    return float(math.fsum(r.loss_play - r.loss_comp for r in trace))


def _as_matrix(comparators) -> np.ndarray:
    u = np.asarray(comparators, dtype=float)
    return u.reshape(len(u), -1)


def path_length(comparators) -> tuple[float, float, float]:
    """``(P_T, sum ||u_t - u_{t-1}||^2, max_t ||u_t||)`` with sums from ``t = 2``."""
    u = _as_matrix(comparators)
    if len(u) == 0:
        raise ValueError("need at least one comparator")
    jumps = np.linalg.norm(np.diff(u, axis=0), axis=1)
    return float(jumps.sum()), float(np.sum(jumps**2)), float(np.linalg.norm(u, axis=1).max())


def comparator_rkhs_norm(comparators, kernel: Kernel, rounds: Sequence[int] | None = None) -> float:
    """HS norm of the minimum-norm operator interpolating ``u_t`` at ``phi(t)``.

    Equals ``sqrt(sum_i u_(i)^T K^{-1} u_(i))`` over coordinates ``i``.
    """
    u = _as_matrix(comparators)
    if rounds is None:
        rounds = np.arange(1, len(u) + 1)
    k = kernel.gram(rounds)
    coef = spd_solve(k, u)
    return math.sqrt(max(float(np.sum(u * coef)), 0.0))


def effective_dimension(gram: np.ndarray, lam: float) -> float:
    """``Tr(K (K + lam I)^{-1})`` from the eigenvalues of ``K``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    gram = np.asarray(gram, dtype=float)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ValueError("gram must be square")
    if not np.allclose(gram, gram.T, rtol=1e-10, atol=1e-12):
        raise ValueError("gram must be symmetric")
    eig = np.linalg.eigvalsh(gram)
    top = max(float(eig[-1]), 0.0) if eig.size else 0.0
    if eig.size and eig[0] < -1e-8 * max(top, 1.0):
        raise ValueError(f"gram is not PSD (min eigenvalue {eig[0]:.3g})")
    eig = np.clip(eig, 0.0, None)
    return float(np.sum(eig / (eig + lam)))


def spline_closed_forms(T: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the ``min(s, t)`` gram on ``1..T`` and the eigenvalues of that inverse.

    The inverse is tridiagonal: 2 on the diagonal (1 in the last entry), -1 beside it.
    Its eigenvalues are ``4 sin^2((2k - 1) pi / (2 (2T + 1)))`` for ``k = 1..T``
    (not the ``4 sin^2(k pi / (2T + 1))`` of :func:`spline_eigenvalues_stated`).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    inv = 2 * np.eye(T) - np.eye(T, k=1) - np.eye(T, k=-1)
    inv[-1, -1] = 1.0
    k = np.arange(1, T + 1)
    return inv, 4 * np.sin((2 * k - 1) * np.pi / (2 * (2 * T + 1))) ** 2


def spline_eigenvalues_stated(T: int) -> np.ndarray:
    """``4 sin^2(k pi / (2T + 1))``, k = 1..T: the commonly quoted form, which is
    off by a half step for this matrix (it fits a last diagonal entry of 3)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    k = np.arange(1, T + 1)
    return 4 * np.sin(k * np.pi / (2 * T + 1)) ** 2


def _lifted_gram(rounds, grads, kernel: Kernel) -> np.ndarray:
    return kernel.cross(rounds, rounds) * (grads @ grads.T)


def logdet_sum_check(rounds, grads, kernel: Kernel, lam: float) -> tuple[float, float]:
    """Both sides of ``sum_t <G_t, S_t^{-1} G_t> <= d_eff(lam) log(e + e lmax / lam)``.

    ``S_t = lam I + sum_{s<=t} G_s G_s^*`` and ``G_t = g_t (x) phi(r_t)``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    rounds = np.asarray(rounds, dtype=np.int64)
    grads = np.asarray(grads, dtype=float).reshape(len(rounds), -1)
    lhs = 0.0
    for t in range(len(rounds)):
        ops = SpanOperator.from_gradients(rounds[: t + 1], grads[: t + 1])
        probe = SpanOperator.from_gradients(rounds[t : t + 1], grads[t : t + 1])
        lhs += quad_form_inverse(lam, ops, probe, kernel)
    m = _lifted_gram(rounds, grads, kernel)
    lmax = max(float(np.linalg.eigvalsh(m)[-1]), 0.0)
    rhs = effective_dimension(m, lam) * math.log(math.e + math.e * lmax / lam)
    return lhs, rhs


def bound_optimal_pl(M: float, P_T: float, grad_norm_sq_sum: float, kernel_diag_max: float,
                     T: int) -> float:
    """``sqrt((M^2 + M P_T) sum ||g||^2 kmax) log(1 + T) loglog(1 + T)``; unit constants."""
    if T <= 3:
        raise ValueError("the bound is stated for T > 3")
    if min(M, P_T, grad_norm_sq_sum, kernel_diag_max) < 0:
        raise ValueError("arguments must be nonnegative")
    lg = math.log1p(T)
    return math.sqrt((M * M + M * P_T) * grad_norm_sq_sum * kernel_diag_max) * lg * math.log(lg)


def pf_static_bound(norm_u: float, v: float, alpha: float, g0: float, g: float,
                    epsilon: float) -> float:
    """``4 G0 eps + 6 ||U|| max(sqrt(V log(||U||/alpha + 1)), G log(||U||/alpha + 1))``."""
    ell = math.log1p(norm_u / alpha)
    return 4 * g0 * epsilon + 6 * norm_u * max(math.sqrt(v * ell), g * ell)


def vaw_bound(lam: float, norm_u_sq: float, d_eff: float, y_max: float, T: int,
              kappa_max: float) -> float:
    """``lam ||u||^2 + d_eff(lam) y_max^2 log(e + e T kappa_max^2 / lam)``."""
    return lam * norm_u_sq + d_eff * y_max**2 * math.log(math.e + math.e * T * kappa_max**2 / lam)


def curvature_gap(a, b: float, beta: float, x, y) -> float:
    """Slack in ``l(x) - l(y) <= <grad l(x), x - y> - (beta/2) <grad l(x), x - y>^2``.

    For ``l(w) = (<a, w> - b)^2 / 2``; a nonnegative value means the inequality holds.
    """
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = float(a @ x) - b
    ry = float(a @ y) - b
    lin = rx * float(a @ (x - y))
    return lin - 0.5 * beta * lin**2 - (0.5 * rx**2 - 0.5 * ry**2)


def shrink_comparators(trace, radius: float) -> tuple[np.ndarray, float]:
    """Project each ``u_t`` onto the play ball and return ``(u_hat, penalty)``.

    ``penalty = sum_t <g_t, u_hat_t - u_t>`` is what the shrunk comparator
    costs on the linearized losses; the learner is untouched.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    u = np.array([np.asarray(r.u, dtype=float).reshape(-1) for r in trace])
    g = np.array([np.asarray(r.g, dtype=float).reshape(-1) for r in trace])
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    u_hat = u * np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    return u_hat, float(math.fsum(np.einsum("ij,ij->i", g, u_hat - u)))


@dataclass
class RegretReport:
    regret: float
    P_T: float
    P2_T: float
    M: float
    rkhs_norm: float
    bound: float
    ratio: float

    def as_dict(self) -> dict:
        return asdict(self)


def build_report(trace, kernel: Kernel, *, rkhs: bool = True) -> RegretReport:
    """Assemble a :class:`RegretReport` from a completed trace."""
    T = len(trace)
    u = np.array([r.u for r in trace])
    regret = dynamic_regret(trace)
    p, p2, m = path_length(u)
    norm = math.nan
    if rkhs:
        try:
            norm = comparator_rkhs_norm(u, kernel)
        except SolverError:  # singular gram: reported as nan
            norm = math.nan
    gsq = float(sum(float(np.dot(r.g, r.g)) for r in trace))
    bound = math.nan
    if T > 3:
        kmax = kernel.diag_max(T)
        bound = bound_optimal_pl(m, p, gsq, kmax, T)
    ratio = regret / bound if bound and bound > 0 and math.isfinite(bound) else math.nan
    return RegretReport(regret, p, p2, m, norm, bound, ratio)


def spline_kernel_norm_sq(v) -> float:
    """``v^T K^{-1} v`` for the spline gram: ``v_1^2 + sum_{t>=2} (v_t - v_{t-1})^2``."""
    v = np.asarray(v, dtype=float).reshape(len(v), -1)
    return float(np.sum(v[0] ** 2) + np.sum(np.diff(v, axis=0) ** 2))

