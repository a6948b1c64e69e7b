"""Numerical checks of the interpolation constructions, the c(T) bound and the
Dirac-kernel equivalence, plus the suite driven by ``dynreg verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .analysis import spline_closed_forms, spline_eigenvalues_stated
from .kernels import (
    DEFAULT_QUAD_TOL,
    DiracKernel,
    QuadratureError,
    SpectralDensity,
    SplineKernel,
    build_ti_table,
    density_mass,
)
from .learners import FTRL, ParameterFree

__all__ = [
    "GridError",
    "Interpolant",
    "sinc_S",
    "sinc_interp",
    "bump_B",
    "bump_bT",
    "bump_constant",
    "c_km",
    "DiscretePLReport",
    "check_discrete_pl",
    "SquaredPLReport",
    "sinc_derivative_gram",
    "sinc_energy_on_grid",
    "check_discrete_squared_pl",
    "c_of_T_bound",
    "c_of_T_closed_bound",
    "DiracEquivalenceReport",
    "dirac_equivalence",
    "CheckResult",
    "run_suite",
]


class GridError(ValueError):
    """Grid step too coarse for the requested estimate."""


def sinc_S(x):
    """``S(x) = sinc(x) * sinc(x/2)`` with normalised sinc; ``S(0) = 1``."""
    x = np.asarray(x, dtype=float)
    return np.sinc(x) * np.sinc(x / 2)


def _values(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v.reshape(len(v), -1)


def sinc_interp(v, t):
    """``f(t) = sum_{l=1}^T v_l S(t - l)``; ``t`` may be scalar or an array."""
    v = _values(v)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    ell = np.arange(1, len(v) + 1)
    out = sinc_S(tt[:, None] - ell[None, :]) @ v
    return out[0] if np.ndim(t) == 0 else out


def bump_constant(m: int) -> float:
    return 2 * math.exp(special.gammaln(1.5 + 2 * m) - special.gammaln(1 + 2 * m)) / math.sqrt(math.pi)


def bump_B(x, m: int = 1):
    """``B(x) = c_m (1 - 4 x^2)_+^{2m}``, normalised to unit mass."""
    if m < 1:
        raise ValueError("m must be >= 1")
    x = np.asarray(x, dtype=float)
    return bump_constant(m) * np.clip(1 - 4 * x * x, 0.0, None) ** (2 * m)


def _bump_cdf(y, m: int):
    """``int_{-1/2}^{y} B``; Gauss-Legendre with 2m+1 nodes is exact for the degree-4m integrand."""
    y = np.clip(np.asarray(y, dtype=float), -0.5, 0.5)
    nodes, weights = np.polynomial.legendre.leggauss(2 * m + 1)
    half = (y + 0.5) / 2
    pts = -0.5 + half[..., None] * (nodes + 1)
    return np.sum(weights * bump_B(pts, m), axis=-1) * half


def bump_bT(T: int, m: int, t):
    """``b_T(t) = int_0^t B(x - 1/2) - B(x - T - 1/2) dx``: 1 on ``[1, T]``, 0 off ``(0, T+1)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    t = np.asarray(t, dtype=float)
    out = _bump_cdf(t - 0.5, m) - _bump_cdf(t - T - 0.5, m)
    return float(out) if out.ndim == 0 else out


def c_km(k: int, m: int) -> float:
    """``C_{k,m} = (8 (2m + 3/2))^{k+1} / pi^{2m + 3/2}``."""
    return (8 * (2 * m + 1.5)) ** (k + 1) / math.pi ** (2 * m + 1.5)


@dataclass
class Interpolant:
    """``u(t) = f(t) b_T(t)`` through the points ``(l, v_l)``, ``l = 1..T``."""

    values: np.ndarray
    m: int = 1
    h: float = 1 / 256

    def __post_init__(self):
        self.values = _values(self.values)
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def T(self) -> int:
        return len(self.values)

    def f(self, t):
        return sinc_interp(self.values, t)

    def b(self, t):
        return bump_bT(self.T, self.m, t)

    def u(self, t):
        t = np.asarray(t, dtype=float)
        fb = sinc_interp(self.values, np.atleast_1d(t)) * np.atleast_1d(self.b(t))[:, None]
        return fb[0] if t.ndim == 0 else fb

    def derivative(self, t, order: int = 1, h: float | None = None):
        """Central finite difference of ``u`` of the given order."""
        h = self.h if h is None else h
        t = np.atleast_1d(np.asarray(t, dtype=float))
        acc = np.zeros((len(t), self.values.shape[1]))
        if order == 1:
            return (self.u(t + h) - self.u(t - h)) / (2 * h)
        for k in range(order + 1):
            shift = (order / 2 - k) * h
            acc += (-1) ** k * special.comb(order, k) * self.u(t + shift)
        return acc / h**order

    def grid(self, h: float | None = None) -> np.ndarray:
        h = self.h if h is None else h
        n = int(round((self.T + 1) / h))
        return np.linspace(0.0, self.T + 1.0, n + 1)


@dataclass
class DiscretePLReport:
    l1: float
    l1_refined: float
    bound: float
    interp_residual: float
    linf_residual: float
    linf_bound: float
    near_bound: bool

    @property
    def passed(self) -> bool:
        return self.l1 <= self.bound * (1 + 1e-2) and self.linf_residual <= self.linf_bound


def check_discrete_pl(v, m: int = 1, h: float = 1 / 256) -> DiscretePLReport:
    """Grid estimate of ``||u'||_{L1}`` against ``2 C_{1,m} (||v_1|| + sum ||v_t - v_{t-1}||)``.

    Also reports ``max |u - u^{(2m)}|`` against ``12 (1 + C_{2m,m}) max ||v_l||`` and a
    refined ``L1`` value at ``h/2`` (Richardson).
    """
    if h > 0.01:
        raise GridError(f"grid step {h} is coarser than 0.01")
    interp = Interpolant(v, m, h)
    vals = interp.values
    ell = np.arange(1, interp.T + 1)
    interp_residual = float(np.max(np.abs(interp.u(ell.astype(float)) - vals))) if interp.T else 0.0

    def l1(step):
        grid = interp.grid(step)
        return float(integrate.trapezoid(np.linalg.norm(interp.derivative(grid, 1, step), axis=1), grid))

    coarse, fine = l1(h), l1(h / 2)
    refined = fine + (fine - coarse) / 3
    variation = float(np.linalg.norm(vals[0]) + np.sum(np.linalg.norm(np.diff(vals, axis=0), axis=1)))
    bound = 2 * c_km(1, m) * variation
    grid = interp.grid(h)
    resid = interp.u(grid) - interp.derivative(grid, 2 * m, max(h, 1 / 64))
    linf = float(np.max(np.linalg.norm(resid, axis=1)))
    linf_bound = 12 * (1 + c_km(2 * m, m)) * float(np.max(np.linalg.norm(vals, axis=1)))
    near = bool(bound > 0 and max(coarse, refined) >= 0.95 * bound)
    return DiscretePLReport(coarse, refined, bound, interp_residual, linf, linf_bound, near)


def sinc_derivative_gram(T: int) -> np.ndarray:
    """``D_ij = int_R sinc'(t - i) sinc'(t - j) dt``: ``pi^2/3`` on the diagonal, ``2(-1)^n/n^2`` off it."""
    n = np.subtract.outer(np.arange(T), np.arange(T)).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 2 * np.where(n % 2 == 0, 1.0, -1.0) / n**2
    np.fill_diagonal(d, math.pi**2 / 3)
    return d


@dataclass
class SquaredPLReport:
    energy: float
    variation: float
    ratio: float
    constant: float = 1.25

    @property
    def passed(self) -> bool:
        return self.energy <= self.constant * self.variation * (1 + 1e-2)


def check_discrete_squared_pl(v, constant: float = 1.25) -> SquaredPLReport:
    """``||u'||^2_{L2(R)}`` for ``u(t) = sum_l v_l sinc(t - l)`` against
    ``constant * (||v_1||^2 + sum ||v_t - v_{t-1}||^2)``.

    The energy is exact (Parseval): ``sum_i v_(i)^T D v_(i)`` with ``D`` from
    :func:`sinc_derivative_gram`.
    """
    vals = _values(v)
    energy = float(np.sum(vals * (sinc_derivative_gram(len(vals)) @ vals)))
    variation = float(np.sum(vals[0] ** 2) + np.sum(np.diff(vals, axis=0) ** 2))
    ratio = energy / variation if variation > 0 else 0.0
    return SquaredPLReport(energy, variation, ratio, constant)


def _sinc_prime(x):
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0, 1.0, x)
    return np.where(x == 0, 0.0, (np.cos(np.pi * safe) - np.sinc(safe)) / safe)


def sinc_energy_on_grid(v, h: float = 1 / 64, pad: float = 200.0) -> float:
    """Trapezoid estimate of ``||u'||^2`` over ``[1 - pad, T + pad]``; truncation error ~ 1/pad."""
    vals = _values(v)
    grid = np.arange(1 - pad, len(vals) + pad + h / 2, h)
    deriv = _sinc_prime(grid[:, None] - np.arange(1, len(vals) + 1)[None, :]) @ vals
    return float(integrate.trapezoid(np.sum(deriv**2, axis=1), grid))


def c_of_T_closed_bound(T: float) -> float:
    """``(4 pi^2 e^2)^2 log^2(T) loglog^2(T)``."""
    return (4 * math.pi**2 * math.e**2) ** 2 * math.log(T) ** 2 * math.log(math.log(T)) ** 2


def c_of_T_bound(density: SpectralDensity | None = None, T: int = 10, alpha: float | None = None,
                 quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """``2 pi (T+1)^2 int_0^alpha R(x) x dx + (2/pi) int_alpha^inf R(x)/x dx``; ``alpha = 1/T`` by default."""
    density = density or SpectralDensity()
    if T <= 2:
        raise ValueError("T must exceed 2")
    alpha = 1.0 / T if alpha is None else alpha
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    kw = dict(epsabs=0.0, epsrel=quad_tol, limit=500)
    near, err1 = integrate.quad(lambda x: density.r(x) * x, 0.0, alpha, **kw)
    far, err2 = 0.0, 0.0
    edges = [alpha] + [e for e in (1.0, 10.0, 100.0) if e > alpha]
    for lo, hi in zip(edges, edges[1:] + [math.inf]):
        part, err = integrate.quad(lambda x: density.r(x) / x, lo, hi, **kw)
        far += part
        err2 += err
    value = 2 * math.pi * (T + 1) ** 2 * near + (2 / math.pi) * far
    if not math.isfinite(value):
        raise QuadratureError("c(T) quadrature diverged")
    return value


@dataclass
class DiracEquivalenceReport:
    max_play_diff: float
    max_operator_diff: float
    regret_diff: float
    s_diff: float
    v_diff: float
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return max(self.max_play_diff, self.max_operator_diff, self.regret_diff, self.s_diff,
                   self.v_diff) <= self.tol


def _flat_pf(G: float, eps: float):
    """Straight transcription of parameter-free FTRL on a flat vector space."""

    def play(theta, v):
        s = float(np.linalg.norm(theta))
        if s == 0:
            return np.zeros_like(theta)
        alpha = eps * G / (math.sqrt(v) * math.log(v / G**2) ** 2)
        expo = s * s / (36 * v) if s <= 6 * v / G else s / (3 * G) - v / G**2
        return -theta / s * alpha * (math.exp(expo) - 1)

    return play


def dirac_equivalence(T: int, d: int, seed: int = 0, learner: str = "pf",
                      eta: float = 0.1, G: float = 1.0, epsilon: float = 1.0) -> DiracEquivalenceReport:
    """Run ``learner`` through the Dirac-kernel reduction and on the flat ``R^{dT}`` embedding.

    Compares per-round plays, the full iterate (as a ``d x T`` array), the
    cumulative regret and the running ``S_t`` and ``V_t``.
    """
    if T * d > 4096:
        raise ValueError("T * d must be <= 4096")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((T, d))
    g /= np.maximum(1.0, np.linalg.norm(g, axis=1, keepdims=True))
    g *= G
    u = rng.standard_normal((T, d))
    kernel = DiracKernel()
    if learner == "pf":
        model = ParameterFree(kernel, d, G=G, epsilon=epsilon)
        flat_play = _flat_pf(G, epsilon)
    elif learner == "ftrl":
        model = FTRL(kernel, d, eta=eta)
        flat_play = lambda theta, v: -eta * theta  # noqa: E731
    else:
        raise ValueError(f"unknown learner {learner!r}")

    theta = np.zeros(d * T)
    v_flat = 4 * G**2
    play_diff = op_diff = s_diff = v_diff = 0.0
    reg_kernel = reg_flat = 0.0
    for t in range(1, T + 1):
        w = model.play(t)
        x = flat_play(theta, v_flat)
        w_flat = x[(t - 1) * d : t * d]
        dense = np.zeros((T, d))
        op = model.operator(t)
        for r, vec in zip(op.rounds, op.weighted_vectors()):
            dense[r - 1] += vec
        play_diff = max(play_diff, float(np.max(np.abs(w - w_flat))))
        op_diff = max(op_diff, float(np.max(np.abs(dense.reshape(-1) - x))))
        reg_kernel += float(g[t - 1] @ (w - u[t - 1]))
        g_tilde = np.zeros(d * T)
        g_tilde[(t - 1) * d : t * d] = g[t - 1]
        u_tilde = u.reshape(-1)
        reg_flat += float(g_tilde @ (x - u_tilde))
        model.update(t, g[t - 1])
        theta += g_tilde
        v_flat += float(g_tilde @ g_tilde)
        s_diff = max(s_diff, abs(math.sqrt(model.state.s_sq) - float(np.linalg.norm(theta))))
        if learner == "pf":
            v_diff = max(v_diff, abs(model.state.v - v_flat))
    return DiracEquivalenceReport(play_diff, op_diff, abs(reg_kernel - reg_flat), s_diff, v_diff)


@dataclass
class CheckResult:
    name: str
    measured: float
    limit: float
    passed: bool
    detail: str = ""


@dataclass
class _Check:
    name: str
    run: Callable[[], tuple[float, float, str]]
    levels: tuple = ("fast", "full")


def _max_err(pairs) -> float:
    return max(float(np.max(np.abs(a - b))) for a, b in pairs)


def _spline_inverse():
    pairs = [(np.linalg.inv(SplineKernel().gram(np.arange(1, T + 1))), spline_closed_forms(T)[0])
             for T in (2, 6, 64)]
    return _max_err(pairs), 1e-10, "T in {2, 6, 64}"


def _spline_eigs():
    pairs = []
    for T in (8, 32):
        inv = np.linalg.inv(SplineKernel().gram(np.arange(1, T + 1)))
        pairs.append((np.sort(np.linalg.eigvalsh(inv)), np.sort(spline_closed_forms(T)[1])))
    return _max_err(pairs), 1e-10, "T in {8, 32}"


def _spline_eigs_stated():
    pairs = []
    for T in (8, 32):
        inv = np.linalg.inv(SplineKernel().gram(np.arange(1, T + 1)))
        pairs.append((np.sort(np.linalg.eigvalsh(inv)), spline_eigenvalues_stated(T)))
    return _max_err(pairs), 1e-10, "T in {8, 32}, 4 sin^2(k pi / (2T + 1))"


def _deff_bound():
    worst = 0.0
    for T in (10, 100, 1000):
        k = SplineKernel().gram(np.arange(1, T + 1))
        eig = np.linalg.eigvalsh(k)
        for lam in (0.1, 1, 10, 100):
            deff = float(np.sum(eig / (eig + lam)))
            worst = max(worst, deff / (math.pi * T / (2 * math.sqrt(lam))))
    return worst, 1.0, "max d_eff / (pi T / (2 sqrt(lam)))"


def _ti_mass():
    return density_mass(SpectralDensity()), 8 * math.pi**2, "int Q vs 8 pi^2"


def _ti_halving():
    a = build_ti_table(SpectralDensity(), 64, DEFAULT_QUAD_TOL).values
    b = build_ti_table(SpectralDensity(), 64, DEFAULT_QUAD_TOL / 2).values
    return float(np.max(np.abs(a - b) / np.abs(b))), 1e-6, "lags 0..64"


def _dirac():
    worst = 0.0
    for T, d in ((8, 2), (16, 4)):
        for name in ("pf", "ftrl"):
            rep = dirac_equivalence(T, d, seed=T + d, learner=name)
            worst = max(worst, rep.max_play_diff, rep.max_operator_diff, rep.regret_diff,
                        rep.s_diff, rep.v_diff)
    return worst, 1e-12, "(T, d) in {(8, 2), (16, 4)}, pf and ftrl"


def _sinc_abs_sum():
    x = np.linspace(-3, 3, 6001)
    ell = np.arange(-2000, 2001)
    total = np.abs(sinc_S(x[:, None] - ell[None, :])).sum(axis=1)
    return float(total.max()), 4.0, "sup_t sum_l |S(t - l)|"


def _bump_mass():
    errs = [abs(integrate.quad(lambda x: float(bump_B(x, m)), -0.5, 0.5, epsabs=1e-14)[0] - 1)
            for m in (1, 2)]
    return max(errs), 1e-10, "m in {1, 2}"


def _random_values(n: int, seed: int):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(int(rng.integers(2, 13))) for _ in range(n)]


def _discrete_pl(n: int):
    def run():
        worst, resid = 0.0, 0.0
        flagged = 0
        for v in _random_values(n, 11):
            rep = check_discrete_pl(v, 1)
            worst = max(worst, rep.l1 / (rep.bound * (1 + 1e-2)), rep.linf_residual / rep.linf_bound)
            resid = max(resid, rep.interp_residual)
            flagged += rep.near_bound
        if resid > 1e-8:
            worst = max(worst, math.inf)
        return worst, 1.0, f"{n} random v, max interpolation residual {resid:.2e}, {flagged} near bound"

    return run


def _squared_pl():
    ratios = [check_discrete_squared_pl(v).ratio for v in _random_values(20, 11)]
    return max(ratios), 1.25 * (1 + 1e-2), "max ||u'||^2 / (v_1^2 + sum dv^2), sinc interpolant over R"


def _c_of_T_10():
    return c_of_T_bound(T=10), c_of_T_closed_bound(10), "T = 10, alpha = 1/T"


def _c_of_T_grid():
    vals = [c_of_T_bound(T=T) for T in (5, 10, 20, 40)]
    ok = all(b >= a for a, b in zip(vals, vals[1:])) and all(
        v <= c_of_T_closed_bound(T) for v, T in zip(vals, (5, 10, 20, 40)))
    detail = "c(T) for T in {5, 10, 20, 40}: " + ", ".join(f"{v:.4g}" for v in vals)
    return (0.0 if ok else 2.0), 1.0, detail


CHECKS = [
    _Check("spline_inverse", _spline_inverse),
    _Check("spline_eigenvalues", _spline_eigs),
    _Check("spline_eigenvalues_stated", _spline_eigs_stated, ("full",)),
    _Check("deff_bound", _deff_bound),
    _Check("ti_mass", _ti_mass),
    _Check("ti_table_halving", _ti_halving),
    _Check("dirac_equivalence", _dirac),
    _Check("sinc_abs_sum", _sinc_abs_sum),
    _Check("bump_mass", _bump_mass),
    _Check("discrete_pl", _discrete_pl(3), ("fast",)),
    _Check("discrete_pl", _discrete_pl(20), ("full",)),
    _Check("c_of_T_10", _c_of_T_10),
    _Check("c_of_T_grid", _c_of_T_grid, ("full",)),
    _Check("discrete_squared_pl", _squared_pl, ("full",)),
]


def run_suite(level: str = "fast", tolerance_factor: float = 1.0) -> list[CheckResult]:
    """Run every check registered for ``level``; a check passes when ``measured <= limit * factor``."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    out = []
    for check in CHECKS:
        if level not in check.levels:
            continue
        measured, limit, detail = check.run()
        limit *= tolerance_factor
        out.append(CheckResult(check.name, measured, limit, bool(measured <= limit), detail))
    return out

