"""Reproducing kernels over integer round indices.

Four kernels are provided: the Dirac kernel (``k(s, t) = [s == t]``), the
linear spline kernel ``min(s, t)``, a Gaussian control kernel, and the
translation-invariant kernel obtained as the Fourier transform of a
nonnegative spectral density.  The last one has no closed form; its values
at integer lags are tabulated once by numerical quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "KernelRangeError",
    "QuadratureError",
    "SpectralDensity",
    "TIKernelTable",
    "Kernel",
    "DiracKernel",
    "SplineKernel",
    "GaussianKernel",
    "TranslationInvariantKernel",
    "kernel_eval",
    "gram",
    "build_ti_table",
    "density_mass",
    "horizon_free_kernel",
    "DEFAULT_QUAD_TOL",
]

DEFAULT_QUAD_TOL = 1e-8
_LOGLOG_PI = math.log(math.log(math.pi))


class KernelRangeError(ValueError):
    """A lag or round index outside what the kernel can evaluate."""


class QuadratureError(RuntimeError):
    """Quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, lag: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.lag = lag
        self.residual = residual


@dataclass(frozen=True)
class SpectralDensity:
    """Horizon-free spectral density and its companion function ``R``.

    ``Q(w) = scale * (s/2) loglog(pi) / (|w| (1 + (|w|/2pi)^{2m})^{s/2m}
    log(pi + |w|^{-s}) log^2 log(pi + |w|^{-s}))``.  The defaults ``s = 1/2``,
    ``m = 1`` give the density of the horizon-free kernel.
    """

    s_exponent: float = 0.5
    m: int = 1
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.s_exponent < 2 * self.m:
            raise ValueError("need 0 < s_exponent < 2m")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def q(self, w):
        """Evaluate the density; ``Q(0)`` is reported as ``inf``."""
        w = np.abs(np.asarray(w, dtype=float))
        s, m = self.s_exponent, self.m
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            big = np.log(math.pi + w ** (-s))
            out = (self.scale * 0.5 * s * _LOGLOG_PI) / (
                w * (1.0 + (w / (2 * math.pi)) ** (2 * m)) ** (s / (2 * m)) * big * np.log(big) ** 2
            )
        return np.where(w == 0, np.inf, out)

    def r(self, x):
        """``R(x) = 2 pi / (x (1 + (x/2pi)^{2m}) Q(x))`` (odd in ``x``)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return 2 * math.pi / (x * (1.0 + (x / (2 * math.pi)) ** (2 * self.m)) * self.q(x))

    # The substitution u = S(w), with S(w) = loglog(pi) / (2 loglog(pi + w^-s)),
    # maps (0, inf) onto (0, 1/2) and turns Q dw into h(w) du with h bounded.
    def _s_of_w(self, w: float) -> float:
        if w == 0:
            return 0.0
        return _LOGLOG_PI / (2 * math.log(math.log(math.pi + w ** (-self.s_exponent))))

    def _w_of_u(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", divide="ignore"):
            a = np.exp(_LOGLOG_PI / (2 * u))  # log(pi + w^-s)
            # w^-s = e^a - pi; for large a the result underflows to w = 0
            w = np.where(a > 700, 0.0, np.expm1(np.minimum(a, 700)) + 1 - math.pi)
            w = np.where(w > 0, w ** (-1.0 / self.s_exponent), np.inf)
        return np.where(a > 700, 0.0, w)

    def _h(self, w):
        s, m = self.s_exponent, self.m
        w = np.asarray(w, dtype=float)
        return self.scale * (1 + math.pi * w**s) / (1 + (w / (2 * math.pi)) ** (2 * m)) ** (s / (2 * m))


@dataclass(frozen=True)
class TIKernelTable:
    """Kernel values ``k(tau)`` at integer lags ``0..t_max``."""

    values: np.ndarray
    quad_tol: float
    density: SpectralDensity
    residuals: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def t_max(self) -> int:
        return len(self.values) - 1

    def lag(self, tau):
        tau = np.abs(np.asarray(tau))
        if np.any(tau > self.t_max):
            raise KernelRangeError(f"lag {int(np.max(tau))} exceeds table t_max={self.t_max}")
        return self.values[tau]

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lag", "value"])
        for tau, value in enumerate(self.values):
            writer.writerow([tau, format(float(value), ".17g")])


def _mass_integral(density: SpectralDensity, tol: float) -> tuple[float, float]:
    val, err = integrate.quad(
        lambda u: float(density._h(density._w_of_u(u))), 0.0, 0.5, epsabs=0.0, epsrel=tol, limit=500
    )
    return 2 * val, 2 * err


def _lag_integral(density: SpectralDensity, tau: int, tol: float, scale: float) -> float:
    """``2 * int_0^inf Q(w) cos(2 pi w tau) dw`` for ``tau >= 1``."""
    freq = 2 * math.pi * tau
    # below w_lo the cosine stays within its first quarter period
    w_lo = 1.0 / (4 * tau + 1)
    u_lo = density._s_of_w(w_lo)

    def low(u):
        w = density._w_of_u(u)
        return float(density._h(w) * math.cos(freq * w))

    a, _ = integrate.quad(low, 0.0, u_lo, epsabs=0.0, epsrel=tol, limit=500)
    # moderate frequencies: QUADPACK QAWO (Clenshaw-Curtis moments for cos weight)
    b, _ = integrate.quad(
        lambda w: float(density.q(w)), w_lo, 1.0, weight="cos", wvar=freq,
        epsabs=tol * scale * 1e-2, epsrel=tol, limit=max(200, 8 * tau),
    )
    # semi-infinite Fourier tail: QUADPACK QAWF
    c, _ = integrate.quad(
        lambda w: float(density.q(w)), 1.0, np.inf, weight="cos", wvar=freq,
        epsabs=tol * scale * 1e-2, limlst=200,
    )
    return 2 * (a + b + c)


def density_mass(density: SpectralDensity, quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """Total mass ``int Q``, which is also ``k(t, t)`` of the induced kernel."""
    _check_tol(quad_tol)
    coarse, _ = _mass_integral(density, quad_tol)
    fine, _ = _mass_integral(density, quad_tol / 2)
    residual = abs(coarse - fine) / abs(fine)
    if residual > quad_tol:
        raise QuadratureError(f"mass integral not converged (residual {residual:.3g})", 0, residual)
    return fine


def _check_tol(quad_tol: float) -> None:
    if not 0 < quad_tol <= 1e-2:
        raise ValueError("quad_tol must lie in (0, 1e-2]")


@lru_cache(maxsize=16)
def build_ti_table(
    density: SpectralDensity, t_max: int, quad_tol: float = DEFAULT_QUAD_TOL
) -> TIKernelTable:
    """Tabulate ``k(tau) = 2 int_0^inf Q(w) cos(2 pi w tau) dw`` for ``tau = 0..t_max``.

    Each value is computed at ``quad_tol`` and ``quad_tol / 2``; the relative
    difference is kept as the residual estimate and must not exceed
    ``quad_tol``.  Results are cached, so repeated experiments share tables.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    _check_tol(quad_tol)
    k0 = density_mass(density, quad_tol)
    values = np.empty(t_max + 1)
    residuals = np.zeros(t_max + 1)
    values[0] = k0
    for tau in range(1, t_max + 1):
        coarse = _lag_integral(density, tau, quad_tol, k0)
        fine = _lag_integral(density, tau, quad_tol / 2, k0)
        # relative to |k(tau)|, floored at tol * k0 to survive near-zero lags
        residuals[tau] = abs(coarse - fine) / max(abs(fine), quad_tol * k0)
        values[tau] = fine
    worst = int(np.argmax(residuals))
    if residuals[worst] > quad_tol:
        raise QuadratureError(
            f"lag {worst} not converged (residual {residuals[worst]:.3g} > {quad_tol:g})",
            worst,
            float(residuals[worst]),
        )
    return TIKernelTable(values=values, quad_tol=quad_tol, density=density, residuals=residuals)


class Kernel:
    """Base class: a symmetric PSD kernel on positive integer rounds."""

    name = "kernel"

    def __call__(self, s: int, t: int) -> float:
        _check_rounds((s, t))
        return float(self.cross(np.array([s]), np.array([t]))[0, 0])

    def cross(self, a, b) -> np.ndarray:
        """Matrix ``[k(a_i, b_j)]`` for integer arrays ``a`` and ``b``."""
        raise NotImplementedError

    def column(self, rounds, t: int) -> np.ndarray:
        """Vector ``[k(r, t) for r in rounds]``."""
        return self.cross(np.asarray(rounds, dtype=np.int64), np.array([t], dtype=np.int64))[:, 0]

    def diag(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.int64))
        return np.array([self.cross(t[i : i + 1], t[i : i + 1])[0, 0] for i in range(len(t))])

    def diag_max(self, horizon: int) -> float:
        """``max_{t <= horizon} k(t, t)``."""
        return float(np.max(self.diag(np.arange(1, horizon + 1))))

    def gram(self, rounds) -> np.ndarray:
        return gram(self, rounds)


class DiracKernel(Kernel):
    name = "dirac"

    def cross(self, a, b):
        return (np.asarray(a)[:, None] == np.asarray(b)[None, :]).astype(float)

    def diag_max(self, horizon):
        return 1.0


class SplineKernel(Kernel):
    name = "spline"

    def cross(self, a, b):
        return np.minimum(np.asarray(a)[:, None], np.asarray(b)[None, :]).astype(float)

    def diag_max(self, horizon):
        return float(horizon)


class GaussianKernel(Kernel):
    name = "gaussian"

    def __init__(self, bandwidth: float = 1.0):
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        self.bandwidth = float(bandwidth)

    def cross(self, a, b):
        diff = np.asarray(a, dtype=float)[:, None] - np.asarray(b, dtype=float)[None, :]
        return np.exp(-0.5 * (diff / self.bandwidth) ** 2)

    def diag_max(self, horizon):
        return 1.0

    def __repr__(self):
        return f"GaussianKernel(bandwidth={self.bandwidth})"


class TranslationInvariantKernel(Kernel):
    """``k(s, t) = table[|s - t|]``; lookups beyond the table raise."""

    name = "translation_invariant"

    def __init__(self, table: TIKernelTable):
        self.table = table

    @classmethod
    def from_density(cls, density: SpectralDensity, t_max: int, quad_tol: float = DEFAULT_QUAD_TOL):
        return cls(build_ti_table(density, t_max, quad_tol))

    def cross(self, a, b):
        lags = np.abs(np.asarray(a, dtype=np.int64)[:, None] - np.asarray(b, dtype=np.int64)[None, :])
        return self.table.lag(lags)

    def diag(self, t):
        return np.full(np.atleast_1d(t).shape, self.table.values[0])

    def diag_max(self, horizon):
        return float(self.table.values[0])

    def __repr__(self):
        return f"TranslationInvariantKernel(t_max={self.table.t_max}, quad_tol={self.table.quad_tol})"


def horizon_free_kernel(t_max: int, quad_tol: float = DEFAULT_QUAD_TOL) -> TranslationInvariantKernel:
    """The translation-invariant kernel of the default (s=1/2, m=1) density."""
    return TranslationInvariantKernel.from_density(SpectralDensity(), t_max, quad_tol)


def _check_rounds(rounds: Iterable[int]) -> None:
    for r in rounds:
        if int(r) != r or r < 1:
            raise KernelRangeError(f"round index must be a positive integer, got {r!r}")


def kernel_eval(spec: Kernel, s: int, t: int) -> float:
    return spec(s, t)


def gram(spec: Kernel, rounds: Sequence[int]) -> np.ndarray:
    """Gram matrix over a nonempty, strictly increasing list of rounds."""
    rounds = np.asarray(rounds, dtype=np.int64)
    if rounds.size == 0:
        raise ValueError("rounds must be nonempty")
    if np.any(np.diff(rounds) <= 0):
        raise ValueError("rounds must be strictly increasing")
    _check_rounds(rounds[:1])
    return spec.cross(rounds, rounds)
