"""Static-regret learners run on the lifted losses ``G_t = g_t (x) phi(t)``.

Every learner keeps its iterate implicitly as a combination of past
``G_s`` and only ever touches kernel values.  First-order learners follow the
``play(t)`` / ``update(t, g)`` protocol used by :func:`dynreg.reduction.run_reduction`.
"""

from __future__ import annotations

import math

import numpy as np

from .hilbert import BorderedInverse, GramState, SpanOperator
from .kernels import Kernel, SplineKernel

__all__ = [
    "pf_potential",
    "pf_alpha",
    "ParameterFree",
    "FTRL",
    "FullMatrix",
    "fullmatrix_potential_derivative",
    "KONS",
    "VAWForecaster",
]


def pf_alpha(v: float, epsilon: float, g0: float) -> float:
    return epsilon * g0 / (math.sqrt(v) * math.log(v / g0**2) ** 2)


def pf_potential(s: float, v: float, epsilon: float, g0: float) -> float:
    """Parameter-free FTRL potential ``Psi(S, V)``.

    Past ``S = 6V/G0`` the exponent is ``S/(3 G0) - V/G0^2``, which meets the
    quadratic branch continuously at the switch point.
    """
    if s <= 6 * v / g0:
        exponent = s * s / (36 * v)
    else:
        exponent = s / (3 * g0) - v / g0**2
    return pf_alpha(v, epsilon, g0) * math.expm1(exponent)


class ParameterFree:
    """Kernelized parameter-free FTRL.

    ``w_t = -(sum_{s<t} k(s, t) g_s) Psi(S_t, V_t) / S_t``.  With ``G=None``
    the learner is scale-free: it takes its Lipschitz estimate from
    :meth:`set_hint` (the running max of past gradient norms) and plays zero
    until a nonzero hint arrives.
    """

    def __init__(self, kernel: Kernel, d: int, G: float | None = 1.0, epsilon: float = 1.0,
                 horizon: int | None = None):
        self.kernel = kernel
        self.d = d
        self.epsilon = epsilon
        if isinstance(kernel, SplineKernel) and horizon is None:
            raise ValueError("the spline kernel needs a horizon to bound k(t, t)")
        self.kmax = kernel.diag_max(horizon or 1)
        self.G = G
        g0 = G * math.sqrt(self.kmax) if G is not None else 0.0
        self.state = GramState(kernel, d, g0)

    @property
    def g0(self) -> float:
        return self.state.g0

    def set_hint(self, h: float) -> None:
        if self.G is None:
            self.state.g0 = max(self.state.g0, h * math.sqrt(self.kmax))

    def _scale(self) -> float:
        st = self.state
        if st.s_sq <= 0 or st.g0 <= 0:
            return 0.0
        s = math.sqrt(st.s_sq)
        return pf_potential(s, st.v, self.epsilon, st.g0) / s

    def play(self, t: int) -> np.ndarray:
        scale = self._scale()
        if scale == 0.0:
            return np.zeros(self.d)
        return -scale * self.state.weighted_sum(t)

    def operator(self, t: int) -> SpanOperator:
        """The iterate ``W_t`` as a span operator (before round ``t`` is seen)."""
        return self.state.operator() * (-self._scale())

    def update(self, t: int, g) -> None:
        self.state.push(g, t)


class FTRL:
    """FTRL with a quadratic regularizer: ``w_t = -eta sum_{s<t} k(s, t) g_s``."""

    def __init__(self, kernel: Kernel, d: int, eta: float = 0.1):
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.kernel = kernel
        self.d = d
        self.eta = eta
        self.state = GramState(kernel, d, 1.0)

    def set_hint(self, h: float) -> None:
        pass

    def play(self, t: int) -> np.ndarray:
        return -self.eta * self.state.weighted_sum(t)

    def operator(self, t: int) -> SpanOperator:
        return self.state.operator() * (-self.eta)

    def update(self, t: int, g) -> None:
        self.state.push(g, t)


def fullmatrix_potential_derivative(r: float, v: float, alpha: float, g: float) -> float:
    """``Psi'(r) = 3 min_{eta <= 1/g} [log(r/alpha + 1)/eta + eta v]``."""
    ell = math.log1p(r / alpha)
    if ell <= v / g**2:
        return 6 * math.sqrt(v * ell)
    return 3 * (g * ell + v / g)


def _fullmatrix_root(y: float, v: float, alpha: float, g: float) -> float:
    """Solve ``Psi'(r) = y`` for ``r >= 0``; both branches invert in closed form."""
    if y <= 0:
        return 0.0
    ell = (y / 6) ** 2 / v
    if ell > v / g**2:
        ell = (y / 3 - v / g) / g
    return alpha * math.expm1(ell)


class FullMatrix:
    """FTRL in the time-varying norm ``||W||_t^2 = <W, Sigma_t W>``.

    ``Sigma_t = (lam + G0^2) I + sum_{s<t} G_s G_s^*``.  The iterate is
    ``W_t = -r Sigma_t^{-1} theta_t / ||theta_t||_{t,*}`` with ``r`` solving
    ``Psi_t'(r) = ||theta_t||_{t,*}``.
    """

    def __init__(self, kernel: Kernel, d: int, G: float = 1.0, epsilon: float = 1.0,
                 lam: float = 1.0, horizon: int | None = None):
        self.kernel = kernel
        self.d = d
        self.epsilon = epsilon
        self.g0 = G * math.sqrt(kernel.diag_max(horizon or 1))
        self.shift = lam + self.g0**2
        self.v = 4 * self.g0**2
        self._rounds: list[int] = []
        self._grads: list[np.ndarray] = []
        self._inv = BorderedInverse(self.shift)
        self._gram = np.zeros((0, 0))

    @property
    def alpha(self) -> float:
        return pf_alpha(self.v, self.epsilon, self.g0)

    def _solve_theta(self):
        """Coefficients ``c`` with ``Sigma_t^{-1} theta_t = sum_s c_s G_s`` and ``||theta||_*``."""
        ones = np.ones(len(self._rounds))
        c = self._inv.matrix @ ones
        dual_sq = float(ones @ self._gram @ c)
        return c, math.sqrt(max(dual_sq, 0.0))

    def operator(self, t: int) -> SpanOperator:
        if not self._rounds:
            return SpanOperator.empty(self.d)
        c, dual = self._solve_theta()
        if dual == 0:
            return SpanOperator.empty(self.d)
        r = _fullmatrix_root(dual, self.v, self.alpha, self.g0)
        return SpanOperator(self._rounds, np.array(self._grads), -r * c / dual)

    def play(self, t: int) -> np.ndarray:
        return self.operator(t).apply(self.kernel, t)

    def set_hint(self, h: float) -> None:
        pass

    def optimality_residual(self, t: int) -> float:
        """``||theta + grad psi_t(W_t)||_HS / ||theta||_HS``.

        Every term lives on the same rank-one ``G_s``, so coefficients are combined
        before the single quadratic form (no cancellation inside the norm).
        """
        if not self._rounds:
            return 0.0
        m = self._gram
        w = self.operator(t).coefs
        sigma_w = self.shift * w + m @ w
        norm_w = math.sqrt(max(float(w @ m @ sigma_w), 0.0))
        if norm_w == 0:
            return 0.0
        slope = fullmatrix_potential_derivative(norm_w, self.v, self.alpha, self.g0)
        ones = np.ones(len(w))
        res = ones + sigma_w * (slope / norm_w)
        return math.sqrt(max(float(res @ m @ res), 0.0) / float(ones @ m @ ones))

    def update(self, t: int, g) -> None:
        g = np.asarray(g, dtype=float).reshape(-1)
        if self._rounds and t <= self._rounds[-1]:
            raise ValueError("rounds must increase")
        ktt = float(self.kernel.diag(t)[0])
        b = (self.kernel.column(self._rounds, t) * (np.array(self._grads) @ g)) if self._rounds else np.zeros(0)
        gsq = ktt * float(g @ g)
        # ||G_t||^2_{t,*} by Woodbury against Sigma_t (rounds before t)
        dual_sq = (gsq - float(b @ self._inv.matrix @ b)) / self.shift if self._rounds else gsq / self.shift
        self.v += max(dual_sq, 0.0)
        self._inv.append(b, gsq)
        n = len(self._rounds)
        gram = np.zeros((n + 1, n + 1))
        gram[:n, :n] = self._gram
        gram[:n, n] = gram[n, :n] = b
        gram[n, n] = gsq
        self._gram = gram
        self._rounds.append(int(t))
        self._grads.append(g)


class KONS:
    """Unprojected kernelized Online Newton Step.

    ``A_t = lam I + beta sum_{s<=t} G_s G_s^*`` and ``W_{t+1} = W_t - A_t^{-1} G_t``.
    Because ``W`` stays in the span of the ``G_s``, ``A_t^{-1} G_t`` has
    coefficients ``(lam I + beta K_t)^{-1} e_t``, with ``K_t`` the gram of the
    ``G_s``; that inverse is grown by bordering.  ``radius`` enables the
    post-hoc ball scaling ``W <- W min(1, D / ||W||_HS)``.
    """

    def __init__(self, kernel: Kernel, d: int, beta: float, lam: float = 1.0,
                 radius: float | None = None):
        if beta <= 0 or lam <= 0:
            raise ValueError("beta and lam must be positive")
        self.kernel = kernel
        self.d = d
        self.beta = beta
        self.lam = lam
        self.radius = radius
        self._rounds: list[int] = []
        self._grads = np.zeros((0, d))
        self._gram = np.zeros((0, 0))
        self.coefs = np.zeros(0)
        self._inv = BorderedInverse(lam)

    def operator(self, t: int | None = None) -> SpanOperator:
        if not self._rounds:
            return SpanOperator.empty(self.d)
        return SpanOperator(self._rounds, self._grads, self.coefs)

    def play(self, t: int) -> np.ndarray:
        if not self._rounds:
            return np.zeros(self.d)
        return (self.kernel.column(self._rounds, t) * self.coefs) @ self._grads

    def set_hint(self, h: float) -> None:
        pass

    def update(self, t: int, g) -> None:
        g = np.asarray(g, dtype=float).reshape(-1)
        n = len(self._rounds)
        b = self.kernel.column(self._rounds, t) * (self._grads @ g) if n else np.zeros(0)
        gsq = float(self.kernel.diag(t)[0] * (g @ g))
        self._inv.append(self.beta * b, self.beta * gsq)
        gram = np.zeros((n + 1, n + 1))
        gram[:n, :n] = self._gram
        gram[:n, n] = gram[n, :n] = b
        gram[n, n] = gsq
        self._gram = gram
        self._rounds.append(int(t))
        self._grads = np.vstack([self._grads, g])
        self.coefs = np.append(self.coefs, 0.0) - self._inv.matrix[:, n]
        if self.radius is not None:
            norm = math.sqrt(max(float(self.coefs @ self._gram @ self.coefs), 0.0))
            if norm > self.radius:
                self.coefs *= self.radius / norm

    def step(self, t: int, g) -> np.ndarray:
        """Feed ``g_t`` and return the next play ``w_{t+1}``."""
        self.update(t, g)
        return self.play(t + 1)


class VAWForecaster:
    """Kernelized Vovk-Azoury-Warmuth forecaster.

    Predicts ``row_t(K_t (lam I + K_t)^{-1}) (y_1, ..., y_{t-1}, 0)``, the
    push-through form of ``phi(x_t)^T (lam I + sum_{s<=t} phi phi^T)^{-1} sum_{s<t} y_s phi(x_s)``.
    """

    def __init__(self, kernel: Kernel, lam: float = 1.0):
        if lam <= 0:
            raise ValueError("lam must be positive")
        self.kernel = kernel
        self.lam = lam
        self._contexts: list[int] = []
        self._labels: list[float] = []
        self._inv = BorderedInverse(lam)
        self._pending = False

    def predict(self, x: int) -> float:
        if self._pending:
            raise RuntimeError("predict called twice without update")
        col = self.kernel.column(self._contexts, x) if self._contexts else np.zeros(0)
        self._inv.append(col, float(self.kernel.diag(x)[0]))
        self._contexts.append(int(x))
        self._pending = True
        row = np.append(col, float(self.kernel.diag(x)[0]))
        labels = np.append(np.asarray(self._labels, dtype=float), 0.0)
        return float(row @ (self._inv.matrix @ labels))

    def update(self, y: float) -> None:
        if not self._pending:
            raise RuntimeError("update called before predict")
        self._labels.append(float(y))
        self._pending = False

