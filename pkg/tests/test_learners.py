import math

import numpy as np
import pytest
from conftest import spline_features
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from dynreg.kernels import DiracKernel, SplineKernel
from dynreg.learners import (
    FTRL,
    KONS,
    FullMatrix,
    ParameterFree,
    VAWForecaster,
    fullmatrix_potential_derivative,
    pf_alpha,
    pf_potential,
)


def test_pf_potential_zero_and_branch_continuity():
    assert pf_potential(0.0, 4.0, 1.0, 1.0) == 0.0
    for v, g0 in ((4.0, 1.0), (10.0, 1.3), (50.0, 2.0)):
        s = 6 * v / g0
        alpha = pf_alpha(v, 1.0, g0)
        quad = alpha * math.expm1(s * s / (36 * v))
        lin = alpha * math.expm1(s / (3 * g0) - v / g0**2)
        assert quad == pytest.approx(lin, rel=1e-12)
        assert pf_potential(s, v, 1.0, g0) == pytest.approx(quad, rel=1e-12)


@settings(max_examples=1000, deadline=None)
@given(st.floats(0, 200), st.floats(0, 50), st.floats(1.0, 50.0), st.floats(0.5, 3.0))
def test_pf_potential_monotone(s, delta, vscale, g0):
    v = 4 * g0**2 * vscale
    assert pf_potential(s + delta, v, 1.0, g0) >= pf_potential(s, v, 1.0, g0)


def test_pf_zero_plays():
    pf = ParameterFree(DiracKernel(), 2)
    assert np.all(pf.play(1) == 0)
    for t in range(1, 6):
        assert np.all(pf.play(t) == 0)
        pf.update(t, np.array([0.3, -0.2]))


def test_pf_spline_transcription():
    """T = 4, d = 1, g = 1 each round, straight from the algorithm box."""
    T, G, eps = 4, 1.0, 1.0
    g0 = G * math.sqrt(T)
    v = 4 * g0**2
    hist = []
    expected = []
    for t in range(1, T + 1):
        s = math.sqrt(sum(min(a, b) * 1.0 for a in hist for b in hist))
        if s == 0:
            expected.append(0.0)
        else:
            alpha = eps * g0 / (math.sqrt(v) * math.log(v / g0**2) ** 2)
            expo = s * s / (36 * v) if s <= 6 * v / g0 else s / (3 * g0) - v / g0**2
            expected.append(-sum(min(r, t) for r in hist) / s * alpha * (math.exp(expo) - 1))
        hist.append(t)
        v += min(t, t) * 1.0
    pf = ParameterFree(SplineKernel(), 1, G=G, epsilon=eps, horizon=T)
    got = []
    for t in range(1, T + 1):
        got.append(float(pf.play(t)[0]))
        pf.update(t, [1.0])
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-15)


def test_pf_spline_needs_horizon():
    with pytest.raises(ValueError):
        ParameterFree(SplineKernel(), 1)


def test_pf_scale_free_hint():
    pf = ParameterFree(DiracKernel(), 1, G=None)
    assert pf.g0 == 0 and np.all(pf.play(1) == 0)
    pf.set_hint(2.0)
    assert pf.g0 == 2.0
    pf.set_hint(1.0)
    assert pf.g0 == 2.0


def test_ftrl_plays():
    f = FTRL(SplineKernel(), 1, eta=0.1)
    assert f.play(1)[0] == 0
    f.update(1, [1.0])
    f.update(2, [1.0])
    assert f.play(3)[0] == pytest.approx(-0.3)
    f = FTRL(DiracKernel(), 2)
    for t in range(1, 5):
        assert np.all(f.play(t) == 0)
        f.update(t, [1.0, 1.0])
    with pytest.raises(ValueError):
        FTRL(DiracKernel(), 1, eta=0)


def _dense_fullmatrix(grads, G, eps, lam):
    """Flat R^{dT} transcription with Dirac features: returns the plays."""
    T, d = grads.shape
    g0 = G
    shift = lam + g0**2
    v = 4 * g0**2
    gt = []
    plays = []

    def psi_prime(r, alpha):
        ell = math.log1p(r / alpha)
        return 6 * math.sqrt(v * ell) if ell <= v / g0**2 else 3 * (g0 * ell + v / g0)

    for t in range(T):
        sigma = shift * np.eye(d * T) + sum(np.outer(x, x) for x in gt)
        theta = sum(gt) if gt else np.zeros(d * T)
        x = np.zeros(d * T)
        if gt:
            sol = np.linalg.solve(sigma, theta)
            dual = math.sqrt(theta @ sol)
            alpha = eps * g0 / (math.sqrt(v) * math.log(v / g0**2) ** 2)
            if dual > 0:
                r = optimize.brentq(lambda r: psi_prime(r, alpha) - dual, 0.0, 1e12, xtol=1e-300,
                                    rtol=1e-15)
                x = -r * sol / dual
        plays.append(x[t * d : (t + 1) * d])
        gtil = np.zeros(d * T)
        gtil[t * d : (t + 1) * d] = grads[t]
        v += float(gtil @ np.linalg.solve(sigma, gtil))
        gt.append(gtil)
    return np.array(plays), x


def test_fullmatrix_matches_dense_dirac(rng):
    grads = rng.standard_normal((6, 2))
    grads /= np.maximum(1, np.linalg.norm(grads, axis=1, keepdims=True))
    plays, _ = _dense_fullmatrix(grads, 1.0, 1.0, 1.0)
    fm = FullMatrix(DiracKernel(), 2, G=1.0, epsilon=1.0, lam=1.0)
    for t in range(1, 7):
        np.testing.assert_allclose(fm.play(t), plays[t - 1], atol=1e-12)
        fm.update(t, grads[t - 1])
    # full iterate against the dense one after a single gradient
    fm1 = FullMatrix(DiracKernel(), 2)
    fm1.update(1, grads[0])
    _, x = _dense_fullmatrix(grads[:2], 1.0, 1.0, 1.0)
    op = fm1.operator(2)
    np.testing.assert_allclose(op.weighted_vectors()[0], x[:2], rtol=1e-10)


def test_fullmatrix_zero_theta_and_optimality(rng):
    fm = FullMatrix(SplineKernel(), 2, horizon=30)
    assert np.all(fm.play(1) == 0)
    for t in range(1, 31):
        fm.update(t, rng.standard_normal(2) / 2)
        assert fm.optimality_residual(t + 1) <= 1e-8
    c, dual = fm._solve_theta()
    r = -fm.operator(31).coefs[0] / c[0] * dual
    assert fullmatrix_potential_derivative(r, fm.v, fm.alpha, fm.g0) == pytest.approx(dual, rel=1e-10)


def _dense_ons(features, grads, beta, lam):
    """Plain ONS on vec(W) with W = d x N, G_t = g_t phi(t)^T."""
    d = grads.shape[1]
    dim = d * features.shape[1]
    a = lam * np.eye(dim)
    w = np.zeros(dim)
    plays = []
    for phi, g in zip(features, grads):
        plays.append(w.reshape(d, -1) @ phi)
        gv = np.outer(g, phi).reshape(-1)
        a += beta * np.outer(gv, gv)
        w = w - np.linalg.solve(a, gv)
    return np.array(plays), w


@pytest.mark.parametrize("kernel_name", ["dirac", "spline"])
def test_kons_matches_dense_ons(kernel_name, rng):
    T, d = 8, 2
    grads = rng.standard_normal((T, d))
    if kernel_name == "dirac":
        kernel, feats = DiracKernel(), np.eye(T)
    else:
        kernel, feats = SplineKernel(), spline_features(np.arange(1, T + 1), T)
    plays, _ = _dense_ons(feats, grads, 0.7, 1.3)
    k = KONS(kernel, d, beta=0.7, lam=1.3)
    for t in range(1, T + 1):
        np.testing.assert_allclose(k.play(t), plays[t - 1], atol=1e-12)
        k.update(t, grads[t - 1])


def test_kons_first_step_and_large_lambda():
    k = KONS(DiracKernel(), 1, beta=1.0, lam=1.0)
    k.update(1, [1.0])
    assert k.coefs.tolist() == [-0.5]
    big = KONS(SplineKernel(), 1, beta=1.0, lam=1e12)
    nxt = big.step(1, [1.0])
    assert abs(nxt[0]) < 1e-11


def test_kons_radius_scaling(rng):
    k = KONS(SplineKernel(), 2, beta=1.0, lam=0.1, radius=0.5)
    for t in range(1, 20):
        k.update(t, rng.standard_normal(2))
        assert k.operator().norm_sq(k.kernel) <= 0.25 * (1 + 1e-9)


def _dense_vaw(features, ys, lam):
    out = []
    for t in range(len(ys)):
        phi = features[: t + 1]
        a = lam * np.eye(features.shape[1]) + phi.T @ phi
        b = features[:t].T @ ys[:t]
        out.append(float(features[t] @ np.linalg.solve(a, b)))
    return out


@pytest.mark.parametrize("kernel_name", ["dirac", "spline"])
def test_vaw_matches_dense(kernel_name, rng):
    T = 6
    ys = rng.standard_normal(T)
    kernel = DiracKernel() if kernel_name == "dirac" else SplineKernel()
    feats = np.eye(T) if kernel_name == "dirac" else spline_features(np.arange(1, T + 1), T)
    expect = _dense_vaw(feats, ys, 0.8)
    f = VAWForecaster(kernel, lam=0.8)
    got = []
    for t in range(1, T + 1):
        got.append(f.predict(t))
        f.update(ys[t - 1])
    np.testing.assert_allclose(got, expect, atol=1e-12)


def test_vaw_edge_cases():
    f = VAWForecaster(SplineKernel(), lam=1.0)
    assert f.predict(1) == 0.0
    with pytest.raises(RuntimeError):
        f.predict(2)
    f.update(1.0)
    with pytest.raises(RuntimeError):
        f.update(1.0)
    big = VAWForecaster(SplineKernel(), lam=1e14)
    big.predict(1)
    big.update(5.0)
    assert abs(big.predict(2)) < 1e-12
