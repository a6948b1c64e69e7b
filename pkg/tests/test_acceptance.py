"""Acceptance criteria: one PASS/FAIL line per criterion, asserted at the stated tolerances."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from dynreg.analysis import (
    bound_optimal_pl,
    comparator_rkhs_norm,
    dynamic_regret,
    effective_dimension,
    logdet_sum_check,
    path_length,
    spline_closed_forms,
    spline_eigenvalues_stated,
    vaw_bound,
)
from dynreg.environments import EnvConfig, make_env
from dynreg.hilbert import GramState, sum_norm_sq
from dynreg.kernels import (
    DEFAULT_QUAD_TOL,
    DiracKernel,
    GaussianKernel,
    SpectralDensity,
    SplineKernel,
    build_ti_table,
    density_mass,
    horizon_free_kernel,
)
from dynreg.learners import KONS, ParameterFree, VAWForecaster
from dynreg.reduction import clipping_deficit, run_reduction
from dynreg.verify import (
    c_of_T_bound,
    c_of_T_closed_bound,
    check_discrete_pl,
    check_discrete_squared_pl,
    dirac_equivalence,
)

from conftest import spline_features

# one ulp of rounding per clipped norm; the telescoping identity itself is exact
ROUNDOFF = 1e-12


@pytest.fixture
def say(capsys):
    def emit(number: int, ok: bool, detail: str, elapsed: float, limit: float) -> bool:
        passed = ok and elapsed < limit
        with capsys.disabled():
            print(f"\ncriterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}  "
                  f"[{elapsed:.1f}s / {limit:g}s]")
        return passed
    return emit


def test_criterion_01_spline_inverse(say):
    start = time.perf_counter()
    err = 0.0
    for T in (2, 6, 64):
        numeric = np.linalg.inv(SplineKernel().gram(np.arange(1, T + 1)))
        err = max(err, float(np.max(np.abs(numeric - spline_closed_forms(T)[0]))))
    assert say(1, err <= 1e-10, f"max entry error {err:.2e} (limit 1e-10)", time.perf_counter() - start, 1)


def test_criterion_02_spline_eigenvalues(say):
    start = time.perf_counter()
    err = 0.0
    for T in (8, 32):
        numeric = np.sort(np.linalg.eigvalsh(np.linalg.inv(SplineKernel().gram(np.arange(1, T + 1)))))
        err = max(err, float(np.max(np.abs(numeric - np.sort(spline_eigenvalues_stated(T))))))
    assert say(2, err <= 1e-10, f"max |eig - 4sin^2(k pi/(2T+1))| = {err:.3g} (limit 1e-10)",
               time.perf_counter() - start, 1)


def test_criterion_03_effective_dimension(say):
    start = time.perf_counter()
    worst = 0.0
    for T in (10, 100, 1000):
        eig = np.linalg.eigvalsh(SplineKernel().gram(np.arange(1, T + 1)))
        for lam in (0.1, 1.0, 10.0, 100.0):
            d_eff = float(np.sum(np.clip(eig, 0, None) / (np.clip(eig, 0, None) + lam)))
            worst = max(worst, d_eff / (math.pi * T / (2 * math.sqrt(lam))))
    assert say(3, worst <= 1, f"max d_eff / (pi T / (2 sqrt(lam))) = {worst:.3f}",
               time.perf_counter() - start, 10)


def test_criterion_04_horizon_free_mass(say):
    start = time.perf_counter()
    density = SpectralDensity()
    mass = density_mass(density)
    base = build_ti_table(density, 64, DEFAULT_QUAD_TOL).values
    half = build_ti_table(density, 64, DEFAULT_QUAD_TOL / 2).values
    drift = float(np.max(np.abs(base - half) / np.abs(half)))
    ok = mass <= 8 * math.pi**2 and drift <= 1e-6
    assert say(4, ok, f"mass {mass:.6f} <= {8 * math.pi ** 2:.4f}; halving drift {drift:.2e} (limit 1e-6)",
               time.perf_counter() - start, 60)


def test_criterion_05_dirac_equivalence(say):
    start = time.perf_counter()
    worst = 0.0
    for T, d in ((8, 2), (16, 4)):
        for learner in ("pf", "ftrl"):
            rep = dirac_equivalence(T, d, seed=0, learner=learner)
            worst = max(worst, rep.max_play_diff, rep.max_operator_diff, rep.regret_diff,
                        rep.s_diff, rep.v_diff)
    assert say(5, worst <= 1e-12, f"max trace difference {worst:.2e} (limit 1e-12)",
               time.perf_counter() - start, 5)


def _features(kernel_name: str, rounds, T: int):
    if kernel_name == "spline":
        return spline_features(rounds, T)
    return np.eye(T)[np.asarray(rounds) - 1]


def test_criterion_06_gram_identities(say):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(100):
        name = ("spline", "dirac")[i % 2]
        kernel = SplineKernel() if name == "spline" else DiracKernel()
        T = int(rng.integers(1, 33))
        d = int(rng.integers(1, 5))
        rounds = np.sort(rng.choice(np.arange(1, T + 1), size=int(rng.integers(1, T + 1)), replace=False))
        grads = rng.standard_normal((len(rounds), d))
        state = GramState(kernel, d)
        for r, g in zip(rounds, grads):
            state.push(g, int(r))
        direct = sum_norm_sq(list(zip(rounds, grads)), kernel)
        explicit = float(np.sum((grads.T @ _features(name, rounds, T)) ** 2))
        scale = max(abs(explicit), 1e-300)
        worst = max(worst, abs(state.s_sq - explicit) / scale, abs(direct - explicit) / scale)
    assert say(6, worst <= 1e-9, f"max relative disagreement {worst:.2e} (limit 1e-9)",
               time.perf_counter() - start, 5)


def test_criterion_07_logdet_inequality(say):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    kernels = [SplineKernel(), DiracKernel(), horizon_free_kernel(64)]
    worst = -math.inf
    for i in range(100):
        T = int(rng.integers(1, 33))
        d = int(rng.integers(1, 4))
        lam = (0.1, 1.0, 10.0)[i % 3]
        grads = rng.standard_normal((T, d)) * rng.uniform(0.1, 3)
        lhs, rhs = logdet_sum_check(np.arange(1, T + 1), grads, kernels[i % 3], lam)
        worst = max(worst, lhs / rhs)
    assert say(7, worst <= 1 + 1e-9, f"max lhs/rhs {worst:.3f} over 100 instances",
               time.perf_counter() - start, 30)


@pytest.mark.slow
def test_criterion_08_dynamic_regret_scaling(say):
    start = time.perf_counter()
    horizons = (128, 256, 512, 1024, 2048)
    kernel = horizon_free_kernel(max(horizons) - 1)
    regrets, ratios = [], []
    for T in horizons:
        runs, bounds = [], []
        for seed in range(3):
            env = make_env(EnvConfig(T=T, d=2, switches=4, seed=seed, G=1.0))
            trace = run_reduction(ParameterFree(kernel, 2, G=1.0), env, T)
            p, _, m = path_length(env.comparators)
            gsq = float(sum(float(r.g @ r.g) for r in trace))
            runs.append(dynamic_regret(trace))
            bounds.append(bound_optimal_pl(m, p, gsq, kernel.diag_max(T), T))
        regrets.append(np.mean(runs))
        ratios.append(np.mean(runs) / np.mean(bounds))
    slope = float(np.polyfit(np.log(horizons), np.log(regrets), 1)[0])
    spread = max(ratios) / min(ratios)
    ok = 0.35 <= slope <= 0.80 and spread <= 3
    detail = (f"slope {slope:.3f} (want [0.35, 0.80]); ratio spread {spread:.2f} (want <= 3); "
              f"mean regret {', '.join(f'{r:.1f}' for r in regrets)}")
    assert say(8, ok, detail, time.perf_counter() - start, 900)


@pytest.mark.slow
def test_criterion_09_path_length_sensitivity(say):
    start = time.perf_counter()
    T = 1024
    kernel = horizon_free_kernel(T - 1)
    means = []
    for switches in (0, 2, 8, 32):
        runs = [dynamic_regret(run_reduction(ParameterFree(kernel, 2),
                                             make_env(EnvConfig(T=T, switches=switches, seed=s)), T))
                for s in range(5)]
        means.append(float(np.mean(runs)))
    # nondecreasing up to 5% slack against the running maximum
    ok = all(b >= 0.95 * max(means[: i + 1]) for i, b in enumerate(means[1:]))
    assert say(9, ok, "mean regret by switches 0/2/8/32: " + ", ".join(f"{m:.1f}" for m in means),
               time.perf_counter() - start, 600)


def _vaw_regret(kernel, env, T, lam):
    model = VAWForecaster(kernel, lam)
    total = 0.0
    for t in range(1, T + 1):
        pred = model.predict(t)
        total += env.loss(t, np.array([pred]))[0] - env.comparator_loss(t)
        model.update(float(env.y[t - 1]))
    return total


@pytest.mark.slow
def test_criterion_10_curvature_regime(say):
    start = time.perf_counter()
    # a near-constant kernel: a fixed comparator has small norm and d_eff stays O(1)
    wide = GaussianKernel(1e6)
    mean = {}
    for T in (512, 1024, 2048):
        runs = []
        for seed in range(5):
            env = make_env(EnvConfig(kind="expconcave", T=T, switches=0, seed=seed))
            learner = KONS(wide, 2, beta=env.beta, radius=env.radius)
            runs.append(dynamic_regret(run_reduction(learner, env, T)))
        mean[T] = float(np.mean(runs))
    growth = [mean[1024] / mean[512], mean[2048] / mean[1024]]
    worst_vaw = 0.0
    lam = 1.0
    for kernel in (SplineKernel(), horizon_free_kernel(511)):
        for T in (64, 128, 256, 512):
            for cycles in (0, 1, 4):
                env = make_env(EnvConfig(kind="regression", d=1, T=T, switches=cycles, seed=T + cycles))
                gram = kernel.gram(np.arange(1, T + 1))
                bound = vaw_bound(lam, comparator_rkhs_norm(env.comparators, kernel) ** 2,
                                  effective_dimension(gram, lam), float(np.max(np.abs(env.y))), T,
                                  math.sqrt(float(np.max(np.diag(gram)))))
                worst_vaw = max(worst_vaw, _vaw_regret(kernel, env, T, lam) / bound)
    ok = max(growth) <= 1.6 and worst_vaw <= 1
    detail = (f"KONS regret(2T)/regret(T) = {growth[0]:.2f}, {growth[1]:.2f} (limit 1.6); "
              f"VAW max regret/bound {worst_vaw:.3f}")
    assert say(10, ok, detail, time.perf_counter() - start, 300)


def test_criterion_11_appendix_constructions(say):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    pl_ok, resid, sq_ratio = True, 0.0, 0.0
    for _ in range(20):
        T = int(rng.integers(2, 13))
        v = rng.uniform(-1, 1, (T, 2))
        rep = check_discrete_pl(v, m=1)
        pl_ok &= rep.passed
        resid = max(resid, rep.interp_residual)
        sq_ratio = max(sq_ratio, check_discrete_squared_pl(v).ratio)
    c10, closed = c_of_T_bound(T=10), c_of_T_closed_bound(10)
    ok = pl_ok and resid <= 1e-8 and sq_ratio <= 1.25 * (1 + 1e-2) and c10 <= closed
    detail = (f"discrete-pl {'ok' if pl_ok else 'violated'}; interp residual {resid:.1e}; "
              f"max ||u'||^2 / variation {sq_ratio:.3f} (limit 1.2625); c(10) {c10:.1f} <= {closed:.4g}")
    assert say(11, ok, detail, time.perf_counter() - start, 300)


def test_criterion_12_scale_free_wrapper(say):
    start = time.perf_counter()
    kernel = horizon_free_kernel(1023)
    telescopes, worst = True, 0.0
    for T in (256, 1024):
        for seed in range(3):
            for jump in (None, T // 2):
                env = make_env(EnvConfig(T=T, switches=4, seed=seed, jump_at=jump, jump_scale=100.0))
                wrapped = run_reduction(ParameterFree(kernel, 2, G=None), env, T, clip=True, radius=2.0)
                deficit, gmax = clipping_deficit(wrapped)
                telescopes &= deficit <= gmax * (1 + ROUNDOFF)
                if jump is None:
                    continue
                gmax_stream = float(np.max(np.linalg.norm(env.g, axis=1)))
                known = run_reduction(ParameterFree(kernel, 2, G=gmax_stream), env, T)
                worst = max(worst, dynamic_regret(wrapped) / dynamic_regret(known))
    ok = telescopes and worst <= 3
    detail = f"telescoping {'holds' if telescopes else 'violated'}; max wrapped/known-scale regret {worst:.3f}"
    assert say(12, ok, detail, time.perf_counter() - start, 120)
