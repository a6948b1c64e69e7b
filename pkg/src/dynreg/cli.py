"""Command line entry point: ``dynreg run | verify | kernel``.

Config files are flat ``key = value`` lines with dotted keys (``env.switches = 4``),
optionally grouped under ``[section]`` headers that prefix the keys.  A
comma-separated value turns that key into a grid axis.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import build_report
from .environments import ConfigError, EnvConfig, make_env
from .kernels import (
    DEFAULT_QUAD_TOL,
    DiracKernel,
    GaussianKernel,
    Kernel,
    SpectralDensity,
    SplineKernel,
    TranslationInvariantKernel,
    build_ti_table,
    density_mass,
)
from .learners import FTRL, KONS, FullMatrix, ParameterFree, VAWForecaster
from .reduction import RoundTrace, run_reduction
from .verify import run_suite

__all__ = ["main", "parse_config", "ExperimentConfig", "ConfigParseError", "run_experiment"]

LEARNERS = ("pf", "ftrl", "fullmatrix", "kons", "vaw")
KERNELS = ("dirac", "spline", "gaussian", "horizon_free", "translation_invariant")
ROW_FIELDS = ["cell", "learner", "kernel", "env", "switches", "T", "seed", "regret", "P_T", "P2_T",
              "M", "rkhs_norm", "bound", "ratio"]


class ConfigParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass
class ExperimentConfig:
    learners: list[dict]
    kernels: list[dict]
    envs: list[dict]
    horizons: list[int]
    seeds: list[int]
    output: str
    parallelism: int = 1
    wrap: dict = field(default_factory=dict)

    def cells(self):
        for lc, kc, ec, T, seed in itertools.product(self.learners, self.kernels, self.envs,
                                                     self.horizons, self.seeds):
            yield lc, kc, ec, T, seed


def _scalar(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _read_pairs(text: str):
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigParseError("empty section header", lineno)
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not value:
            raise ConfigParseError("empty key or value", lineno)
        full = f"{section}.{key}" if section and key not in _TOP else key
        yield lineno, full, [_scalar(v.strip()) for v in value.split(",") if v.strip()]


_PREFIXES = ("learner", "kernel", "env", "wrap")
_TOP = ("horizons", "seeds", "output", "parallelism")


def _expand(group: dict[str, list]) -> list[dict]:
    keys = list(group)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(group[k] for k in keys))]


def parse_config(text: str, base: Path | None = None) -> ExperimentConfig:
    """Parse experiment config text; errors carry the offending line number."""
    groups: dict[str, dict[str, list]] = {p: {} for p in _PREFIXES}
    top: dict[str, list] = {}
    lines: dict[str, int] = {}
    for lineno, key, values in _read_pairs(text):
        if key in lines:
            raise ConfigParseError(f"duplicate key {key!r}", lineno)
        lines[key] = lineno
        head, _, rest = key.partition(".")
        if head in _PREFIXES and rest:
            groups[head][rest] = values
        elif key in _TOP:
            top[key] = values
        else:
            raise ConfigParseError(f"unknown key {key!r}", lineno)

    def need(key):
        if key not in top or not top[key]:
            raise ConfigParseError(f"missing required key {key!r} (empty grid)")
        return top[key]

    for name in ("learner", "kernel", "env"):
        groups[name].setdefault({"learner": "name", "kernel": "variant", "env": "kind"}[name], [])
        first = next(iter(groups[name].values()))
        if not first:
            raise ConfigParseError(f"missing {name} specification (empty grid)")
    horizons = need("horizons")
    if any(not isinstance(h, int) or h < 1 for h in horizons):
        raise ConfigParseError("horizons must be positive integers", lines["horizons"])
    if horizons != sorted(horizons):
        raise ConfigParseError("horizons must be sorted ascending", lines["horizons"])
    seeds = need("seeds")
    if any(not isinstance(s, int) for s in seeds):
        raise ConfigParseError("seeds must be integers", lines["seeds"])
    output = need("output")
    if len(output) != 1:
        raise ConfigParseError("exactly one output path", lines["output"])
    par = top.get("parallelism", [1])
    if len(par) != 1 or not isinstance(par[0], int) or par[0] < 1:
        raise ConfigParseError("parallelism must be one integer >= 1", lines.get("parallelism"))
    wrap = {k: v[0] for k, v in groups["wrap"].items()}
    cfg = ExperimentConfig(_expand(groups["learner"]), _expand(groups["kernel"]),
                           _expand(groups["env"]), horizons, seeds, str(output[0]), par[0], wrap)
    for lc in cfg.learners:
        if lc.get("name") not in LEARNERS:
            raise ConfigParseError(f"unknown learner {lc.get('name')!r}", lines.get("learner.name"))
    for kc in cfg.kernels:
        if kc.get("variant") not in KERNELS:
            raise ConfigParseError(f"unknown kernel {kc.get('variant')!r}", lines.get("kernel.variant"))
    for ec in cfg.envs:
        try:
            _env_config(ec, horizons[0], seeds[0]).validate()
        except (ConfigError, TypeError) as exc:
            raise ConfigParseError(f"env: {exc}", lines.get("env.kind")) from exc
    if base is not None and not Path(cfg.output).is_absolute():
        cfg.output = str(base / cfg.output)
    return cfg


def _env_config(ec: dict, T: int, seed: int) -> EnvConfig:
    known = {"kind", "d", "switches", "magnitude", "noise", "G", "jump_at", "jump_scale"}
    extra = set(ec) - known
    if extra:
        raise ConfigError(f"unknown env keys {sorted(extra)}")
    return EnvConfig(T=T, seed=seed, **ec)


def build_kernel(kc: dict, t_max: int) -> Kernel:
    variant = kc["variant"]
    if variant == "dirac":
        return DiracKernel()
    if variant == "spline":
        return SplineKernel()
    if variant == "gaussian":
        return GaussianKernel(float(kc.get("bandwidth", 1.0)))
    tol = float(kc.get("quad_tol", DEFAULT_QUAD_TOL))
    if variant == "horizon_free":
        density = SpectralDensity()
    else:
        density = SpectralDensity(float(kc.get("s_exponent", 0.5)), int(kc.get("m", 1)),
                                  float(kc.get("scale", 1.0)))
    return TranslationInvariantKernel(build_ti_table(density, max(t_max, 1), tol))


def _kernel_label(kc: dict) -> str:
    extra = ";".join(f"{k}={v}" for k, v in kc.items() if k != "variant")
    return kc["variant"] + (f"({extra})" if extra else "")


def _build_learner(lc: dict, kernel: Kernel, d: int, T: int, env):
    name = lc["name"]
    G = lc.get("G", getattr(env.cfg, "G", 1.0))
    if name == "pf":
        return ParameterFree(kernel, d, G=G, epsilon=float(lc.get("epsilon", 1.0)), horizon=T)
    if name == "ftrl":
        return FTRL(kernel, d, eta=float(lc.get("eta", 0.1)))
    if name == "fullmatrix":
        return FullMatrix(kernel, d, G=float(G), epsilon=float(lc.get("epsilon", 1.0)),
                          lam=float(lc.get("lam", 1.0)), horizon=T)
    if name == "kons":
        beta = lc.get("beta", "auto")
        if beta == "auto":
            beta = getattr(env, "beta", None)
            if beta is None:
                raise ValueError("kons with beta=auto needs an expconcave environment")
        return KONS(kernel, d, beta=float(beta), lam=float(lc.get("lam", 1.0)),
                    radius=lc.get("radius"))
    raise ValueError(f"unknown learner {name!r}")


def _run_vaw(lc: dict, kernel: Kernel, env, T: int):
    if env.cfg.kind != "regression":
        raise ValueError("vaw needs a regression environment")
    model = VAWForecaster(kernel, lam=float(lc.get("lam", 1.0)))
    trace = []
    for t in range(1, T + 1):
        pred = model.predict(int(env.contexts[t - 1]))
        value, g = env.loss(t, np.array([pred]))
        model.update(float(env.y[t - 1]))
        trace.append(RoundTrace(t, np.array([pred]), g, value, env.comparator_loss(t), env.comparator(t)))
    return trace


def run_cell(args) -> list:
    """One grid cell, returning its CSV row (strings)."""
    index, lc, kc, ec, T, seed, kernel, wrap = args
    env = make_env(_env_config(ec, T, seed))
    d = env.cfg.d
    if lc["name"] == "vaw":
        trace = _run_vaw(lc, kernel, env, T)
    else:
        learner = _build_learner(lc, kernel, d, T, env)
        trace = run_reduction(learner, env, T, clip=bool(wrap.get("clip", False)),
                              radius=wrap.get("radius"))
    report = build_report(trace, kernel)
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    label = ";".join(f"{k}={v}" for k, v in sorted(ec.items()))
    return [str(index), lc["name"], _kernel_label(kc), label, str(env.cfg.switches), str(T), str(seed),
            *map(fmt, (report.regret, report.P_T, report.P2_T, report.M, report.rkhs_norm,
                       report.bound, report.ratio))]


def _threads(cfg: ExperimentConfig) -> int:
    env = os.environ.get("DYNREG_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigParseError(f"DYNREG_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigParseError("DYNREG_THREADS must be >= 1")
        return n
    return cfg.parallelism


class CellError(RuntimeError):
    def __init__(self, cell: str, cause: BaseException):
        super().__init__(f"cell {cell}: {type(cause).__name__}: {cause}")
        self.cell = cell


def run_experiment(cfg: ExperimentConfig) -> str:
    """Run every cell and return the CSV text (rows in grid order)."""
    t_max = max(cfg.horizons) - 1
    kernels = [build_kernel(kc, t_max) for kc in cfg.kernels]
    jobs = []
    for index, (lc, kc, ec, T, seed) in enumerate(cfg.cells()):
        kernel = kernels[cfg.kernels.index(kc)]
        jobs.append((index, lc, kc, ec, T, seed, kernel, cfg.wrap))
    ids = [f"#{j[0]} learner={j[1]['name']} kernel={_kernel_label(j[2])} T={j[4]} seed={j[5]}" for j in jobs]
    workers = _threads(cfg)
    rows = []
    if workers == 1:
        for job, cid in zip(jobs, ids):
            try:
                rows.append(run_cell(job))
            except Exception as exc:
                raise CellError(cid, exc) from exc
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, job) for job in jobs]
            for fut, cid in zip(futures, ids):
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    raise CellError(cid, exc) from exc
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_FIELDS)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_run(path: str) -> int:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, Path(path).resolve().parent)
    except ConfigParseError as exc:
        print(f"config error: {path}: {exc}", file=sys.stderr)
        return 2
    try:
        out = run_experiment(cfg)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CellError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.output).write_text(out)
    print(f"wrote {out.count(chr(10)) - 1} rows to {cfg.output}", file=sys.stderr)
    return 0


def cmd_verify(level: str, tolerance_factor: float) -> int:
    results = run_suite(level, tolerance_factor)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  {'status':<6}  {'measured':>12}  {'limit':>12}  detail")
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status:<6}  {r.measured:>12.4g}  {r.limit:>12.4g}  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def _parse_kernel_spec(spec: str) -> dict:
    name, _, params = spec.partition(":")
    out = {"variant": name.strip()}
    for item in filter(None, (p.strip() for p in params.split(","))):
        if "=" not in item:
            raise ConfigParseError(f"kernel parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = _scalar(v.strip())
    return out


def cmd_kernel(spec: str, t_max: int, out: str | None) -> int:
    try:
        kc = _parse_kernel_spec(spec)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if kc["variant"] == "spline":
        print("config error: the spline kernel min(s, t) is not translation-invariant, so it has no "
              "lag table", file=sys.stderr)
        return 2
    if kc["variant"] not in KERNELS:
        print(f"config error: unknown kernel {kc['variant']!r}", file=sys.stderr)
        return 2
    if t_max < 0:
        print("config error: --tmax must be >= 0", file=sys.stderr)
        return 2
    try:
        kernel = build_kernel(kc, t_max)
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    lags = np.arange(t_max + 1)
    values = kernel.cross(np.ones(1, dtype=np.int64), lags + 1)[0]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lag", "value"])
    writer.writerows([int(t), format(float(v), ".17g")] for t, v in zip(lags, values))
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    if isinstance(kernel, TranslationInvariantKernel):
        density = kernel.table.density
        mass = density_mass(density, kernel.table.quad_tol)
        print(f"mass int Q = {mass:.12g}; k(0) = {values[0]:.12g}", file=sys.stderr)
        if kc["variant"] == "horizon_free":
            ok = values[0] <= 8 * math.pi**2
            print(f"k(0) <= 8 pi^2 = {8 * math.pi ** 2:.6g}: {'yes' if ok else 'NO'}", file=sys.stderr)
        print(f"max quadrature residual = {float(np.max(kernel.table.residuals)):.3g}", file=sys.stderr)
    n = min(t_max + 1, 200)
    eig = np.linalg.eigvalsh(kernel.gram(np.arange(1, n + 1)))
    psd = eig[0] >= -1e-8 * max(eig[-1], 1e-300)
    print(f"PSD spot-check on {n} rounds: min eigenvalue {eig[0]:.4g} ({'ok' if psd else 'FAILED'})",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynreg", description="Dynamic regret via kernelized static regret")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment grid from a config file")
    p_run.add_argument("config")
    p_ver = sub.add_parser("verify", help="run the numerical verification suite")
    p_ver.add_argument("--level", choices=("fast", "full"), default="fast")
    p_ver.add_argument("--tolerance-factor", type=float, default=1.0,
                       help="scale every limit (values < 1 tighten the checks)")
    p_ker = sub.add_parser("kernel", help="tabulate a kernel over integer lags")
    p_ker.add_argument("--spec", required=True,
                       help="dirac | gaussian:bandwidth=B | horizon_free[:quad_tol=..] | "
                            "translation_invariant:s_exponent=..,m=..,scale=..,quad_tol=..")
    p_ker.add_argument("--tmax", type=int, required=True)
    p_ker.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "verify":
        return cmd_verify(args.level, args.tolerance_factor)
    return cmd_kernel(args.spec, args.tmax, args.out)

