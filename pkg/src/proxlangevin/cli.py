"""Experiment CLI: reproducible CSV outputs with optional SVG charts.

Subcommands: sample, bias-sweep, bound-check, sde-verify, prox-bench.
Every subcommand is a pure function of its flags plus the seed, and re-running
an identical configuration reproduces the CSV byte for byte (wall-clock
timings from prox-bench go to stdout only).  A JSON file passed via --config
overrides all flags; it must carry "schema_version": 1 and only known fields.
Charts are rendered purely from the written CSV, so disabling them changes no
CSV byte.  PLA_THREADS caps the ensemble worker count.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time

import numpy as np

from .diagnostics import bias_scaling_fit, gaussian_fit_kl, moments
from .errors import CapabilityError, NonConvergenceError
from .prox import ProxConfig, prox_step
from .samplers import ChainConfig, InitSpec, run_ensemble
from .sde import sde_convergence_study
from .targets import GaussianTarget, target_from_json
from .theory import (
    BoundParams,
    bias_report,
    budget_cor2,
    gaussian_cov_recursion,
    gaussian_kl,
    kl_bound_thm1,
    ula_limit_gaussian,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# deterministic CSV helpers


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return repr(f)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _read_csv(path: str):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def _parse_floats(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray([float(v) for v in text])
    return np.asarray([float(tok) for tok in str(text).split(",") if tok.strip()])


def _parse_grid(spec) -> np.ndarray:
    """Grid spec: 'start:stop:log20', 'start:stop:lin20', or a comma list."""
    if isinstance(spec, (list, tuple)):
        return np.asarray([float(v) for v in spec])
    spec = str(spec)
    if ":" not in spec:
        return _parse_floats(spec)
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"bad grid spec {spec!r}; expected start:stop:log20")
    start, stop = float(parts[0]), float(parts[1])
    kind = parts[2]
    if kind.startswith("log"):
        count = int(kind[3:])
        return np.geomspace(start, stop, count)
    if kind.startswith("lin"):
        count = int(kind[3:])
        return np.linspace(start, stop, count)
    raise ConfigError(f"bad grid kind {kind!r}; expected logN or linN")


# ---------------------------------------------------------------------------
# charts (rendered purely from the CSV)


def _chart_from_csv(csv_path: str, svg_path: str, x_col: str, y_cols,
                    group_col: str | None = None, logx=False, logy=False) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    header, rows = _read_csv(csv_path)
    idx = {name: header.index(name) for name in header}
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = sorted({r[idx[group_col]] for r in rows}) if group_col else [None]
    for g in groups:
        sel = [r for r in rows if group_col is None or r[idx[group_col]] == g]
        x = np.array([float(r[idx[x_col]]) for r in sel])
        for y_col in y_cols:
            y = np.array([float(r[idx[y_col]]) for r in sel])
            finite = np.isfinite(y)
            label = y_col if g is None else f"{y_col} ({group_col}={g})"
            ax.plot(x[finite], y[finite], marker="o", ms=3, lw=1, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x_col)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _svg_path(out: str) -> str:
    return out[:-4] + ".svg" if out.endswith(".csv") else out + ".svg"


# ---------------------------------------------------------------------------
# subcommands


def _init_spec(args, dim: int) -> InitSpec:
    if args.init == "point_mass":
        x0 = np.zeros(dim) if args.x0 is None else _parse_floats(args.x0)
        return InitSpec.point_mass(x0)
    if args.init == "gaussian_at_stationary":
        return InitSpec.gaussian_at_stationary()
    if args.init == "prox_pushforward":
        return InitSpec.prox_pushforward()
    raise ConfigError(f"unknown init {args.init!r}")


def _prox_cfg(args) -> ProxConfig:
    return ProxConfig(tol=args.prox_tol, max_iter=args.prox_max_iter,
                      solver=args.prox_solver)


def cmd_sample(args) -> None:
    target = target_from_json(args.target)
    cfg = ChainConfig(
        eps=args.eps,
        steps=args.steps,
        n_chains=args.chains,
        seed=args.seed,
        init=_init_spec(args, target.dim),
        thinning=args.thinning,
        prox=_prox_cfg(args),
    )
    trace = run_ensemble(target, cfg, args.algo)
    header = ["chain", "step"] + [f"x_{j + 1}" for j in range(target.dim)]
    rows = []
    for i in range(cfg.n_chains):
        for j, k in enumerate(trace.stored_steps):
            rows.append([i, int(k), *trace.iterates[i, j]])
    _write_csv(args.out, header, rows)
    if args.chart:
        _chart_from_csv(args.out, _svg_path(args.out), "step",
                        [f"x_{j + 1}" for j in range(target.dim)], group_col=None)


def cmd_bias_sweep(args) -> None:
    lam = _parse_floats(args.eigs)
    eps_grid = _parse_grid(args.eps_grid)
    qs = tuple(float(q) for q in _parse_floats(args.renyi_q)) if args.renyi_q else ()
    header = ["eps", "kl_pla", "kl_ula"]
    for q in qs:
        header += [f"renyi_pla_q{q:g}", f"renyi_ula_q{q:g}"]
    if args.empirical:
        header += ["kl_pla_mc", "kl_ula_mc"]
        target = GaussianTarget(np.zeros(lam.size), lam)
    rows = []
    for eps in eps_grid:
        report = bias_report(lam, float(eps), qs)
        row = [float(eps), report.kl_pla, report.kl_ula]
        for q in qs:
            row += list(report.renyi[q])
        if args.empirical:
            cfg = ChainConfig(eps=float(eps), steps=args.steps, n_chains=args.chains,
                              seed=args.seed, init=InitSpec.gaussian_at_stationary())
            pla_trace = run_ensemble(target, cfg, "pla")
            row.append(gaussian_fit_kl(moments(pla_trace.final_iterates()), target))
            if ula_limit_gaussian(lam, float(eps)) is None:
                row.append(math.inf)
            else:
                ula_trace = run_ensemble(target, cfg, "ula")
                row.append(gaussian_fit_kl(moments(ula_trace.final_iterates()), target))
        rows.append(row)
    _write_csv(args.out, header, rows)
    finite = [(r[0], r[1]) for r in rows if r[1] > 0]
    if len(finite) >= 4:
        fit = bias_scaling_fit([p[0] for p in finite], [p[1] for p in finite])
        print(f"implicit-bias scaling: slope={fit.slope:.4f} "
              f"intercept={fit.intercept:.4f} r2={fit.r_squared:.5f} "
              f"reliable={fit.reliable}")
    if args.chart:
        _chart_from_csv(args.out, _svg_path(args.out), "eps",
                        ["kl_pla", "kl_ula"], logx=True, logy=True)


def _initial_spectrum(lam: np.ndarray, h0: float) -> np.ndarray:
    """Over-dispersion ratio r > 1 whose exact initial KL equals h0."""
    n = lam.size
    target = 2.0 * h0 / n
    if target == 0:
        return lam.copy()
    g = lambda r: r - 1.0 - math.log(r)
    hi = 2.0
    while g(hi) < target:
        hi *= 2.0
    lo = 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
    return lam / lo


def cmd_bound_check(args) -> None:
    if args.M != 0.0 or args.alpha != args.L:
        raise ConfigError(
            "the exact-law table needs M = 0 and alpha = L (isotropic Gaussian)"
        )
    lam = np.full(args.n, 1.0 / args.L)
    if args.eps_grid:
        eps_list = [float(e) for e in _parse_grid(args.eps_grid)]
    elif args.delta is not None:
        eps_list = []
    else:
        raise ConfigError("bound-check needs --eps-grid or --delta")
    if args.delta is not None:
        budget = budget_cor2(args.alpha, args.L, args.M, args.n, args.delta, args.h0)
        certified = kl_bound_thm1(BoundParams(
            alpha=args.alpha, L=args.L, M=args.M, n=args.n,
            eps=budget.eps, k=budget.k, H0=args.h0,
        ))
        print(f"budget: eps={budget.eps:.6g} k={budget.k} capped={budget.capped} "
              f"certified={certified:.6g} <= delta={args.delta:g}: "
              f"{certified <= args.delta}")
        if not eps_list:
            eps_list = [budget.eps]
    s0 = _initial_spectrum(lam, args.h0)
    rows = []
    for eps in eps_list:
        s = s0.copy()
        for k in range(args.k_max + 1):
            exact = gaussian_kl(s, lam)
            bound = kl_bound_thm1(BoundParams(
                alpha=args.alpha, L=args.L, M=args.M, n=args.n,
                eps=eps, k=k, H0=args.h0,
            ))
            rows.append([eps, k, exact, bound, bound - exact])
            s = gaussian_cov_recursion(lam, eps, 1, init=s)
    _write_csv(args.out, ["eps", "k", "exact_kl", "bound", "slack"], rows)
    if args.chart:
        _chart_from_csv(args.out, _svg_path(args.out), "k",
                        ["exact_kl", "bound"], group_col="eps", logy=True)


def cmd_sde_verify(args) -> None:
    target = target_from_json(args.target)
    substeps = [int(s) for s in _parse_floats(args.substeps)]
    x0 = np.zeros(target.dim) if args.x0 is None else _parse_floats(args.x0)
    study = sde_convergence_study(target, x0, args.t_end, substeps,
                                  args.paths, args.seed)
    rows = []
    for i in range(args.paths):
        for li, s in enumerate(study.substeps):
            rows.append([i, int(s), study.errors[i, li]])
    _write_csv(args.out, ["path", "n_substeps", "max_error"], rows)
    ratios = study.ratios()
    if ratios.size:
        in_band = np.all((ratios >= 1.6) & (ratios <= 2.6), axis=1)
        print(f"refinement ratios: median={np.median(ratios):.3f} "
              f"in [1.6, 2.6] on {in_band.mean():.0%} of paths")
    if args.chart:
        _chart_from_csv(args.out, _svg_path(args.out), "n_substeps",
                        ["max_error"], group_col="path", logx=True, logy=True)


def cmd_prox_bench(args) -> None:
    target = target_from_json(args.target)
    solvers = [s.strip() for s in str(args.solvers).split(",") if s.strip()]
    ys = np.random.default_rng(args.seed).standard_normal(
        (args.calls, target.dim)) * args.scale
    rows = []
    for solver in solvers:
        cfg = ProxConfig(tol=args.prox_tol, max_iter=args.prox_max_iter, solver=solver)
        start = time.perf_counter()
        for call in range(args.calls):
            out = prox_step(target, ys[call], args.eps, cfg)
            rows.append([solver, call, out.iterations, out.residual, out.converged])
        elapsed = time.perf_counter() - start
        print(f"{solver}: {args.calls} solves in {elapsed:.4f} s "
              f"({1e6 * elapsed / args.calls:.1f} us/solve)")
    _write_csv(args.out, ["solver", "call", "iterations", "residual", "converged"], rows)


# ---------------------------------------------------------------------------
# parser and entry point


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pla",
        description="Implicit/explicit Langevin sampling experiments with "
                    "closed-form oracles",
    )
    sub = parser.add_subparsers(dest="command")

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--config", help="JSON config file overriding all flags")
        sp.add_argument("--out", required=True, help="output CSV path")
        return sp

    sp = add("sample", cmd_sample, "run an ensemble and write the trace")
    sp.add_argument("--target", required=True, help="target JSON (path or inline)")
    sp.add_argument("--algo", choices=("pla", "ula"), default="pla")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--steps", type=int, default=1000)
    sp.add_argument("--chains", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--thinning", type=int, default=1)
    sp.add_argument("--init", default="gaussian_at_stationary",
                    choices=("point_mass", "gaussian_at_stationary",
                             "prox_pushforward"))
    sp.add_argument("--x0", help="comma-separated start point for point_mass")
    sp.add_argument("--prox-tol", type=float, default=1e-10)
    sp.add_argument("--prox-max-iter", type=int, default=200)
    sp.add_argument("--prox-solver", default="newton",
                    choices=("newton", "gradient_descent"))
    sp.add_argument("--chart", action="store_true")

    sp = add("bias-sweep", cmd_bias_sweep,
             "tabulate implicit/explicit biases over a step-size grid")
    sp.add_argument("--eigs", required=True, help="covariance eigenvalues, e.g. 1,2")
    sp.add_argument("--eps-grid", required=True, help="e.g. 1e-3:0.5:log20")
    sp.add_argument("--renyi-q", help="Renyi orders (isotropic spectra only)")
    sp.add_argument("--empirical", action="store_true",
                    help="add Monte Carlo bias columns")
    sp.add_argument("--chains", type=int, default=4096)
    sp.add_argument("--steps", type=int, default=400)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--chart", action="store_true")

    sp = add("bound-check", cmd_bound_check,
             "exact-law KL against the convergence bound")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--L", type=float, default=1.0)
    sp.add_argument("--M", type=float, default=0.0)
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--h0", type=float, default=1.0)
    sp.add_argument("--k-max", type=int, default=200)
    sp.add_argument("--eps-grid")
    sp.add_argument("--chart", action="store_true")

    sp = add("sde-verify", cmd_sde_verify,
             "pathwise check of the one-step SDE representation")
    sp.add_argument("--target", required=True)
    sp.add_argument("--t-end", type=float, default=0.1)
    sp.add_argument("--substeps", default="100,200,400")
    sp.add_argument("--paths", type=int, default=32)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--x0", help="comma-separated start point (default origin)")
    sp.add_argument("--chart", action="store_true")

    sp = add("prox-bench", cmd_prox_bench, "time the implicit-step solvers")
    sp.add_argument("--target", required=True)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--calls", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scale", type=float, default=3.0)
    sp.add_argument("--solvers", default="newton,gradient_descent")
    sp.add_argument("--prox-tol", type=float, default=1e-10)
    sp.add_argument("--prox-max-iter", type=int, default=200)

    dests = {}
    for name, sp in sub.choices.items():
        dests[name] = {a.dest for a in sp._actions} - {"help", "config"}
    return parser, dests


def _apply_config(args, allowed: set) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    version = cfg.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"config schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    for key, value in cfg.items():
        setattr(args, key, value)


def main(argv=None) -> int:
    parser, dests = _build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    try:
        _apply_config(args, dests[args.command])
        args.func(args)
        return 0
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergenceError, CapabilityError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
