"""Command-line front end.

Every subcommand except ``constants`` reads an INI config (``--config``);
``--seed`` and ``--jobs`` override the config, and the output directory is
taken from ``BMC_LSQ_OUT``, then ``--out``, then ``[run] out``.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as X
from . import records, theory
from .config import ConfigError, RunConfig, parse_config, validate
from .estimator import NumericError, UnsupportedSlice
from .kernels import NbarModel, TwoPointModel, simulate_tree
from .rng import derive_seed
from .selection import cross_validate
from .tree import ConfigurationError, TreeSample, triangles_of_generation

ENV_OUT = "BMC_LSQ_OUT"

_SIM_TAG = 31
_CV_TAG = 32
_FIT_TAG = 33


class UsageError(Exception):
    pass


# --- shared plumbing ----------------------------------------------------------

@dataclasses.dataclass
class Context:
    cfg: RunConfig
    out: Path
    command: str

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def meta(self, **extra) -> dict:
        d = {"command": self.command, "config_hash": self.cfg.hash(), "seed": self.seed}
        d.update(extra)
        return d

    def sidecar(self, name: str, **extra) -> None:
        payload = {"command": self.command, "config": self.cfg.canonical(),
                   "config_hash": self.cfg.hash(), "seed": self.seed,
                   "versions": records.versions()}
        payload.update(extra)
        records.write_sidecar(self.out / name, payload)


def _context(args) -> Context:
    if not args.config:
        raise UsageError(f"{args.command}: --config is required")
    cfg = parse_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.jobs is not None:
        over["jobs"] = args.jobs
    for key in ("reps", "generation"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if over:
        cfg = dataclasses.replace(cfg, **over)
        problems = validate(cfg)
        if problems:
            raise ConfigError(problems)
    out = Path(os.environ.get(ENV_OUT) or args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return Context(cfg, out, args.command)


def _sample(ctx: Context, path: str | None) -> tuple[np.ndarray, int]:
    """Triangles over the last complete generation, from file or fresh."""
    if path:
        tree = TreeSample.load(path)
        n = tree.depth - 1
    else:
        n = ctx.cfg.generation
        tree = simulate_tree(ctx.cfg.kernel.build(), None, n + 1, derive_seed(ctx.seed, _SIM_TAG))
    return triangles_of_generation(tree, n), n


def _params(ctx: Context, tri: np.ndarray) -> tuple[float, float, object]:
    cfg = ctx.cfg
    if cfg.lam is not None and cfg.tau is not None:
        return cfg.lam, cfg.tau, None
    report = cross_validate(tri, cfg.cv_grid(), derive_seed(ctx.seed, _CV_TAG), jobs=cfg.jobs)
    lam, tau = report.best
    return (cfg.lam if cfg.lam is not None else lam), (cfg.tau if cfg.tau is not None else tau), report


def _nbar(ctx: Context) -> NbarModel:
    k = ctx.cfg.kernel.build()
    if not isinstance(k, NbarModel):
        raise UsageError(f"{ctx.command}: needs kernel.name = nbar")
    return k


def _grid(ctx: Context) -> np.ndarray:
    return np.linspace(-3.0, 3.0, ctx.cfg.grid_points)


def _quad(ctx: Context) -> X.QuadratureGrid:
    return X.QuadratureGrid(points=ctx.cfg.quad_points, panels=ctx.cfg.quad_panels)


def _summary_rows(rows, truth=None):
    out = []
    for n in sorted({r[0] for r in rows}):
        s = X.five_number([r[-1] for r in rows if r[0] == n])
        out.append([n, s["min"], s["q1"], s["median"], s["q3"], s["max"]] + ([truth] if truth is not None else []))
    return out


# --- subcommands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    ctx = _context(args)
    n = ctx.cfg.generation
    seed = derive_seed(ctx.seed, _SIM_TAG)
    tree = simulate_tree(ctx.cfg.kernel.build(), None, n + 1, seed)
    path = ctx.out / f"tree_n{n}.bmct"
    tree.save(path)
    ctx.sidecar(f"tree_n{n}.json", depth=n + 1, tree_seed=seed)
    print(path)
    return 0


def cmd_cv(args) -> int:
    ctx = _context(args)
    tri, n = _sample(ctx, args.sample)
    cv_seed = derive_seed(ctx.seed, _CV_TAG)
    report = cross_validate(tri, ctx.cfg.cv_grid(), cv_seed, jobs=ctx.cfg.jobs)
    records.save_cv(report, ctx.out / "cv.csv", ctx.meta(n=n))
    ctx.sidecar("cv.json", n=n, cv_seed=cv_seed, best={"lambda": report.best[0], "tau": report.best[1]})
    print(f"lambda={report.best[0]!r} tau={report.best[1]!r}")
    return 0


def cmd_fit(args) -> int:
    ctx = _context(args)
    tri, n = _sample(ctx, args.sample)
    lam, tau, report = _params(ctx, tri)
    fit_seed = derive_seed(ctx.seed, _FIT_TAG)
    f = X.fit_sample(tri, lam, tau, ctx.cfg.d_max, fit_seed)
    records.save_fit(f, ctx.out / "fit.csv", n, ctx.seed, ctx.cfg.hash())
    records.save_centers(f.basis.centers, ctx.out / "centers.csv", ctx.meta(n=n))
    if report is not None:
        records.save_cv(report, ctx.out / "cv.csv", ctx.meta(n=n))
    ctx.sidecar("fit.json", n=n, fit_seed=fit_seed, selected_by_cv=report is not None,
                **{"lambda": lam, "tau": tau})
    print(f"lambda={lam!r} tau={tau!r} d={f.basis.d}")
    return 0


def _figure1(ctx: Context):
    kernel, cfg = _nbar(ctx), ctx.cfg
    n = cfg.fig1_generation
    x0, y0 = cfg.point[0], cfg.point[1]
    z = _grid(ctx)
    lam, tau = X.select_params(kernel, n, cfg.cv_grid(), ctx.seed, cfg.jobs)
    truth = kernel.density(x0, y0, z)
    curves = X.replicate(kernel, n, cfg.reps, lam, tau, ctx.seed, cfg.d_max,
                         lambda f: X.figure_slice(f, kernel, x0, y0, z)[0], cfg.jobs)
    rows = [[r, zz, v, t] for r, c in enumerate(curves) for zz, v, t in zip(z, c, truth)]
    records.write_csv(ctx.out / "figure1.csv", ["rep", "z", "estimate", "truth"], rows,
                      ctx.meta(n=n, x0=x0, y0=y0, **{"lambda": lam, "tau": tau}))
    return {"n": n, "lambda": lam, "tau": tau}


def _figure2(ctx: Context):
    kernel, cfg = _nbar(ctx), ctx.cfg
    rows, params = X.figure_point_boxplot(kernel, cfg.point, cfg.generations, cfg.reps, cfg.cv_grid(),
                                          ctx.seed, cfg.d_max, cfg.per_replication_cv, cfg.jobs)
    truth = float(kernel.density(*cfg.point))
    meta = ctx.meta(point=" ".join(map(repr, cfg.point)),
                    cv="per_replication" if cfg.per_replication_cv else "reused")
    records.write_csv(ctx.out / "figure2.csv", ["n", "rep", "estimate"], rows, meta)
    records.write_csv(ctx.out / "figure2_summary.csv", ["n", "min", "q1", "median", "q3", "max", "truth"],
                      _summary_rows(rows, truth), meta)
    return {"params": {str(n): p for n, p in params.items()}, "truth": truth}


def _figure3(ctx: Context):
    kernel, cfg = _nbar(ctx), ctx.cfg
    n = cfg.fig3_generation
    x0 = cfg.point[0]
    tri = X.sample_triangles(kernel, n, derive_seed(ctx.seed, _SIM_TAG, n))
    lam, tau, _ = _params(ctx, tri)
    f = X.fit_sample(tri, lam, tau, cfg.d_max, derive_seed(ctx.seed, _FIT_TAG, n))
    g = _grid(ctx)
    truth, estimate = X.figure_surface(f, kernel, x0, g, g)
    rows = [[y, z, truth[i, j], estimate[i, j]] for i, y in enumerate(g) for j, z in enumerate(g)]
    records.write_csv(ctx.out / "figure3.csv", ["y", "z", "truth", "estimate"], rows,
                      ctx.meta(n=n, x0=x0, **{"lambda": lam, "tau": tau}))
    return {"n": n, "lambda": lam, "tau": tau}


def _figure4(ctx: Context):
    kernel, cfg = _nbar(ctx), ctx.cfg
    rows, params = X.figure_error_boxplot(kernel, cfg.generations, cfg.reps, cfg.cv_grid(), ctx.seed,
                                          cfg.x0, _quad(ctx), cfg.d_max, cfg.jobs)
    meta = ctx.meta(x0=cfg.x0, box="-3 3")
    records.write_csv(ctx.out / "figure4.csv", ["n", "rep", "slice_error"], rows, meta)
    records.write_csv(ctx.out / "figure4_summary.csv", ["n", "min", "q1", "median", "q3", "max"],
                      _summary_rows(rows), meta)
    return {"params": {str(n): p for n, p in params.items()}}


_FIGURES = {1: _figure1, 2: _figure2, 3: _figure3, 4: _figure4}


def cmd_figures(args) -> int:
    ctx = _context(args)
    extra = _FIGURES[args.figure](ctx)
    ctx.sidecar(f"figure{args.figure}.json", **extra)
    print(ctx.out / f"figure{args.figure}.csv")
    return 0


def cmd_concentration(args) -> int:
    ctx = _context(args)
    model = ctx.cfg.kernel.build()
    if not isinstance(model, TwoPointModel):
        raise UsageError("concentration: needs kernel.name = twopoint")
    n, reps = ctx.cfg.generation, ctx.cfg.reps
    rows, C = X.run_concentration(model, ctx.cfg.test_function, n, reps, ctx.cfg.deltas, ctx.seed)
    header = ["delta", "tail", "se", "shape", "bound", "dominated"]
    records.write_csv(ctx.out / "concentration.csv", header, ([r[k] for k in header] for r in rows),
                      ctx.meta(n=n, reps=reps, g=ctx.cfg.test_function, alpha=abs(model.a), R=1.0, C=C,
                               c1=rows[0]["c1"], c2=rows[0]["c2"], v_n=rows[0]["v_n"]))
    ctx.sidecar("concentration.json", C=C)
    print(ctx.out / "concentration.csv")
    return 0


def cmd_rate(args) -> int:
    ctx = _context(args)
    cfg, k = ctx.cfg, ctx.cfg.kernel
    rows, slopes, params = X.run_rate_study(cfg.a_values, cfg.generations, cfg.reps, ctx.seed,
                                            cfg.cv_grid(), cfg.x0, _quad(ctx), cfg.d_max,
                                            k.sigma, k.rho, cfg.jobs)
    meta = ctx.meta(x0=cfg.x0, alpha="proxy |a| of the linear drift")
    records.write_csv(ctx.out / "rate.csv", ["a", "alpha_proxy", "n", "rep", "error"],
                      ([r.a, abs(r.a), r.n, r.rep, r.error] for r in rows), meta)
    records.write_csv(ctx.out / "rate_slopes.csv", ["a", "alpha_proxy", "slope"],
                      ([a, abs(a), s] for a, s in slopes.items()), meta)
    ctx.sidecar("rate.json", params={f"{a!r}/{n}": p for (a, n), p in params.items()})
    for a, s in slopes.items():
        print(f"a={a!r} slope={s!r}")
    return 0


def cmd_constants(args) -> int:
    try:
        prof = theory.ErgodicityProfile(args.alpha, args.R, args.n, args.gamma)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = prof.table()
    table["c1"] = theory.c1(args.alpha, args.R, args.n, args.sup_qg2)
    table["c2"] = theory.c2(args.alpha, args.R, args.sup_gtilde, args.sup_qg)
    for key in ("c_alpha", "c1", "c2", "v_n", "kappa_n", "e_alpha", "delta_n"):
        print(f"{key},{table[key]!r}")
    return 0


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
    common.add_argument("--jobs", type=int, help="worker processes (overrides [run] jobs)")
    common.add_argument("--out", help=f"output directory ({ENV_OUT} takes precedence)")

    p = argparse.ArgumentParser(prog="bmc-lsq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("simulate", parents=[common], help="simulate one tree and save it")
    s.add_argument("--generation", type=int, help="last generation (tree depth minus one)")
    s.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("fit", cmd_fit, "fit the density, with CV unless lambda and tau are set"),
                                 ("cv", cmd_cv, "cross-validate the (lambda, tau) grid")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--sample", help="saved tree (.bmct) instead of a fresh simulation")
        s.add_argument("--generation", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("figures", parents=[common], help="emit the data behind figure 1, 2, 3 or 4")
    s.add_argument("figure", type=int, choices=sorted(_FIGURES))
    s.add_argument("--reps", type=int)
    s.set_defaults(func=cmd_figures)

    s = sub.add_parser("concentration", parents=[common], help="tail frequencies against the Bernstein shape")
    s.add_argument("--generation", type=int)
    s.add_argument("--reps", type=int)
    s.set_defaults(func=cmd_concentration)

    s = sub.add_parser("rate", parents=[common], help="error decay against the ergodicity proxy |a|")
    s.add_argument("--reps", type=int)
    s.set_defaults(func=cmd_rate)

    s = sub.add_parser("constants", help="print the constants for (alpha, R, n, gamma)")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--R", type=float, default=1.0)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--sup-qg2", type=float, default=1.0, help="||Q g^2||_inf for c1")
    s.add_argument("--sup-qg", type=float, default=1.0, help="||Q g||_inf for c2")
    s.add_argument("--sup-gtilde", type=float, default=1.0, help="||g - <mu, g>||_inf for c2")
    s.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"bmc-lsq: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ConfigurationError, UnsupportedSlice, NumericError, ValueError, OSError) as exc:
        print(f"bmc-lsq {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
