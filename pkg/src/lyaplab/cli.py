"""Command-line front end: ``lyaplab <subcommand> [--config FILE] [flags]``.

Every run writes ``results.json`` (sorted keys, config hash, tool version),
CSV curves where applicable, and with ``--emit-plot`` a gnuplot script.
Exit status: 0 success, 2 configuration/schema error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__, config as C, rng
from . import estimators as est
from .errors import ConfigError, Degenerate, LyapLabError, NumericalFailure
from .measures import Estimate

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _clean(x):
    """JSON-ready copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, Estimate):
        return _clean(x.to_dict())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _csv(header, rows):
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# experiments: each returns (results dict, {csv name: text}, plot spec or None)


def _seed(cfg):
    return int(cfg.get("master_seed", 0))


def run_lyap(cfg, workers):
    m = C.build_measure(cfg["measure"])
    e = est.lyap_top(m, cfg["n"], cfg["trials"], cfg.get("method", "norm_mean"), seed=_seed(cfg), workers=workers)
    return {"lyap_top": e, "method": cfg.get("method", "norm_mean")}, {}, None


def run_gap(cfg, workers):
    m = C.build_measure(cfg["measure"])
    l1, s2, g = est.lyap_spectrum_top2(m, cfg["n"], cfg["trials"], seed=_seed(cfg), workers=workers)
    return {"lyap_top": l1, "lyap_sum2": s2, "gap": g}, {}, None


def run_variance(cfg, workers):
    m = C.build_measure(cfg["measure"])
    s = est.sigma_direct(m, cfg.get("x0"), cfg["n"], cfg["trials"], seed=_seed(cfg), workers=workers)
    res = {"sigma_direct": s.sigma, "lambda_independent": s.lam}
    if cfg.get("coboundary", False):
        c = est.sigma_coboundary(m, cfg.get("n_inner", 16), cfg.get("chain_samples", 2000), seed=_seed(cfg),
                                 floor=cfg.get("floor", est.DEFAULT_FLOOR))
        res["sigma_coboundary"] = c.sigma
        res["lambda_stationary"] = c.lam
    return res, {}, None


def _fits(curve, models):
    out = {}
    for mdl in models:
        try:
            f = est.fit_decay(curve, mdl)
            out[mdl] = {"C": f.C, "c": f.c, "q": f.q, "rho": f.rho, "residual": f.residual,
                        "n_range": list(f.n_range), "dropped": list(f.dropped), "converged": f.converged}
        except Degenerate as e:
            out[mdl] = {"error": str(e)}
    return out


def _curve_result(curve, models):
    rows = [{"n": r.n, "eps": r.eps, "p_hat": r.p_hat, "ci": list(r.ci), "trials": r.trials, "count": r.count}
            for r in curve.rows]
    res = {"statistic": curve.statistic, "rows": rows, "lambda_hat": curve.lam, "fits": _fits(curve, models)}
    return res


LDE_PLOT = ("lde.csv", "n", "p_hat", 1, 3, True)


def run_lde(cfg, workers):
    m = C.build_measure(cfg["measure"])
    seed = _seed(cfg)
    lam = None
    eps = cfg.get("eps")
    if eps is None:
        lam = est.statistic_lambda(m, cfg["statistic"], max(cfg["n_grid"]), cfg["trials"],
                                   rng.derive_seed(seed, "lambda"), cfg.get("x0"), cfg.get("f"), workers)
        eps = cfg["eps_rel"] * abs(lam.point)
    curve = est.lde_curve(m, cfg["statistic"], eps, cfg["n_grid"], cfg["trials"], seed=seed, x0=cfg.get("x0"),
                          f=cfg.get("f"), workers=workers, lam=lam)
    return _curve_result(curve, cfg.get("fit_models", list(est.MODELS))), {"lde.csv": curve.to_csv()}, LDE_PLOT


def run_wdist(cfg, workers):
    from . import transport as T
    a, b = C.build_measure(cfg["measure"]), C.build_measure(cfg["measure_b"])
    g = C.gauge(cfg["gauge"])
    if cfg.get("solver", "exact") == "exact":
        plan = T.w_concave_exact(a, b, g)
    else:
        plan = T.w_concave_entropic(a, b, g, reg=cfg.get("reg", 1e-2), tol=cfg.get("tol", 1e-9),
                                    max_iter=cfg.get("max_iter", 10_000))
    winf, rad = T.w_infinity_detail(a, b)
    res = {"w_concave": plan.primal_cost, "duality_gap": plan.duality_gap, "bracket": list(plan.bracket),
           "solver": plan.solver, "gauge": str(g), "w_infinity": winf, "w_infinity_rounding_radius": rad}
    return res, {"coupling.csv": plan.to_csv(T.cost_matrix(a, b, g))}, None


def run_regularity(cfg, workers):
    from .walk import projective_chain
    m = C.build_measure(cfg["measure"])
    samples = cfg.get("chain_samples", 20000)
    chains = max(1, min(cfg["trials"], samples))
    per = -(-samples // chains)
    ch = projective_chain(m, np.ones(m.d) / math.sqrt(m.d), per, chains, _seed(cfg), cfg.get("burn_in", cfg["n"]))
    radii = cfg.get("radii", list(np.geomspace(1e-2, 0.3, 10)))
    rep = est.regularity_report(ch.flat()[:samples], radii, n_centers=cfg.get("n_centers", 256), seed=_seed(cfg))
    rows = list(zip(rep.radii, rep.max_mass))
    return rep.to_dict(), {"regularity.csv": _csv(("radius", "max_mass"), rows)}, \
        ("regularity.csv", "radius", "max_mass", 1, 2, True)


def run_family(cfg, workers):
    ms = [C.build_measure(s) for s in cfg["family"]]
    g = C.gauge(cfg["gauge"]) if "gauge" in cfg else None
    sw = est.family_sweep(ms, cfg.get("estimator", "lyap_top"), cfg["n"], cfg["trials"], seed=_seed(cfg),
                          workers=workers, gauge=g)
    rows = [(i, p, s, "" if d is None else repr(float(d))) for i, p, s, d in sw.rows()]
    res = {"estimates": sw.estimates, "inf": sw.inf, "sup": sw.sup, "argmin": sw.argmin, "argmax": sw.argmax,
           "distances": sw.distances}
    plot = ("family.csv", "distance", "estimate", 4, 2, False) if g is not None else None
    return res, {"family.csv": _csv(("index", "estimate", "stderr", "distance"), rows)}, plot


def run_anderson(cfg, workers):
    from . import anderson as A
    spec = A.PotentialSpec.parse(cfg["potential"])
    seed = _seed(cfg)
    if cfg["action"] == "sweep":
        grid = A.energy_grid(cfg.get("emin", -2.0), cfg.get("emax", 2.0), cfg.get("count", 9))
        rows = A.lyap_vs_energy(spec, grid, cfg["n"], cfg["trials"], seed=seed, workers=workers)
        res = {"potential": spec.describe(), "rows": [{"E": e, "lambda": l, "stderr": s} for e, l, s in rows]}
        return res, {"anderson_sweep.csv": _csv(("E", "lambda", "stderr"), rows)}, \
            ("anderson_sweep.csv", "E", "lambda", 1, 2, False)
    energy = cfg.get("energy", 0.0)
    x0 = cfg.get("x0", [1.0, 0.0])
    f = cfg.get("f", [1.0, 0.0])
    n_grid = cfg.get("n_grid", [cfg["n"]])
    m = A.lifted_measure(spec, energy)
    eps = cfg.get("eps")
    lam = None
    if eps is None:
        lam = est.statistic_lambda(m, "vec_norm", max(n_grid), cfg["trials"], rng.derive_seed(seed, "lambda"),
                                   x0, None, workers)
        eps = cfg.get("eps_rel", 0.25) * lam.point
    curve = A.coeff_lde(spec, energy, x0, f, eps, n_grid, cfg["trials"], seed=seed, workers=workers, lam=lam)
    return _curve_result(curve, cfg.get("fit_models", list(est.MODELS))), {"lde.csv": curve.to_csv()}, LDE_PLOT


def run_hyperbolic(cfg, workers):
    from . import hyperbolic as H
    rep = H.octagon_rep()
    mode = cfg.get("length_mode", "norm")
    seed = _seed(cfg)
    if cfg["action"] == "clt":
        s = H.word_length_stats(rep, cfg["n"], cfg["trials"], mode, seed=seed, workers=workers)
        return {"relator_residual": rep.relator_residual(), "stats": s.to_dict()}, {}, None
    tmax, steps = cfg.get("tmax", 0.2), cfg.get("steps", 10)
    grid = [tmax * i / steps for i in range(steps + 1)]
    rows = H.deformation_sweep(rep, grid, cfg["n"], cfg["trials"], seed=seed, length_mode=mode, workers=workers)
    table = [(r.t, r.w_inf, r.stats.L_hat.point, r.stats.L_hat.stderr, r.stats.sigma_hat.point,
              r.delta_L.point, r.delta_L.stderr, r.relator_residual) for r in rows]
    res = {"label": "formal deformation", "rows": [dict(zip(
        ("t", "w_inf", "L_hat", "L_stderr", "sigma_hat", "delta_L", "delta_L_stderr", "relator_residual"), r))
        for r in table], "envelope": H.linear_envelope(rows)}
    return res, {"hyperbolic_sweep.csv": _csv(("t", "w_inf", "L_hat", "L_stderr", "sigma_hat", "delta_L",
                                               "delta_L_stderr", "relator_residual"), table)}, \
        ("hyperbolic_sweep.csv", "t", "L_hat", 1, 3, False)


RUNNERS = {"lyap": run_lyap, "gap": run_gap, "variance": run_variance, "lde": run_lde, "wdist": run_wdist,
           "regularity": run_regularity, "family": run_family, "anderson": run_anderson,
           "hyperbolic": run_hyperbolic}


def plot_script(spec):
    csv_name, xlab, ylab, xcol, ycol, logy = spec
    lines = ["set datafile separator ','", "set key off", f"set xlabel '{xlab}'", f"set ylabel '{ylab}'"]
    if logy:
        lines.append("set logscale y")
    lines.append(f"plot '{csv_name}' every ::1 using {xcol}:{ycol} with linespoints")
    return "\n".join(lines) + "\n"


def run(cfg: dict, out_dir: str, workers=None, emit_plot=False, text=None) -> dict:
    """Validate ``cfg``, run the experiment and write its files; returns the results document."""
    C.validate(cfg, text)
    res, csvs, plot = RUNNERS[cfg["subcommand"]](cfg, workers)
    doc = {"subcommand": cfg["subcommand"], "config": {k: v for k, v in cfg.items() if k not in C.RUNTIME_KEYS},
           "config_hash": C.config_hash(cfg), "version": __version__, "master_seed": _seed(cfg),
           "results": res}
    doc = _clean(doc)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    for name, body in sorted(csvs.items()):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(body)
    if emit_plot and plot is not None:
        with open(os.path.join(out_dir, "plot.gp"), "w", encoding="utf-8") as fh:
            fh.write(plot_script(plot))
    return doc


def build_parser():
    p = argparse.ArgumentParser(prog="lyaplab", description="Random matrix product experiments")
    p.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    sub = p.add_subparsers(dest="subcommand")
    for name in C.SUBCOMMANDS:
        s = sub.add_parser(name)
        if name in ("anderson", "hyperbolic"):
            s.add_argument("action", nargs="?", choices=("sweep", "lde") if name == "anderson" else ("clt", "sweep"))
        s.add_argument("--config", help="JSON experiment file")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--workers", type=int, help="worker threads (output does not depend on it)")
        s.add_argument("--out-dir", default=None, help="directory for result files (default: current)")
        s.add_argument("--emit-plot", action="store_true", help="also write a gnuplot script")
        s.add_argument("--n", type=int)
        s.add_argument("--trials", type=int)
        if name == "anderson":
            s.add_argument("--potential")
            s.add_argument("--emin", type=float)
            s.add_argument("--emax", type=float)
            s.add_argument("--count", type=int)
            s.add_argument("--energy", type=float)
            s.add_argument("--eps", type=float)
        if name == "hyperbolic":
            s.add_argument("--rep", choices=("octagon",))
            s.add_argument("--tmax", type=float)
            s.add_argument("--steps", type=int)
            s.add_argument("--length-mode", choices=("norm", "translation"))
    return p


_FLAG_KEYS = ("n", "trials", "potential", "emin", "emax", "count", "energy", "eps", "rep", "tmax", "steps",
              "length_mode", "action")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_schema:
        print(json.dumps(C.SCHEMA, indent=2, sort_keys=True))
        return 0
    if args.subcommand is None:
        build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG
    text = None
    try:
        if args.config:
            cfg, text = C.load(args.config)
        else:
            cfg = {}
        cfg.setdefault("subcommand", args.subcommand)
        if cfg["subcommand"] != args.subcommand:
            raise ConfigError(f"config is for {cfg['subcommand']!r}, not {args.subcommand!r}")
        for k in _FLAG_KEYS:
            v = getattr(args, k, None)
            if v is not None:
                cfg[k] = v
        if args.seed is not None:
            cfg["master_seed"] = args.seed
        workers = args.workers or cfg.get("workers")
        out_dir = args.out_dir or cfg.get("out_dir", ".")
        run(cfg, out_dir, workers, args.emit_plot, text)
    except ConfigError as e:
        print(f"config error:\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as e:
        where = "" if e.trial is None else f" (trial {e.trial}, seed {e.seed})"
        print(f"numerical failure: {e}{where}", file=sys.stderr)
        return EXIT_NUMERIC
    except LyapLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
