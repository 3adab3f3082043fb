"""Command-line entry point: ``stableweb <subcommand> [options]``."""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import diagnostics as dg
from .engine import (ResourceError, compute_ages, dyadic_grid, full_occupancy, lattice_grid,
                     simulate, theta_grid)
from .io import (ConfigError, RecordError, dumps, estimate_rows_csv, load_paths,
                 parse_config, report_json, save_paths, serialize_config)
from .metrics import MetricOptions, hausdorff, metric_d, metric_d1, metric_rho
from .operators import filter_age, project
from .rng import stream_key
from .sampling import (CalibrationError, ConfigurationError, StableLaw,
                       calibrate_tail_constant)

EXIT_OK, EXIT_INVALID, EXIT_RESOURCE, EXIT_STATISTICAL = 0, 2, 3, 4

COMMANDS = ("simulate", "filter", "project", "metric", "hausdorff", "density", "age-density",
            "coaltime", "green", "check-compact", "skeleton", "calibrate")

PRESETS = {
    # density and age-density experiment: 10^5 torus sites at n = 2^6
    "alpha1.5": {"alpha": 1.5, "tail_constant": 0.25, "scale_n": 64, "half_width": 3125.0,
                 "window": 390.0, "replicas": 100,
                 "params": {"density": {"times": [1, 2, 4, 8, 16]},
                            "age-density": {"t": 16, "a": [0.25, 0.5], "cohorts": [2, 1, 0.5, 0.25]}}},
    "compact": {"alpha": 1.5, "tail_constant": 0.25, "scale_n": 64, "half_width": 48.0,
                "window": 6.0, "replicas": 100,
                "params": {"check-compact": {"levels": [1, 2, 3], "train": 100}}},
    "skeleton": {"alpha": 1.5, "tail_constant": 0.25, "scale_n": 64, "half_width": 40.0,
                 "window": 5.0, "replicas": 20,
                 "params": {"skeleton": {"thetas": [0.5, 0.25, 0.125], "N": 1}}},
}


class StatisticalFailure(Exception):
    pass


class UsageError(Exception):
    pass


# ----------------------------------------------------------------- setup --
def _parser():
    p = argparse.ArgumentParser(prog="stableweb", description="Coalescing stable-walk webs.")
    p.add_argument("command", choices=COMMANDS, metavar="command",
                   help="one of: " + ", ".join(COMMANDS))
    p.add_argument("inputs", nargs="*", help="input NDJSON path files")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="stableweb-out", help="output directory")
    p.add_argument("--replicas", type=int)
    p.add_argument("--assert", dest="assertion", nargs="+", metavar="KEY=VALUE",
                   help="acceptance check; failure exits with status 4")
    p.add_argument("--threads", type=int, default=1, help="replica parallelism")
    p.add_argument("--delta", type=float, help="age level for filter")
    p.add_argument("--level", type=int, help="projection level N")
    p.add_argument("--profile", help="compactness profile JSON for check-compact")
    return p


def load_config(args):
    raw = dict(PRESETS[args.preset]) if args.preset else {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ConfigError([("$", "configuration must be a JSON object")])
        raw.update(user)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.replicas is not None:
        raw["replicas"] = args.replicas
    return parse_config(json.dumps(raw))


def _assertions(tokens):
    out = {}
    for tok in tokens or ():
        key, sep, val = tok.partition("=")
        if not sep:
            raise UsageError(f"assertion '{tok}' is not KEY=VALUE")
        try:
            out[key] = float(val)
        except ValueError:
            raise UsageError(f"assertion value '{val}' is not a number") from None
    return out


def _mapper(threads):
    if threads <= 1:
        return map, None
    pool = ThreadPoolExecutor(max_workers=threads)
    return pool.map, pool


class Context:
    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg
        self.out = os.environ.get("STABLEWEB_OUT") or args.out
        self.checks = _assertions(args.assertion)
        self.map, self._pool = _mapper(args.threads)
        self._tail = None

    def params(self, name):
        p = self.cfg.params.get(name, {})
        if not isinstance(p, dict):
            raise ConfigError([(f"params.{name}", "must be an object")])
        return p

    @property
    def tail_constant(self):
        if self._tail is None:
            tc = self.cfg.tail_constant
            if tc == "calibrate":
                cp = self.params("calibrate")
                tc = calibrate_tail_constant(StableLaw(self.cfg.alpha, cp.get("scale", 1.0)),
                                             cp.get("n_steps", 2 ** 14),
                                             cp.get("replicas", 10 ** 5), self.cfg.seed,
                                             x_max=self.cfg.x_max)
            self._tail = float(tc)
        return self._tail

    def engine(self, **over):
        return self.cfg.engine(self.tail_constant, **over)

    def write(self, name, text):
        os.makedirs(self.out, exist_ok=True)
        path = os.path.join(self.out, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return path

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def _inputs(ctx, k):
    if len(ctx.args.inputs) != k:
        raise UsageError(f"{ctx.args.command} needs {k} input file(s), got {len(ctx.args.inputs)}")
    return [load_paths(p) for p in ctx.args.inputs]


def _metric_options(ctx):
    p = ctx.params("metric")
    kw = {k: p[k] for k in ("h", "h_max", "window", "n_max") if k in p}
    return MetricOptions(**kw)


def _row(estimator, params, estimate, half_width=None, stderr=None, replicas="", status="ok"):
    return {"estimator": estimator, "parameters": params, "estimate": estimate,
            "half_width": half_width, "stderr": stderr, "replicas": replicas, "status": status}


# -------------------------------------------------------------- commands --
def _starts(ctx, eng):
    st = ctx.cfg.start
    if st.kind == "full":
        return full_occupancy(eng)
    if st.kind == "dyadic":
        return dyadic_grid(eng, st.levels, st.space, st.time)
    if st.kind == "theta":
        return theta_grid(eng, st.theta, st.space, st.time)
    return lattice_grid(eng, st.space, st.time)


def cmd_simulate(ctx):
    base = ctx.engine()
    starts = _starts(ctx, base)
    min_age = ctx.params("simulate").get("min_age")

    def one(r):
        eng = ctx.engine(seed=stream_key(ctx.cfg.seed, r))
        system = simulate(eng, starts)
        col = compute_ages(system, r, min_age=min_age)
        return r, col, {"replica": r, "walkers": system.n_walkers, "events": int(system.processed),
                        "coalescences": int(system.events.shape[0]), "wrapped": system.wrapped}

    os.makedirs(os.path.join(ctx.out, "paths"), exist_ok=True)
    summary = []
    parts = []
    for r, col, info in ctx.map(one, range(ctx.cfg.replicas)):
        part = os.path.join(ctx.out, "paths", f"replica-{r:05d}.ndjson")
        save_paths(col, part)
        parts.append(part)
        summary.append(info)
    with open(os.path.join(ctx.out, "paths.ndjson"), "w", encoding="utf-8", newline="\n") as out:
        for part in parts:
            with open(part, encoding="utf-8") as fh:
                out.write(fh.read())
    ctx.write("simulate.json", report_json({"config": ctx.cfg.to_dict(), "replicas": summary}))
    return EXIT_OK


def cmd_filter(ctx):
    (col,) = _inputs(ctx, 1)
    delta = ctx.args.delta if ctx.args.delta is not None else ctx.params("filter").get("delta")
    if delta is None:
        raise UsageError("filter needs --delta")
    save_paths(filter_age(col, float(delta)), os.path.join(_mk(ctx), "filtered.ndjson"))
    return EXIT_OK


def cmd_project(ctx):
    (col,) = _inputs(ctx, 1)
    N = ctx.args.level if ctx.args.level is not None else ctx.params("project").get("N")
    if N is None:
        raise UsageError("project needs --level")
    save_paths(project(col, int(N)), os.path.join(_mk(ctx), "projected.ndjson"))
    return EXIT_OK


def _mk(ctx):
    os.makedirs(ctx.out, exist_ok=True)
    return ctx.out


def _single(col, name):
    if len(col) == 0:
        return None
    if len(col) > 1:
        raise UsageError(f"{name} holds {len(col)} paths; metric compares single paths")
    return next(iter(col))


def cmd_metric(ctx):
    a, b = _inputs(ctx, 2)
    p, q = _single(a, ctx.args.inputs[0]), _single(b, ctx.args.inputs[1])
    opts = _metric_options(ctx)
    if p is None or q is None:
        res = {"d": None, "d1": None, "rho": 0.0 if p is q else 1.0}
    else:
        res = {"d": metric_d(p, q, opts) if math.isfinite(p.end) and math.isfinite(q.end) else None,
               "d1": metric_d1(p, q, opts), "rho": metric_rho(p, q, opts)}
    ctx.write("metric.json", report_json(res))
    print(dumps(res))
    return EXIT_OK


def cmd_hausdorff(ctx):
    a, b = _inputs(ctx, 2)
    val = hausdorff(a, b, _metric_options(ctx))
    ctx.write("hausdorff.json", report_json({"hausdorff": val, "sizes": [len(a), len(b)]}))
    print(dumps(val))
    return EXIT_OK


def cmd_density(ctx):
    p = ctx.params("density")
    times = p.get("times", [1, 2, 4, 8, 16])
    runs = dg.density_runs(ctx.engine(), ctx.cfg.replicas, times, mapper=ctx.map)
    est = [dg.estimate_density(runs, t) for t in runs.times]
    slope = dg.density_slope(est)
    rows = [_row("density", {"t": e.t, "n": ctx.cfg.scale_n}, e.density, 1.96 * e.stderr,
                 e.stderr, e.replicas) for e in est]
    rows.append(_row("density_slope", {"alpha": ctx.cfg.alpha}, slope, None, None,
                     ctx.cfg.replicas))
    ctx.write("density.csv", estimate_rows_csv(rows))
    print(f"slope {slope:.4f} (target {-1 / ctx.cfg.alpha:.4f})")
    if "slope" in ctx.checks:
        tol = ctx.checks.get("tol", 0.05)
        if abs(slope - ctx.checks["slope"]) > tol:
            raise StatisticalFailure(f"slope {slope:.4f} not within {tol} of {ctx.checks['slope']}")
    return EXIT_OK


def cmd_age_density(ctx):
    p = ctx.params("age-density")
    t = float(p.get("t", 16.0))
    a_values = [float(a) for a in p.get("a", [0.25, 0.5])]
    cohorts = sorted({float(c) for c in p.get("cohorts", [4 * a for a in a_values]
                                              + [2 * a for a in a_values] + a_values)})
    times = sorted({float(x) for x in p.get("times", [t])} | {t})
    runs = dg.density_runs(ctx.engine(), ctx.cfg.replicas, times, ages=cohorts, mapper=ctx.map)
    rows, worst = [], 0.0
    for a in a_values:
        for lo, hi in ((a, 2 * a), (2 * a, 4 * a)):
            e = dg.estimate_age_density(runs, t, (lo, hi))
            rows.append(_row("age_density", {"t": t, "lo": lo, "hi": hi}, e.density,
                             1.96 * e.stderr, e.stderr, e.replicas))
        obs, pred = dg.age_band_ratio(runs, t, a, ctx.cfg.alpha)
        rows.append(_row("age_band_ratio", {"t": t, "a": a, "predicted": pred}, obs, None, None,
                         ctx.cfg.replicas))
        worst = max(worst, abs(obs / pred - 1.0))
        print(f"a={a}: ratio {obs:.4f} predicted {pred:.4f}")
    ctx.write("age_density.csv", estimate_rows_csv(rows))
    if "rtol" in ctx.checks and worst > ctx.checks["rtol"]:
        raise StatisticalFailure(f"band ratio off by {worst:.3f} > {ctx.checks['rtol']}")
    return EXIT_OK


def cmd_coaltime(ctx):
    p = ctx.params("coaltime")
    u = float(p.get("u", 1.0))
    betas = [float(b) for b in p.get("betas", [1.0])]
    scales = [int(n) for n in p.get("scales", [2 ** 10, 2 ** 14])]
    law = ctx.engine().law()
    est = dg.estimate_coalescence_laplace(law, u, betas, scales, ctx.cfg.replicas,
                                          p.get("horizon", 8.0), ctx.cfg.seed)
    rows = [_row("laplace_meeting", {"u": u, "beta": e.beta, "n": e.scale_n}, e.estimate,
                 e.half_width, e.stderr, e.replicas, e.status) for e in est]
    ctx.write("coaltime.csv", estimate_rows_csv(rows))
    for e in est:
        print(f"n={e.scale_n} beta={e.beta:g}: {e.estimate:.5f} +- {e.stderr:.5f} [{e.status}]")
    if "sigma" in ctx.checks:
        for b in betas:
            first = next(e for e in est if e.beta == b and e.scale_n == scales[0])
            last = next(e for e in est if e.beta == b and e.scale_n == scales[-1])
            if not dg.within_joint_sigma(first, last, ctx.checks["sigma"]):
                raise StatisticalFailure(f"beta={b}: n={scales[0]} and n={scales[-1]} differ by "
                                         f"more than {ctx.checks['sigma']} joint sigma")
    return EXIT_OK


def cmd_green(ctx):
    p = ctx.params("green")
    u = float(p.get("u", 0.5))
    betas = [float(b) for b in p.get("betas", [1.0])]
    n = int(p.get("n", ctx.cfg.scale_n))
    est = dg.estimate_green(ctx.engine().law(), u, betas, n, ctx.cfg.replicas, ctx.cfg.seed,
                            p.get("horizon_factor", 10.0))
    rows = [_row("green", {"u": e.u, "beta": e.beta, "n": e.scale_n}, e.estimate,
                 1.96 * e.stderr, e.stderr, e.replicas, e.status) for e in est]
    ctx.write("green.csv", estimate_rows_csv(rows))
    return EXIT_OK


def cmd_check_compact(ctx):
    p = ctx.params("check-compact")
    levels = tuple(int(N) for N in p.get("levels", [1, 2, 3]))
    if ctx.args.profile:
        with open(ctx.args.profile, encoding="utf-8") as fh:
            profile = dg.CompactnessProfile.from_json(json.load(fh))
    else:
        profile = None
    if ctx.args.inputs:
        if profile is None:
            raise UsageError("checking given paths needs --profile")
        cols = _inputs(ctx, len(ctx.args.inputs))
    else:
        eng = ctx.engine()
        n_max = max(levels)
        if profile is None:
            train = list(ctx.map(lambda r: dg.compactness_sample(eng, n_max, r),
                                 range(int(p.get("train", ctx.cfg.replicas)))))
            profile = dg.fit_profile(train, levels, **p.get("headroom", {}))
        offset = int(p.get("test_offset", 10 ** 6))
        cols = list(ctx.map(lambda r: dg.compactness_sample(eng, n_max, offset + r),
                            range(ctx.cfg.replicas)))
    reports = [dg.check_compactness(c, profile, levels, _metric_options(ctx)) for c in cols]
    rate = sum(r.passed for r in reports) / len(reports)
    ctx.write("profile.json", report_json(profile.to_json()))
    ctx.write("compactness.json", report_json({
        "pass_rate": rate, "levels": list(levels),
        "replicas": [dict(r.to_json(), index=i) for i, r in enumerate(reports)]}))
    print(f"pass rate {rate:.3f} over {len(reports)} collections")
    if "pass_rate" in ctx.checks and rate < ctx.checks["pass_rate"]:
        raise StatisticalFailure(f"pass rate {rate:.3f} below {ctx.checks['pass_rate']}")
    return EXIT_OK


def cmd_skeleton(ctx):
    p = ctx.params("skeleton")
    thetas = [float(t) for t in p.get("thetas", [0.5, 0.25, 0.125])]
    N = int(p.get("N", 1))
    gaps = dg.skeleton_gap(ctx.engine(), thetas, N, ctx.cfg.replicas, _metric_options(ctx),
                           mapper=ctx.map)
    rows = []
    for g in gaps:
        rows.append(_row("skeleton_gap_median", {"theta": g.theta, "N": N}, g.median,
                         replicas=len(g.gaps)))
        rows.append(_row("skeleton_gap_p90", {"theta": g.theta, "N": N}, g.p90,
                         replicas=len(g.gaps)))
        print(f"theta={g.theta:g}: median {g.median:.4f} p90 {g.p90:.4f}")
    ctx.write("skeleton.csv", estimate_rows_csv(rows))
    if "monotone" in ctx.checks and ctx.checks["monotone"]:
        med = [g.median for g in gaps]
        if any(b > a for a, b in zip(med, med[1:])):
            raise StatisticalFailure(f"median gaps {med} increase as theta shrinks")
    return EXIT_OK


def cmd_calibrate(ctx):
    p = ctx.params("calibrate")
    law = StableLaw(ctx.cfg.alpha, float(p.get("scale", 1.0)))
    c = calibrate_tail_constant(law, int(p.get("n_steps", 2 ** 14)),
                                int(p.get("replicas", 10 ** 5)), ctx.cfg.seed,
                                x_max=ctx.cfg.x_max)
    ctx.write("calibration.json", report_json({"alpha": law.alpha, "scale": law.scale,
                                               "tail_constant": c}))
    print(dumps(c))
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "filter": cmd_filter, "project": cmd_project,
            "metric": cmd_metric, "hausdorff": cmd_hausdorff, "density": cmd_density,
            "age-density": cmd_age_density, "coaltime": cmd_coaltime, "green": cmd_green,
            "check-compact": cmd_check_compact, "skeleton": cmd_skeleton,
            "calibrate": cmd_calibrate}


def cli_dispatch(argv):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    ctx = None
    try:
        ctx = Context(args, load_config(args))
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        status = HANDLERS[args.command](ctx)
        ctx.write("config.json", serialize_config(ctx.cfg))
        return status
    except StatisticalFailure as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_STATISTICAL
    except (ResourceError, MemoryError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, ConfigurationError, CalibrationError, RecordError, UsageError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        if ctx is not None:
            ctx.close()


def main(argv=None):
    sys.exit(cli_dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
