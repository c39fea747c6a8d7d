"""Config-driven command line front end.

Three subcommands cover the toolkit: ``params`` dumps normal-form
parameters (optionally sweeping the quadratic family), ``portrait`` emits
phase-portrait point clouds, and ``run`` executes the Monte Carlo
experiments defined in [experiment] blocks of the config file.  Every
output directory receives the original config text and the resolved
provenance JSON; rerunning from those reproduces all artifacts byte for
byte at any worker count.

Exit codes: 0 on success, 1 when a configured assertion fails, 2 for
configuration errors.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .collisions import CollisionState, iterate
from .coordinates import get_theta_table
from .experiments import (
    bm_scaling,
    escape_measure_decay,
    escape_tail_fit,
    escape_time_mc,
    residual_order_fit,
    return_scan,
    trapping_test,
)
from .io import ensure_outdir, write_csv, write_json
from .normal_form import (
    direct_variance_slope,
    fhat_portrait,
    green_kubo_D2,
    orbit_search,
    sawtooth_portrait,
    scan_windows,
)
from .stats import bm_hit_upper_prob
from .wall_motion import compute_params, delta_closed_form, profile_from_config

_RUN_KINDS = {
    "escape": ("v0", "C", "trials", "budget"),
    "clt": ("v0", "a", "b", "trials"),
    "trap": ("vbar", "iterations", "ball_radius"),
    "measure-decay": ("v0", "C", "trials", "budgets"),
    "residual-fit": ("I_grid", "samples_per_I"),
    "diffusion": ("delta",),
    "orbits": ("delta", "N_max"),
    "windows": ("N_max", "theta_step"),
    "return-fit": ("I_level", "samples"),
}

_EPILOG = """\
subcommands and required config keys:
  params         [profile] family (+A/B, amplitude, C, knots); flag --sweep-A LO:HI:STEP
  portrait       [portrait] map = sawtooth|fhat|corrected|physical, iters;
                 delta (torus maps) or [profile] (physical); optional seeds,
                 v_lo/v_hi window, delta1, I_abs
  run            one or more [experiment] blocks, each with kind = one of
                 escape (v0, C, trials, budget), clt (v0, a, b, trials),
                 trap (vbar, iterations, ball_radius),
                 measure-decay (v0, C, trials, budgets),
                 residual-fit (I_grid, samples_per_I), diffusion (delta),
                 orbits (delta, N_max), windows (N_max, theta_step),
                 return-fit (I_level, samples)
global flags: --config PATH --out DIR --seed U64 --workers N --tol FLOAT
"""


def _fail_config(msg):
    print(f"config error: {msg}", file=sys.stderr)
    return 2


def _emit_provenance(cfg, outdir):
    with open(os.path.join(outdir, "config.cfg"), "w") as fh:
        fh.write(cfg.text)
    with open(os.path.join(outdir, "config.resolved.json"), "w") as fh:
        fh.write(cfg.to_json())
        fh.write("\n")


def cmd_params(cfg, outdir, args):
    ensure_outdir(outdir)
    _emit_provenance(cfg, outdir)
    if args.sweep_A:
        lo, hi, step = (float(x) for x in args.sweep_A.split(":"))
        rows = []
        a = lo
        while a <= hi + 1e-12:
            if a > -4.0:
                d = delta_closed_form(a)
                regime = "Parabolic" if d in (0.0, 4.0) else (
                    "Elliptic" if 0.0 < d < 4.0 else "Hyperbolic"
                )
                rows.append((a, d, regime))
            a += step
        write_csv(os.path.join(outdir, "delta_sweep.csv"),
                  ["A", "delta", "regime"], rows)
        print(f"wrote {len(rows)} sweep rows to {outdir}/delta_sweep.csv")
        return 0
    profile = profile_from_config(cfg.profile)
    pars = compute_params(profile, tol=cfg.run.get("tol", 1e-10))
    write_json(os.path.join(outdir, "params.json"), pars.as_dict())
    print(f"{profile}: delta = {pars.delta!r} ({pars.regime}), "
          f"delta1 = {pars.delta1!r}")
    return 0


def cmd_portrait(cfg, outdir, args):
    block = dict(cfg.portrait)
    if not block:
        raise ConfigError("portrait needs a [portrait] section")
    kind = block.get("map")
    iters = int(block.get("iters", 0))
    if kind not in ("sawtooth", "fhat", "corrected", "physical"):
        raise ConfigError("portrait map must be sawtooth|fhat|corrected|physical")
    if iters <= 0:
        raise ConfigError("portrait needs iters > 0")
    ensure_outdir(outdir)
    _emit_provenance(cfg, outdir)
    seed = int(cfg.run.get("seed", 0))

    rows = []
    if kind == "physical":
        profile = profile_from_config(cfg.profile)
        v_lo = float(block.get("v_lo", 10.0))
        v_hi = float(block.get("v_hi", 20.0))
        n_seeds = int(block.get("seeds", 20))
        rng = np.random.default_rng(np.random.Philox(key=[seed, 0]))
        for k in range(n_seeds):
            st = CollisionState.at(rng.random(), v_lo + (v_hi - v_lo) * rng.random())
            tr = iterate(profile, st, stop=lambda n, s: n >= iters)
            for i in range(len(tr)):
                rows.append((k, tr.phase[i], tr.v[i]))
        header = ["orbit", "phase", "v"]
        pars = compute_params(profile)
        write_json(os.path.join(outdir, "params.json"), pars.as_dict())
    else:
        delta = block.get("delta")
        if delta is None:
            raise ConfigError("torus portraits need delta in [portrait]")
        delta = float(delta)
        n_seeds = block.get("seeds", 1)
        if kind == "sawtooth":
            clouds = sawtooth_portrait(delta, int(n_seeds), iters, seed=seed)
        else:
            delta1 = float(block.get("delta1", 0.0))
            i_abs = float(block.get("I_abs", 50.0))
            rng = np.random.default_rng(np.random.Philox(key=[seed, 0]))
            starts = [(rng.random(), i_abs + rng.random()) for _ in range(int(n_seeds))]
            clouds = fhat_portrait(delta, starts, iters,
                                   delta1=delta1, corrected=(kind == "corrected"))
        for k, cloud in enumerate(clouds):
            for tau, act in cloud:
                rows.append((k, float(tau), float(act)))
        header = ["orbit", "tau", "I"]
    path = os.path.join(outdir, "portrait.csv")
    write_csv(path, header, rows)
    with open(os.path.join(outdir, "README.txt"), "w") as fh:
        fh.write(
            "portrait.csv columns:\n"
            f"  orbit: seed index\n  {header[1]}, {header[2]}: phase-space "
            "coordinates of successive iterates, one row per iterate.\n"
            "Scatter-plot the last two columns, colored by orbit, to render "
            "the phase portrait.\n"
        )
    print(f"wrote {len(rows)} portrait points to {path}")
    return 0


def _check(asserts, name, ok, detail):
    status = "pass" if ok else "FAIL"
    print(f"  assert {name}: {status} ({detail})")
    asserts.append(ok)


def _exp_seed(exp, cfg, args):
    if args.seed is not None:
        return int(args.seed)
    return int(exp.get("seed", cfg.run.get("seed", 0)))


def _run_escape(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    records = escape_time_mc(
        profile, float(exp["v0"]), float(exp["C"]),
        float(exp.get("v_max", 1e3 * float(exp["v0"]))),
        int(exp["trials"]), int(exp["budget"]), seed, workers,
    )
    write_csv(
        os.path.join(outdir, f"{tag}_records.csv"),
        ["trial", "t0", "v0", "outcome", "T", "periods", "v_final"],
        [(r.trial, r.t0, r.v0, r.outcome, r.T, r.periods, r.v_final) for r in records],
    )
    try:
        summary = escape_tail_fit(records, float(exp["v0"]), int(exp["budget"]))
        payload = summary.as_dict()
        ks = summary.ks
        frac = summary.extra["frac_returned"]
    except ValueError as exc:
        # too much censoring for the median fit: keep the records, say why
        ks = None
        frac = float(np.mean([r.outcome == "ReturnedBelowC" for r in records]))
        payload = {"name": "escape_tail", "fit_skipped": str(exc),
                   "frac_returned": frac}
    write_json(os.path.join(outdir, f"{tag}_summary.json"),
               {**payload, "config": cfg.resolved()})
    if "assert_ks_max" in exp:
        _check(asserts, "ks_max", ks is not None and ks <= float(exp["assert_ks_max"]),
               f"ks = {ks}")
    if "assert_min_returned" in exp:
        _check(asserts, "min_returned", frac >= float(exp["assert_min_returned"]),
               f"returned = {frac:.4f}")


def _run_clt(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    samples, summary = bm_scaling(
        profile, float(exp["v0"]), float(exp["a"]), float(exp["b"]),
        int(exp["trials"]), seed, workers,
    )
    write_csv(
        os.path.join(outdir, f"{tag}_stops.csv"),
        ["trial", "t0", "stop_t", "stop_level", "B_stop"],
        [(s.trial, s.t0, s.stop_t, s.stop_level, s.b_stop) for s in samples],
    )
    write_json(os.path.join(outdir, f"{tag}_summary.json"),
               {**summary.as_dict(), "config": cfg.resolved()})
    if "assert_slope_rel_err" in exp:
        pars = compute_params(profile)
        gk = green_kubo_D2(pars.delta, seed=seed)
        rel = abs(summary.estimate - gk.d2) / gk.d2
        _check(asserts, "slope_rel_err", rel <= float(exp["assert_slope_rel_err"]),
               f"slope = {summary.estimate:.4f}, D2 = {gk.d2:.4f}, rel = {rel:.3f}")
    if "assert_hit_sigmas" in exp:
        p_hat = summary.extra["p_hit_upper"]
        n = summary.extra["n_stopped"]
        p_bm = bm_hit_upper_prob(float(exp["a"]), float(exp["b"]))
        sig = math.sqrt(p_bm * (1 - p_bm) / n)
        dev = abs(p_hat - p_bm) / sig
        _check(asserts, "hit_sigmas", dev <= float(exp["assert_hit_sigmas"]),
               f"p_hat = {p_hat:.4f} vs {p_bm:.4f}, {dev:.2f} sigma")


def _run_trap(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    res = trapping_test(
        profile, float(exp["vbar"]), int(exp["iterations"]),
        float(exp["ball_radius"]), int(exp.get("ball_points", 20)),
    )
    write_json(
        os.path.join(outdir, f"{tag}_summary.json"),
        {
            "center_phase": res.center_state[0],
            "center_v": res.center_state[1],
            "J_target": res.j_target,
            "min_ratio": res.min_ratio,
            "max_ratio": res.max_ratio,
            "survived": res.survived,
            "ball_survived": res.ball_survived,
            "config": cfg.resolved(),
        },
    )
    if "assert_ratio_band" in exp:
        lo, hi = (float(x) for x in exp["assert_ratio_band"])
        ok = res.min_ratio >= lo and res.max_ratio <= hi and res.ball_survived
        _check(asserts, "ratio_band", ok,
               f"[{res.min_ratio:.3f}, {res.max_ratio:.3f}] in [{lo}, {hi}]")


def _run_measure_decay(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    budgets = [int(b) for b in exp["budgets"]]
    sums = escape_measure_decay(
        profile, float(exp["v0"]), float(exp["C"]), budgets,
        int(exp["trials"]), seed, workers,
    )
    write_csv(
        os.path.join(outdir, f"{tag}_decay.csv"),
        ["budget_periods", "unreturned", "stderr"],
        [(s.extra["budget_periods"], s.estimate, s.stderr) for s in sums],
    )
    write_json(os.path.join(outdir, f"{tag}_summary.json"),
               {"points": [s.as_dict() for s in sums], "config": cfg.resolved()})
    if "assert_ratio_sigmas" in exp:
        nsig = float(exp["assert_ratio_sigmas"])
        ok_all = True
        details = []
        for s1, s2 in zip(sums[:-1], sums[1:]):
            ratio = s2.estimate / s1.estimate
            k1 = s1.estimate * s1.n
            sig = math.sqrt(max(ratio * (1 - ratio), 1e-12) / max(k1, 1.0))
            ok_all &= abs(ratio - 1.0 / math.sqrt(2.0)) <= nsig * sig
            details.append(f"{ratio:.3f}")
        _check(asserts, "decay_ratios", ok_all, "ratios " + " ".join(details))


def _run_residual_fit(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    summary = residual_order_fit(
        profile, [float(x) for x in exp["I_grid"]],
        int(exp["samples_per_I"]), seed, workers,
    )
    write_json(os.path.join(outdir, f"{tag}_summary.json"),
               {**summary.as_dict(), "config": cfg.resolved()})
    if "assert_slope_fhat" in exp:
        target, tol = (float(x) for x in exp["assert_slope_fhat"])
        got = summary.extra["slope_vs_fhat"]
        _check(asserts, "slope_fhat", abs(got - target) <= tol, f"slope = {got:.3f}")
    if "assert_slope_corrected" in exp:
        target, tol = (float(x) for x in exp["assert_slope_corrected"])
        got = summary.extra["slope_vs_corrected"]
        _check(asserts, "slope_corrected", abs(got - target) <= tol,
               f"slope = {got:.3f}")


def _run_diffusion(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    delta = float(exp["delta"])
    gk = green_kubo_D2(delta, int(exp.get("N_trunc", 48)),
                       int(exp.get("samples", 200_000)), seed)
    direct = direct_variance_slope(delta, int(exp.get("n_steps", 512)),
                                   int(exp.get("samples", 200_000)), seed + 1)
    write_json(
        os.path.join(outdir, f"{tag}_summary.json"),
        {
            "delta": delta,
            "D2_green_kubo": gk.d2,
            "stderr": gk.stderr,
            "tail_ok": gk.tail_ok,
            "observable": gk.observable,
            "D2_direct_variance": direct,
            "config": cfg.resolved(),
        },
    )
    if "assert_rel_diff" in exp:
        rel = abs(gk.d2 - direct) / direct
        _check(asserts, "gk_vs_direct", rel <= float(exp["assert_rel_diff"]),
               f"GK = {gk.d2:.4f}, direct = {direct:.4f}, rel = {rel:.3f}")


def _run_orbits(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    from fractions import Fraction

    delta = exp["delta"]
    if isinstance(delta, int) or exp.get("exact", False):
        delta = Fraction(delta)
    reports = orbit_search(delta, int(exp["N_max"]))
    with open(os.path.join(outdir, f"{tag}_orbits.jsonl"), "w") as fh:
        import json as _json

        for r in reports:
            fh.write(_json.dumps(r.as_dict(), sort_keys=True) + "\n")
    print(f"  {len(reports)} orbits with minimal period <= {exp['N_max']}")
    if "assert_count" in exp:
        _check(asserts, "orbit_count", len(reports) == int(exp["assert_count"]),
               f"found {len(reports)}")


def _run_windows(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    step = float(exp["theta_step"]) * math.pi
    wins = scan_windows(int(exp["N_max"]), step)
    rows = []
    for (n, kind), intervals in sorted(wins.items()):
        for lo, hi in intervals:
            rows.append((n, kind, lo / math.pi, hi / math.pi))
    write_csv(os.path.join(outdir, f"{tag}_windows.csv"),
              ["N", "kind", "theta_lo_pi", "theta_hi_pi"], rows)
    print(f"  {len(rows)} windows written")


def _run_return_fit(exp, cfg, profile, outdir, tag, workers, seed, asserts):
    rows = return_scan(profile, float(exp["I_level"]), int(exp["samples"]), seed)
    write_csv(os.path.join(outdir, f"{tag}_scan.csv"),
              ["tau", "I", "tau_next", "I_next", "steps"], rows)
    pars = compute_params(profile)
    errs = []
    for tau, act, tau2, act2, _ in rows:
        u = (tau - act) % 1.0
        errs.append(abs(act2 - (act + pars.delta * (u - 0.5))))
    write_json(
        os.path.join(outdir, f"{tag}_summary.json"),
        {
            "I_level": float(exp["I_level"]),
            "median_action_error_vs_limit_map": float(np.median(errs)),
            "delta": pars.delta,
            "config": cfg.resolved(),
        },
    )


_RUNNERS = {
    "escape": _run_escape,
    "clt": _run_clt,
    "trap": _run_trap,
    "measure-decay": _run_measure_decay,
    "residual-fit": _run_residual_fit,
    "diffusion": _run_diffusion,
    "orbits": _run_orbits,
    "windows": _run_windows,
    "return-fit": _run_return_fit,
}


def cmd_run(cfg, outdir, args):
    if not cfg.experiments:
        raise ConfigError("run needs at least one [experiment] block")
    # validate all blocks before any computation
    for i, exp in enumerate(cfg.experiments):
        kind = exp.get("kind")
        if kind not in _RUN_KINDS:
            raise ConfigError(
                f"experiment {i}: unknown kind {kind!r}; choose from "
                + ", ".join(sorted(_RUN_KINDS))
            )
        missing = [k for k in _RUN_KINDS[kind] if k not in exp]
        if missing:
            raise ConfigError(f"experiment {i} ({kind}): missing keys {missing}")
    needs_profile = any(
        e["kind"] not in ("diffusion", "orbits", "windows") for e in cfg.experiments
    )
    profile = profile_from_config(cfg.profile) if needs_profile else None
    if profile is not None:
        get_theta_table(profile)

    ensure_outdir(outdir)
    _emit_provenance(cfg, outdir)
    workers = int(args.workers or cfg.run.get("workers", 1))
    asserts = []
    for i, exp in enumerate(cfg.experiments):
        kind = exp["kind"]
        tag = f"exp{i:02d}_{kind.replace('-', '_')}"
        seed = _exp_seed(exp, cfg, args)
        print(f"[{tag}] seed = {seed}")
        _RUNNERS[kind](exp, cfg, profile, outdir, tag, workers, seed, asserts)
    if asserts and not all(asserts):
        print(f"{asserts.count(False)} assertion(s) failed", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fermiulam",
        description="Piecewise-smooth Fermi-Ulam ping pong toolkit",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("params", "emit normal-form parameters (JSON) or a delta(A) sweep (CSV)"),
        ("portrait", "emit phase-portrait point clouds (CSV)"),
        ("run", "run the [experiment] blocks of the config"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--workers", type=int, default=None,
                       help="concurrent worker cap (results are worker-invariant)")
        p.add_argument("--tol", type=float, default=None, help="tolerance override")
        if name == "params":
            p.add_argument("--sweep-A", default=None, metavar="LO:HI:STEP",
                           help="sweep the quadratic family parameter")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        return _fail_config(str(exc))
    if args.seed is not None:
        cfg.run["seed"] = int(args.seed)
    if args.tol is not None:
        cfg.run["tol"] = float(args.tol)
    outdir = args.out or cfg.run.get("out", "out")

    try:
        if args.command == "params":
            return cmd_params(cfg, outdir, args)
        if args.command == "portrait":
            return cmd_portrait(cfg, outdir, args)
        return cmd_run(cfg, outdir, args)
    except ConfigError as exc:
        return _fail_config(str(exc))
    except (ValueError, KeyError) as exc:
        return _fail_config(f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
