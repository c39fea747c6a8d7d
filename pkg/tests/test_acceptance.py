"""End-to-end acceptance checks, one per claimed property, with printed verdicts.

The escape-time run (shared by the tail-shape and return-fraction checks)
defaults to a period budget that keeps the suite in the minutes range; set
FERMIULAM_ESCAPE_BUDGET to a larger period budget to push the return
fraction toward its asymptotic value (see notes in the repository's review
ledger about the compute cost of the 99% clause).
"""

import math
import os
from fractions import Fraction

import numpy as np

from fermiulam.collisions import CollisionState, jacobian_check, solve_flight
from fermiulam.coordinates import conjugacy_residuals
from fermiulam.experiments import (
    bm_scaling,
    escape_measure_decay,
    escape_tail_fit,
    escape_time_mc,
    residual_order_fit,
    trapping_test,
)
from fermiulam.normal_form import (
    direct_variance_slope,
    green_kubo_D2,
    long_orbit_mixing_stats,
    orbit_search,
    scan_windows,
)
from fermiulam.stats import bm_hit_upper_prob, loglog_slope
from fermiulam.wall_motion import (
    compute_params,
    delta_closed_form,
    make_cubic,
    make_quadratic,
    make_sine,
)


def _verdict(name, ok, detail):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


# ---------------------------------------------------------------------- 1


def test_a01_delta_closed_form_quadrature_and_root():
    worst = 0.0
    for a in (-3.9, -3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 4.0, 10.0):
        pars = compute_params(make_quadratic(a, 1.0), tol=1e-12)
        worst = max(worst, abs(pars.delta - delta_closed_form(a)) / abs(delta_closed_form(a)))
    near_edge = abs(delta_closed_form(-3.999) - 4.0)

    lo, hi = -3.5, -2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if delta_closed_form(mid) > 4.0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)

    ok = worst <= 1e-8 and near_edge < 1e-2 and abs(root + 2.77927) <= 1e-4
    assert _verdict(
        "01 closed-form delta vs quadrature",
        ok,
        f"max rel err {worst:.2e}, delta(-3.999) off {near_edge:.4f}, root {root:.6f}",
    )


# ---------------------------------------------------------------------- 2


def test_a02_volume_form_preservation():
    rng = np.random.default_rng(42)
    worst = 0.0
    for profile in (make_quadratic(-1.0), make_sine(0.12), make_cubic(-1.0, 1.0, 1.0)):
        count = 0
        while count < 1000:
            st = CollisionState.at(0.02 + 0.96 * rng.random(),
                                   10.0 * 100.0 ** rng.random())
            try:
                val = jacobian_check(profile, st, h=1e-5)
            except ValueError:
                continue
            worst = max(worst, abs(val - 1.0))
            count += 1
    ok = worst <= 1e-5
    assert _verdict("02 volume-form preservation", ok, f"max |ratio - 1| = {worst:.2e}")


# ---------------------------------------------------------------------- 3


def test_a03_flight_expansion_order():
    quad = make_quadratic(-1.0)
    rng = np.random.default_rng(7)
    vs = np.geomspace(1e2, 1e4, 9)
    med = []
    for v in vs:
        res = []
        for _ in range(25):
            t = 0.05 + 0.9 * rng.random()
            dt, _ = solve_flight(quad, CollisionState.at(t, v), tol=1e-15)
            l, dl, ddl = quad.l(t), quad.dl(t), quad.ddl(t)
            approx = 2 * l / v + 2 * l * dl / v**2 + 2 * l * (dl * dl + l * ddl) / v**3
            res.append(abs(dt - approx))
        med.append(np.median(res))
    slope, _ = loglog_slope(vs, med)
    ok = abs(slope + 4.0) <= 0.2
    assert _verdict("03 flight-time expansion order", ok, f"slope {slope:.3f}")


# ---------------------------------------------------------------------- 4


def test_a04_conjugacy_residual_orders():
    quad = make_quadratic(-1.0)
    rng = np.random.default_rng(1)
    vs = np.geomspace(1e2, 1e4, 9)
    rth_med, rj_med = [], []
    for v in vs:
        rths, rjs = [], []
        while len(rths) < 30:
            st = CollisionState.at(0.06 + 0.5 * rng.random(), v)
            try:
                r_th, r_j = conjugacy_residuals(quad, st)
            except ValueError:
                continue
            rths.append(abs(r_th))
            rjs.append(abs(r_j))
        rth_med.append(np.median(rths))
        rj_med.append(np.median(rjs))
    s_th, _ = loglog_slope(vs, rth_med)
    s_j, _ = loglog_slope(vs, rj_med)
    ok = abs(s_th + 4.0) <= 0.3 and abs(s_j + 3.0) <= 0.3
    assert _verdict(
        "04 conjugacy residual orders", ok,
        f"angle slope {s_th:.3f}, action slope {s_j:.3f}",
    )


# ---------------------------------------------------------------------- 5


def test_a05_return_map_residual_orders():
    cubic = make_cubic(A=-1.0, B=1.0, C=1.0)  # curvature jump: delta1 != 0
    grid = list(np.geomspace(30.0, 3000.0, 9))
    s = residual_order_fit(cubic, grid, samples_per_I=24, seed=11)
    sp = s.extra["slope_vs_fhat"]
    sc = s.extra["slope_vs_corrected"]
    ok = abs(sp + 1.0) <= 0.3 and abs(sc + 2.0) <= 0.3
    assert _verdict(
        "05 return-map residual orders", ok,
        f"vs limit map {sp:.3f} (want -1), vs corrected {sc:.3f} (want -2)",
    )


# ---------------------------------------------------------------------- 6

_TABLE = {
    (1, "periodic"): [(0.0, 1.0)], (1, "accelerating"): [(0.5, 1.0)],
    (2, "periodic"): [(0.0, 1 / 2)],
    (3, "periodic"): [(0.0, 1 / 3)], (3, "accelerating"): [(1 / 3, 1 / 2)],
    (4, "periodic"): [(0.0, 1 / 4)], (4, "accelerating"): [(3 / 4, 1.0)],
    (5, "periodic"): [(0.0, 1 / 5)], (5, "accelerating"): [(1 / 2, 3 / 5)],
    (6, "periodic"): [(0.0, 1 / 6), (1 / 2, 1.0)], (6, "accelerating"): [(5 / 6, 1.0)],
    (7, "periodic"): [(0.0, 1 / 7)], (7, "accelerating"): [(3 / 7, 1 / 2)],
    (8, "periodic"): [(0.0, 1 / 8)], (8, "accelerating"): [(7 / 8, 1.0)],
}


def test_a06_orbit_window_table():
    wins = scan_windows(8, 1e-3 * math.pi)
    bad = []
    for key, expected in _TABLE.items():
        got = [(lo / math.pi, hi / math.pi) for lo, hi in wins.get(key, [])]
        if len(got) != len(expected):
            bad.append((key, got))
            continue
        for g, e in zip(sorted(got), sorted(expected)):
            if abs(g[0] - e[0]) > 0.01 or abs(g[1] - e[1]) > 0.01:
                bad.append((key, got))
                break
    extra = set(wins) - set(_TABLE)
    ok = not bad and not extra
    assert _verdict(
        "06 periodic/accelerating window table", ok,
        f"{len(_TABLE) - len(bad)}/{len(_TABLE)} windows matched, extras {sorted(extra)}",
    )


# ---------------------------------------------------------------------- 7


def test_a07_period_one_triple_exact():
    reports = orbit_search(Fraction(3), 1)
    by_class = {r.classification: r for r in reports}
    ok = (
        len(reports) == 3
        and by_class["Periodic"].exact == (Fraction(1, 2), Fraction(0))
        and by_class["Accelerating"].exact == (Fraction(5, 6), Fraction(0))
        and by_class["Accelerating"].winding == 1
        and by_class["Decelerating"].exact == (Fraction(1, 6), Fraction(0))
        and by_class["Decelerating"].winding == -1
        and all(abs(r.trace) < 2.0 for r in reports)
    )
    assert _verdict(
        "07 period-1 triple at delta = 3", ok,
        "; ".join(f"{r.classification}@tau={r.exact[0]}" for r in reports),
    )


# ---------------------------------------------------------------------- 8


def test_a08_mixing_proxy():
    n = 10_000_000
    birkhoff, rho = long_orbit_mixing_stats(-0.3, n, max_lag=100)
    rho_tail = float(np.max(np.abs(rho[30:])))
    ok = abs(birkhoff) <= 3.0 / math.sqrt(n) and rho_tail <= 0.02
    assert _verdict(
        "08 mixing proxy at delta = -0.3", ok,
        f"birkhoff {birkhoff:.2e} (cap {3/math.sqrt(n):.2e}), "
        f"max |rho(k>=30)| = {rho_tail:.2e}",
    )


# ---------------------------------------------------------------------- 9


def test_a09_green_kubo_vs_direct():
    gk = green_kubo_D2(-0.3, n_trunc=48, samples=400_000, seed=8)
    direct = direct_variance_slope(-0.3, n_steps=512, samples=400_000, seed=9)
    rel = abs(gk.d2 - direct) / direct
    ok = rel <= 0.10 and gk.tail_ok
    assert _verdict(
        "09 Green-Kubo vs direct variance", ok,
        f"GK {gk.d2:.5f} +- {gk.stderr:.5f}, direct {direct:.5f}, rel {rel:.3f}",
    )


# --------------------------------------------------------------------- 10

_ESCAPE_CACHE = {}


def _escape_run():
    if "records" not in _ESCAPE_CACHE:
        budget = int(os.environ.get("FERMIULAM_ESCAPE_BUDGET", 20_000))
        records = escape_time_mc(
            make_quadratic(1.0), v0=100.0, C=5.0, v_max=1e5,
            trials=10_000, budget=budget, seed=2024,
        )
        _ESCAPE_CACHE["records"] = records
        _ESCAPE_CACHE["budget"] = budget
    return _ESCAPE_CACHE["records"], _ESCAPE_CACHE["budget"]


def test_a10_escape_tail_ks():
    records, budget = _escape_run()
    summary = escape_tail_fit(records, 100.0, budget)
    ok = summary.ks <= 0.05
    assert _verdict(
        "10 escape-time stable tail (KS)", ok,
        f"KS {summary.ks:.4f} over t <= {summary.extra['ks_range_upper']:.2f}, "
        f"Dbar {summary.estimate:.3f}, returned {summary.extra['frac_returned']:.3f}",
    )


def test_a10_escape_return_fraction():
    # The 99% clause needs a period budget near 4e7 (about 2e13 collisions
    # for the ensemble): measured throughput puts that at multiple days of
    # compute, so at the default minutes-scale budget this check documents
    # the shortfall honestly rather than loosening the threshold.
    records, budget = _escape_run()
    frac = np.mean([r.outcome == "ReturnedBelowC" for r in records])
    ok = frac >= 0.99
    _verdict(
        "10 escape return fraction", ok,
        f"returned {frac:.4f} within {budget} periods (want >= 0.99; "
        "raise FERMIULAM_ESCAPE_BUDGET to approach the asymptotic fraction)",
    )
    assert ok, (
        f"return fraction {frac:.4f} < 0.99 at period budget {budget}; "
        "the asymptotic clause is out of minutes-scale computational reach "
        "(see ledger)"
    )


# --------------------------------------------------------------------- 11


def test_a11_brownian_scaling():
    profile = make_quadratic(1.0)
    samples, summary = bm_scaling(profile, v0=60.0, a=0.5, b=2.0,
                                  trials=3000, seed=5)
    gk = green_kubo_D2(compute_params(profile).delta, n_trunc=48,
                       samples=400_000, seed=12)
    rel = abs(summary.estimate - gk.d2) / gk.d2
    p_hat = summary.extra["p_hit_upper"]
    n = summary.extra["n_stopped"]
    p_bm = bm_hit_upper_prob(0.5, 2.0)
    sig = math.sqrt(p_bm * (1.0 - p_bm) / n)
    dev = abs(p_hat - p_bm) / sig
    ok = rel <= 0.15 and dev <= 3.0
    assert _verdict(
        "11 Brownian action scaling", ok,
        f"variance slope {summary.estimate:.4f} vs D2 {gk.d2:.4f} (rel {rel:.3f}); "
        f"upper-exit {p_hat:.4f} vs {p_bm:.4f} ({dev:.2f} sigma)",
    )


# --------------------------------------------------------------------- 12


def test_a12_elliptic_trapping():
    profile = make_quadratic(-1.0)
    pars = compute_params(profile)
    vbar = 40.0 / (0.5 * pars.j * pars.l0)  # center the action level near 40
    res = trapping_test(profile, vbar, 1_000_000, 1e-3, ball_points=20)
    ok = res.ball_survived and 0.5 <= res.min_ratio and res.max_ratio <= 2.0
    assert _verdict(
        "12 elliptic trapping", ok,
        f"v/vbar in [{res.min_ratio:.3f}, {res.max_ratio:.3f}] over 1e6 "
        f"collisions, center+ball survived = {res.ball_survived}",
    )


# --------------------------------------------------------------------- 13


def test_a13_escape_measure_decay():
    budgets = [2300 * 2**k for k in range(6)]
    sums = escape_measure_decay(make_quadratic(1.0), 30.0, 3.0, budgets,
                                trials=3000, seed=21)
    devs = []
    for s1, s2 in zip(sums[:-1], sums[1:]):
        ratio = s2.estimate / s1.estimate
        k1 = s1.estimate * s1.n
        sig = math.sqrt(max(ratio * (1.0 - ratio), 1e-12) / k1)
        devs.append(abs(ratio - 1.0 / math.sqrt(2.0)) / sig)
    ok = all(d <= 3.0 for d in devs)
    assert _verdict(
        "13 escape-measure decay", ok,
        "doubling-ratio deviations (sigma): " + " ".join(f"{d:.2f}" for d in devs),
    )


# --------------------------------------------------------------------- 14

_DET_CFG = """
[profile]
family = quadratic
A = 1.0
B = 1.0

[run]
seed = 77

[experiment]
kind = escape
v0 = 20
C = 3
trials = 512
budget = 2000

[experiment]
kind = diffusion
delta = -0.3
samples = 30000
N_trunc = 24
"""


def test_a14_determinism_across_workers(tmp_path):
    from fermiulam.cli import main

    cfg = tmp_path / "det.cfg"
    cfg.write_text(_DET_CFG)
    outputs = {}
    for workers in (1, 4, 8):
        out = tmp_path / f"w{workers}"
        rc = main(["run", "--config", str(cfg), "--out", str(out),
                   "--workers", str(workers)])
        assert rc == 0
        outputs[workers] = {
            f.name: f.read_bytes() for f in sorted(out.iterdir())
        }
    same_names = set(outputs[1]) == set(outputs[4]) == set(outputs[8])
    same_bytes = same_names and all(
        outputs[1][n] == outputs[4][n] == outputs[8][n] for n in outputs[1]
    )
    assert _verdict(
        "14 worker-count determinism", same_bytes,
        f"{len(outputs[1])} artifacts byte-identical across workers 1/4/8",
    )
