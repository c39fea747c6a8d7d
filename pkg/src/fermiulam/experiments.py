"""Seeded Monte Carlo experiments on the exact collision dynamics.

Each experiment draws its per-trial randomness from a counter-based stream
keyed by (master seed, trial index), so results are bit-identical however
the trials are split across workers.  Trials run in fixed blocks of
``_BLOCK``; the worker count only decides how many blocks execute
concurrently (the compiled kernels release the GIL).

Escape and scaling statistics are clocked in wall periods: the action
receives one kick per period, so elapsed periods is both the physical time
and the clock in which the rescaled action converges to a Brownian motion
and the deceleration time to the index-1/2 stable law.  Collision counts
are recorded alongside.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import engine
from .collisions import CollisionState
from .coordinates import first_return, invert_theta, return_coordinates
from .stats import StatsSummary, ks_distance, loglog_slope, stable_median, stable_survival
from .wall_motion import ELLIPTIC, HYPERBOLIC, compute_params

__all__ = [
    "EscapeRecord",
    "ProcessSample",
    "TrapResult",
    "escape_time_mc",
    "escape_tail_fit",
    "bm_scaling",
    "trapping_test",
    "escape_measure_decay",
    "residual_order_fit",
    "return_scan",
    "state_at_action",
    "OUTCOME_NAMES",
]

_BLOCK = 2048

OUTCOME_NAMES = {
    engine.OUTCOME_RETURNED: "ReturnedBelowC",
    engine.OUTCOME_EXCEEDED_VMAX: "ExceededVmax",
    engine.OUTCOME_BUDGET: "BudgetExhausted",
}


def _trial_phase(seed, trial):
    gen = np.random.default_rng(np.random.Philox(key=[int(seed), int(trial)]))
    return gen.random()


def _block_phases(seed, lo, hi):
    return np.array([_trial_phase(seed, i) for i in range(lo, hi)])


def _run_blocks(n_trials, workers, task):
    """Run ``task(lo, hi)`` over fixed-size trial blocks; yields (lo, hi, result).

    The block decomposition never depends on the worker count and results
    merge in block order, so outputs are byte-identical for any ``workers``.
    """
    blocks = [
        (b * _BLOCK, min((b + 1) * _BLOCK, n_trials))
        for b in range((n_trials + _BLOCK - 1) // _BLOCK)
    ]
    if workers <= 1:
        results = [task(*blk) for blk in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(task, *blk) for blk in blocks]
            results = [f.result() for f in futs]
    return [(lo, hi, res) for (lo, hi), res in zip(blocks, results)]


def _require_regime(profile, regime, what):
    pars = compute_params(profile)
    if pars.regime != regime:
        raise ValueError(
            f"{what} needs {regime.lower()} dynamics; "
            f"got delta = {pars.delta:.6g} ({pars.regime})"
        )
    return pars


# ---------------------------------------------------------------------------
# Escape-time experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EscapeRecord:
    """One deceleration trial: initial data, outcome, and both stopping clocks."""

    trial: int
    t0: float
    v0: float
    outcome: str
    T: int          # collisions at stopping
    periods: int    # wall periods at stopping (physical time)
    v_final: float


def escape_time_mc(profile, v0, C, v_max, trials, budget, seed, workers=1,
                   budget_collisions=None):
    """Deceleration trials: random initial phase, fixed v0, run until v < C.

    ``budget`` caps the elapsed wall periods per trial (the clock of the
    stable-law statistics); censored outcomes are recorded, never dropped.
    Returns a list of EscapeRecord.
    """
    _require_regime(profile, HYPERBOLIC, "the escape-time experiment")
    if not v0 > C:
        raise ValueError("need v0 > C")
    if budget_collisions is None:
        budget_collisions = 10**13

    def task(lo, hi):
        t0s = _block_phases(seed, lo, hi)
        return t0s, engine.batch_escape(
            profile, t0s, v0, C, v_max, budget_collisions, budget
        )

    records = []
    for lo, hi, (t0s, res) in _run_blocks(trials, workers, task):
        T, per, outcome, vfin, _ = res
        for i in range(hi - lo):
            records.append(
                EscapeRecord(
                    trial=lo + i,
                    t0=float(t0s[i]),
                    v0=float(v0),
                    outcome=OUTCOME_NAMES[int(outcome[i])],
                    T=int(T[i]),
                    periods=int(per[i]),
                    v_final=float(vfin[i]),
                )
            )
    return records


def escape_tail_fit(records, v0, budget_periods):
    """Scale-fit the stopping-time sample against the index-1/2 stable law.

    The scale Dbar is fixed by matching the sample median of periods/v0^2 to
    the median of the stable law; the KS distance is then computed on the
    uncensored range (censored trials keep their mass in the empirical
    denominator).
    """
    per = np.array([r.periods for r in records], dtype=float)
    outcomes = np.array([r.outcome for r in records])
    frac_returned = float(np.mean(outcomes == "ReturnedBelowC"))
    if frac_returned <= 0.5:
        raise ValueError("cannot median-fit: more than half the trials are censored")
    dbar = float(np.median(per)) / (v0 * v0 * stable_median())
    scaled = per / (dbar * v0 * v0)
    t_cut = budget_periods / (dbar * v0 * v0) * (1.0 - 1e-9)
    ks = ks_distance(scaled, lambda x: 1.0 - stable_survival(x), upper=t_cut)
    return StatsSummary(
        name="escape_tail",
        estimate=dbar,
        stderr=float("nan"),
        n=len(records),
        ks=ks,
        extra={
            "clock": "periods",
            "frac_returned": frac_returned,
            "frac_exceeded_vmax": float(np.mean(outcomes == "ExceededVmax")),
            "frac_budget": float(np.mean(outcomes == "BudgetExhausted")),
            "ks_range_upper": float(t_cut),
        },
    )


# ---------------------------------------------------------------------------
# Brownian rescaling experiment
# ---------------------------------------------------------------------------


@dataclass
class ProcessSample:
    """Rescaled action path of one trial on its own t = periods/J0^2 grid."""

    trial: int
    t0: float
    j0: float             # the trial's initial action
    samples: np.ndarray   # B(t_k) = J / J0
    sample_t: np.ndarray  # t_k in BM units
    stop_t: float         # stopping time in BM units
    stop_level: str       # "lower" | "upper" | "censored"
    b_stop: float


def bm_scaling(profile, v0, a, b, trials, seed, workers=1, t_step=0.02,
               t_max=4.0, budget_t=400.0, fit_t_max=0.12):
    """Rescaled action process B(t) = J(periods = J0^2 t)/J0, stopped at a, b.

    Each trial is normalized by its own initial action J0 = J(t0, v0), so
    B(0) = 1 exactly and the stopped limit is a driftless Brownian motion
    from 1 with variance D^2 t.  Returns (samples, summary); the summary
    carries the least-squares slope of E[(B-1)^2] against t on the early
    window (an estimate of D^2), the upper-exit fraction, and the stopping
    accounting.
    """
    if not 0.0 < a < 1.0 < b:
        raise ValueError("need 0 < a < 1 < b")
    pars = _require_regime(profile, HYPERBOLIC, "Brownian rescaling")
    if v0 < 50.0:
        raise ValueError("Brownian rescaling wants v0 >= 50")
    i0_ref = 0.5 * pars.j * pars.l0 * v0
    stride = max(1, round(t_step * i0_ref * i0_ref))
    max_samples = int(math.ceil(t_max * i0_ref * i0_ref / stride)) + 1
    budget_periods = int(budget_t * i0_ref * i0_ref)

    def task(lo, hi):
        t0s = _block_phases(seed, lo, hi)
        return t0s, engine.batch_action_series(
            profile, t0s, v0, pars.j, a, b, stride, max_samples, budget_periods,
        )

    samples = []
    hit_lo = hit_hi = censored = 0
    for lo, hi, (t0s, res) in _run_blocks(trials, workers, task):
        j0, series, nsamp, stop_p, stop_j, hit = res
        for i in range(hi - lo):
            level = {0: "censored", 1: "lower", 2: "upper"}[int(hit[i])]
            if level == "lower":
                hit_lo += 1
            elif level == "upper":
                hit_hi += 1
            else:
                censored += 1
            samples.append(
                ProcessSample(
                    trial=lo + i,
                    t0=float(t0s[i]),
                    j0=float(j0[i]),
                    samples=series[i, : int(nsamp[i])] / j0[i],
                    sample_t=stride * np.arange(1, int(nsamp[i]) + 1) / j0[i] ** 2,
                    stop_t=float(stop_p[i]) / float(j0[i]) ** 2,
                    stop_level=level,
                    b_stop=float(stop_j[i]) / float(j0[i]),
                )
            )

    # E[(B(t)-1)^2] = D^2 t pointwise; regress through the origin on the
    # early window, where the a/b stopping has not yet censored the spread.
    ts, sq = [], []
    for s in samples:
        for t_k, b_k in zip(s.sample_t, s.samples):
            if t_k > fit_t_max:
                break
            if s.stop_t > t_k:
                ts.append(t_k)
                sq.append((b_k - 1.0) ** 2)
    ts = np.array(ts)
    sq = np.array(sq)
    slope = float(np.sum(ts * sq) / np.sum(ts * ts))

    n_stopped = hit_lo + hit_hi
    p_upper = hit_hi / n_stopped if n_stopped else float("nan")
    summary = StatsSummary(
        name="bm_scaling",
        estimate=slope,
        stderr=slope * math.sqrt(2.0 / max(len(ts) / 4.0, 1.0)),
        n=trials,
        extra={
            "clock": "periods / J0^2",
            "I0_ref": i0_ref,
            "t_step": t_step,
            "fit_t_max": fit_t_max,
            "p_hit_upper": p_upper,
            "n_stopped": n_stopped,
            "n_censored": censored,
            "a": a,
            "b": b,
        },
    )
    return samples, summary


# ---------------------------------------------------------------------------
# Elliptic trapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrapResult:
    center_state: tuple       # (phase, v)
    j_target: float
    min_ratio: float
    max_ratio: float
    survived: bool
    ball_survived: bool
    per_point_ok: tuple


def state_at_action(profile, tau, action, pars=None):
    """Physical collision state with strip coordinates close to (tau, action).

    Inverts the angle for the phase and the adiabatic action for the
    velocity; the O(v^-2) difference between the adiabatic and implicit
    action is irrelevant for constructing start points.
    """
    if pars is None:
        pars = compute_params(profile)
    theta = (tau % 1.0) / action
    t = invert_theta(profile, theta)
    if t <= 0.0:
        t = 1e-9
    l = profile.l(t)
    dl = profile.dl(t)
    ddl = profile.ddl(t)
    a_c = 0.5 * pars.j * l
    b_c = 0.5 * pars.j * l * dl - action
    c_c = pars.j * l * l * ddl / 6.0
    disc = b_c * b_c - 4.0 * a_c * c_c
    v = (-b_c + math.sqrt(disc)) / (2.0 * a_c)
    return CollisionState.at(t, v)


def trapping_test(profile, vbar, iterations, ball_radius, ball_points=20,
                  band=(0.5, 2.0), seed=0):
    """Velocity confinement around the period-1 elliptic center near v = vbar.

    Builds the fixed point of the corrected return map at the integer action
    level nearest J(0+, vbar) (angle 1/2 shifted by eps/(12 delta)), maps it
    to a physical state, and iterates the exact dynamics for ``iterations``
    collisions from the center and from ``ball_points`` states on a circle
    of ``ball_radius`` around it, reporting the worst v/vbar excursions.
    """
    pars = _require_regime(profile, ELLIPTIC, "the trapping experiment")
    j0 = 0.5 * pars.j * (
        vbar * pars.l0 + pars.l0 * pars.dl_plus
        + pars.l0 * pars.l0 * pars.ddl_plus / (3.0 * vbar)
    )
    j_target = float(round(j0))
    eps = pars.delta1 / j_target
    tau_star = 0.5 + eps / (12.0 * pars.delta)
    center = state_at_action(profile, tau_star, j_target, pars)

    t0s = [center.phase]
    v0s = [center.v]
    for k in range(ball_points):
        ang = 2.0 * math.pi * k / ball_points
        t0s.append(center.phase + ball_radius * math.cos(ang))
        v0s.append(center.v + ball_radius * math.sin(ang))
    minv, maxv, steps, ok = engine.batch_vband(
        profile, np.array(t0s), np.array(v0s), iterations,
        band[0] * vbar, band[1] * vbar,
    )
    return TrapResult(
        center_state=(center.phase, center.v),
        j_target=j_target,
        min_ratio=float(minv.min() / vbar),
        max_ratio=float(maxv.max() / vbar),
        survived=bool(ok[0]),
        ball_survived=bool(ok.all()),
        per_point_ok=tuple(bool(x) for x in ok),
    )


# ---------------------------------------------------------------------------
# Escape-measure decay
# ---------------------------------------------------------------------------


def escape_measure_decay(profile, v0, C, budgets, trials, seed, workers=1,
                         v_max=None, ball_radius=1e-3):
    """Un-returned fraction per period budget; one run at the largest budget.

    For hyperbolic profiles, trials start at uniform random phases and the
    fraction with stopping time beyond each budget estimates the surviving
    measure, which should shrink by about 1/sqrt(2) per budget doubling.
    For elliptic profiles the trials start inside a trapping ball at v0 as
    the contrast case: the fraction stays at 1.
    """
    budgets = sorted(int(b) for b in budgets)
    pars = compute_params(profile)
    if v_max is None:
        v_max = 1e3 * v0

    if pars.regime == ELLIPTIC:
        # contrast case: a trapping ball never decelerates below C
        center = trapping_test(profile, v0, 1, ball_radius).center_state
        rng = np.random.default_rng(np.random.Philox(key=[int(seed), 0]))
        ang = rng.random(trials) * 2.0 * math.pi
        rad = ball_radius * np.sqrt(rng.random(trials))
        t0s = (center[0] + rad * np.cos(ang)) % 1.0
        v0s = center[1] + rad * np.sin(ang)
        per = np.empty(trials, dtype=float)
        returned = np.zeros(trials, dtype=bool)
        for i in range(trials):
            _, p_i, out_i, _, _ = engine.batch_escape(
                profile, t0s[i : i + 1], float(v0s[i]), C, v_max,
                10**13, budgets[-1],
            )
            per[i] = p_i[0]
            returned[i] = out_i[0] == engine.OUTCOME_RETURNED
    else:
        records = escape_time_mc(
            profile, v0, C, v_max, trials, budgets[-1], seed, workers
        )
        per = np.array([r.periods for r in records], dtype=float)
        returned = np.array([r.outcome == "ReturnedBelowC" for r in records])

    summaries = []
    for bud in budgets:
        unret = float(np.mean(~(returned & (per <= bud))))
        stderr = math.sqrt(max(unret * (1.0 - unret), 1e-12) / trials)
        summaries.append(
            StatsSummary(
                name=f"unreturned@{bud}",
                estimate=unret,
                stderr=stderr,
                n=trials,
                extra={"budget_periods": bud, "clock": "periods"},
            )
        )
    return summaries


# ---------------------------------------------------------------------------
# Return-map residual orders
# ---------------------------------------------------------------------------


def residual_order_fit(profile, I_grid, samples_per_I, seed, workers=1):
    """Log-log order of the first-return action error against the limit maps.

    At each action level, random strip points are pushed through the exact
    first return; the measured action increment is compared with the
    leading map alone and with its 1/I correction.  Returns a summary with
    the two fitted slopes and the per-level median discrepancies.
    """
    I_grid = sorted(float(x) for x in I_grid)
    if I_grid[-1] / I_grid[0] < 50.0:
        raise ValueError("action grid should span at least two decades-ish")
    pars = compute_params(profile)
    med_plain, med_corr = [], []
    for li, level in enumerate(I_grid):
        rng = np.random.default_rng(np.random.Philox(key=[int(seed), li]))
        d_plain, d_corr = [], []
        for _ in range(samples_per_I):
            tau = rng.random()
            st = state_at_action(profile, tau, level, pars)
            rp0 = return_coordinates(profile, st)
            try:
                _, rp1, _ = first_return(profile, st)
            except RuntimeError:
                continue
            u = (rp0.tau - rp0.action) % 1.0
            pred_plain = rp0.action + pars.delta * (u - 0.5)
            pred_corr = pred_plain + pars.delta1 * ((u - 0.5) ** 2 - 1.0 / 12.0) / rp0.action
            d_plain.append(abs(rp1.action - pred_plain))
            d_corr.append(abs(rp1.action - pred_corr))
        # floor at the solver noise level so exactly-conjugate profiles do
        # not put zeros into the log fit
        med_plain.append(max(float(np.median(d_plain)), 1e-18))
        med_corr.append(max(float(np.median(d_corr)), 1e-18))
    slope_plain, _ = loglog_slope(I_grid, med_plain)
    slope_corr, _ = loglog_slope(I_grid, med_corr)
    return StatsSummary(
        name="residual_orders",
        estimate=slope_corr,
        stderr=float("nan"),
        n=len(I_grid) * samples_per_I,
        extra={
            "slope_vs_fhat": slope_plain,
            "slope_vs_corrected": slope_corr,
            "I_grid": list(I_grid),
            "median_vs_fhat": med_plain,
            "median_vs_corrected": med_corr,
            "delta": pars.delta,
            "delta1": pars.delta1,
        },
    )


def return_scan(profile, action_level, n_samples, seed):
    """First-return scan rows (tau, I, tau_next, I_next, steps) at one level."""
    pars = compute_params(profile)
    rng = np.random.default_rng(np.random.Philox(key=[int(seed), 0]))
    rows = []
    for _ in range(n_samples):
        tau = rng.random()
        st = state_at_action(profile, tau, action_level, pars)
        rp0 = return_coordinates(profile, st)
        _, rp1, steps = first_return(profile, st)
        rows.append((rp0.tau, rp0.action, rp1.tau, rp1.action, steps))
    return rows
