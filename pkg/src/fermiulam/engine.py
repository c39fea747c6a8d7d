"""Compiled batch kernels for long collision runs.

The Monte Carlo experiments iterate the exact collision map for billions of
collisions, always in the regime where the flight equation
dt = (l(t) + l(t+dt))/v contracts (velocities stay above twice the wall's
Lipschitz bound, which the wrappers enforce).  The kernels below run that
fast path for the catalog wall families; the quadratic family additionally
gets a closed-form flight solve.  Results are per-trial deterministic: no
trial's arithmetic depends on how trials are batched, so outputs are
identical for any worker split.

Profiles outside the catalog fall back to the scalar reference path in
``collisions``; correct, just slow.
"""

import math

import numpy as np
from numba import njit

from .collisions import CollisionState, _apply_map

__all__ = [
    "family_code",
    "batch_escape",
    "batch_vband",
    "batch_action_series",
    "sawtooth_series",
    "FASTPATH_MARGIN",
]

FAM_QUADRATIC = 1
FAM_SINE = 2
FAM_CUBIC = 3

# wrappers demand v_floor > FASTPATH_MARGIN * lip_bound before using kernels
FASTPATH_MARGIN = 2.2

_JUMP_GUARD = 1e-12

OUTCOME_RETURNED = 0
OUTCOME_EXCEEDED_VMAX = 1
OUTCOME_BUDGET = 2


def family_code(profile):
    """(code, params) for kernel dispatch; code 0 when unsupported."""
    p = profile.params
    if profile.family == "quadratic":
        return FAM_QUADRATIC, (p["A"], p["B"], 0.0)
    if profile.family == "sine":
        return FAM_SINE, (p["amplitude"], 0.0, 0.0)
    if profile.family == "cubic":
        return FAM_CUBIC, (p["A"], p["B"], p["C"])
    return 0, (0.0, 0.0, 0.0)


@njit(cache=True, nogil=True, inline="always")
def _leval(code, p0, p1, p2, u):
    if code == FAM_QUADRATIC:
        return p1 + p0 * (u - 0.5) ** 2
    if code == FAM_SINE:
        return 1.0 - p0 * math.sin(math.pi * u)
    return p1 + p0 * (u - 0.5) ** 2 + p2 * u * u * (1.0 - u)


@njit(cache=True, nogil=True, inline="always")
def _dleval(code, p0, p1, p2, u):
    if code == FAM_QUADRATIC:
        return 2.0 * p0 * (u - 0.5)
    if code == FAM_SINE:
        return -p0 * math.pi * math.cos(math.pi * u)
    return 2.0 * p0 * (u - 0.5) + p2 * (2.0 * u - 3.0 * u * u)


@njit(cache=True, nogil=True, inline="always")
def _ddleval(code, p0, p1, p2, u):
    if code == FAM_QUADRATIC:
        return 2.0 * p0
    if code == FAM_SINE:
        return p0 * math.pi * math.pi * math.sin(math.pi * u)
    return 2.0 * p0 + p2 * (2.0 - 6.0 * u)


@njit(cache=True, nogil=True, inline="always")
def _flight(code, p0, p1, p2, t, v):
    """Contracting-regime flight time from phase t at speed v."""
    lt = _leval(code, p0, p1, p2, t)
    if code == FAM_QUADRATIC:
        # l(t+dt) = B + A*(t - k - 1/2 + dt)^2 on the branch with
        # floor(t + dt) = k; solve the quadratic exactly, smallest root.
        A = p0
        guess = t + 2.0 * lt / v
        k = math.floor(guess)
        for trial in range(4):
            kk = k + ((trial + 1) // 2) * (1 - 2 * (trial % 2))  # k, k-1, k+1, k-2
            w = t - kk - 0.5
            b = 2.0 * A * w - v
            c = lt + p1 + A * w * w
            if A == 0.0:
                dt = -c / b
            else:
                disc = b * b - 4.0 * A * c
                if disc < 0.0:
                    continue
                dt = 2.0 * c / (-b + math.sqrt(disc))
            if dt > 0.0 and math.floor(t + dt) == kk:
                return dt
        # fall through to fixed-point iteration on rare branch misses
    dt = 2.0 * lt / v
    for _ in range(120):
        u = t + dt
        u -= math.floor(u)
        dtn = (lt + _leval(code, p0, p1, p2, u)) / v
        if abs(dtn - dt) <= 1e-15 * dtn:
            return dtn
        dt = dtn
    return dt


@njit(cache=True, nogil=True, inline="always")
def _advance(code, p0, p1, p2, t, v):
    """One collision: returns (new phase, new v, periods crossed)."""
    dt = _flight(code, p0, p1, p2, t, v)
    raw = t + dt
    k = math.floor(raw)
    u = raw - k
    if u >= 1.0 - _JUMP_GUARD:
        k += 1
        u = _JUMP_GUARD
    elif u < _JUMP_GUARD:
        u = _JUMP_GUARD
    return u, v - 2.0 * _dleval(code, p0, p1, p2, u), k


@njit(cache=True, nogil=True)
def _escape_kernel(
    t0s, v0, C, vmax, budget, budget_periods,
    code, p0, p1, p2, T, periods, outcome, vfin, pfin,
):
    ntr = t0s.shape[0]
    for i in range(ntr):
        t = t0s[i]
        v = v0
        res = OUTCOME_BUDGET
        steps = 0
        wind = 0
        for n in range(1, budget + 1):
            t, v, k = _advance(code, p0, p1, p2, t, v)
            wind += k
            steps = n
            if v < C:
                res = OUTCOME_RETURNED
                break
            if v > vmax:
                res = OUTCOME_EXCEEDED_VMAX
                break
            if wind >= budget_periods:
                break
        T[i] = steps
        periods[i] = wind
        outcome[i] = res
        vfin[i] = v
        pfin[i] = t


@njit(cache=True, nogil=True, inline="always")
def _adiabatic(code, p0, p1, p2, jint, t, v):
    l = _leval(code, p0, p1, p2, t)
    return 0.5 * jint * (
        v * l + l * _dleval(code, p0, p1, p2, t)
        + l * l * _ddleval(code, p0, p1, p2, t) / (3.0 * v)
    )


@njit(cache=True, nogil=True)
def _action_series_kernel(
    t0s, v0, jint, a_frac, b_frac, stride_periods, max_samples, budget_periods,
    code, p0, p1, p2, j0, series, nsamp, stop_p, stop_j, hit,
):
    # Samples the adiabatic action once every stride_periods wall periods
    # (the clock in which the action performs an unslowed random walk) and
    # stops at the first collision with J outside (a_frac*J0, b_frac*J0),
    # where J0 is the trial's own initial action.
    ntr = t0s.shape[0]
    for i in range(ntr):
        t = t0s[i]
        v = v0
        j_init = _adiabatic(code, p0, p1, p2, jint, t, v)
        j0[i] = j_init
        a_level = a_frac * j_init
        b_level = b_frac * j_init
        cnt = 0
        res = 0
        wind = 0
        next_sample = stride_periods
        jcur = 0.0
        while wind < budget_periods:
            t, v, k = _advance(code, p0, p1, p2, t, v)
            wind += k
            jcur = _adiabatic(code, p0, p1, p2, jint, t, v)
            if wind >= next_sample and cnt < max_samples:
                series[i, cnt] = jcur
                cnt += 1
                next_sample += stride_periods
            if jcur <= a_level:
                res = 1
                break
            if jcur >= b_level:
                res = 2
                break
        nsamp[i] = cnt
        stop_p[i] = wind
        stop_j[i] = jcur
        hit[i] = res


@njit(cache=True, nogil=True)
def _sawtooth_kernel(delta, n, tau0, act0, out):
    tau = tau0
    act = act0
    for k in range(n):
        tau = (tau - act) % 1.0
        if tau >= 1.0:
            tau = 0.0
        act = (act + delta * (tau - 0.5)) % 1.0
        if act >= 1.0:
            act = 0.0
        out[k] = tau


def _require_fastpath(profile, v_floor):
    if v_floor <= FASTPATH_MARGIN * profile.lip_bound:
        raise ValueError(
            "batch kernels need the contracting flight regime: "
            f"v stays above {v_floor}, but the wall Lipschitz bound "
            f"{profile.lip_bound} requires v > {FASTPATH_MARGIN * profile.lip_bound}"
        )


def _scalar_escape(profile, t0s, v0, C, vmax, budget, budget_periods):
    T = np.empty(len(t0s), dtype=np.int64)
    periods = np.empty(len(t0s), dtype=np.int64)
    outcome = np.empty(len(t0s), dtype=np.int8)
    vfin = np.empty(len(t0s))
    pfin = np.empty(len(t0s))
    for i, t0 in enumerate(t0s):
        st = CollisionState.at(float(t0) % 1.0, v0)
        w0 = st.winding
        res, steps = OUTCOME_BUDGET, 0
        for n in range(1, budget + 1):
            st, _, _ = _apply_map(profile, st, 1e-13)
            steps = n
            if st.v < C:
                res = OUTCOME_RETURNED
                break
            if st.v > vmax:
                res = OUTCOME_EXCEEDED_VMAX
                break
            if st.winding - w0 >= budget_periods:
                break
        T[i] = steps
        periods[i] = st.winding - w0
        outcome[i] = res
        vfin[i] = st.v
        pfin[i] = st.phase
    return T, periods, outcome, vfin, pfin


def batch_escape(profile, t0s, v0, C, vmax, budget, budget_periods=None):
    """Run trials until v < C, v > vmax, or a budget (collisions or periods).

    Returns (T, periods, outcome, v_final, phase_final) arrays: T counts
    collisions, ``periods`` counts elapsed wall periods (the physical time
    at stopping), outcomes use the OUTCOME_* codes.  Catalog profiles run
    compiled; others fall back to the scalar reference map.
    """
    code, (p0, p1, p2) = family_code(profile)
    t0s = np.ascontiguousarray(t0s, dtype=np.float64)
    if budget_periods is None:
        budget_periods = budget
    if code == 0:
        return _scalar_escape(profile, t0s, v0, C, vmax, budget, budget_periods)
    _require_fastpath(profile, min(C, v0))
    n = len(t0s)
    T = np.empty(n, dtype=np.int64)
    periods = np.empty(n, dtype=np.int64)
    outcome = np.empty(n, dtype=np.int8)
    vfin = np.empty(n)
    pfin = np.empty(n)
    _escape_kernel(
        t0s, float(v0), float(C), float(vmax), int(budget), int(budget_periods),
        code, p0, p1, p2, T, periods, outcome, vfin, pfin,
    )
    return T, periods, outcome, vfin, pfin


def batch_vband(profile, t0s, v0s, n_coll, vlo, vhi):
    """Track the velocity range of each orbit for n_coll collisions.

    Stops an orbit early once v leaves [vlo, vhi].  Returns
    (min_v, max_v, steps_done, stayed_in_band).
    """
    code, (p0, p1, p2) = family_code(profile)
    t0s = np.ascontiguousarray(t0s, dtype=np.float64)
    v0s = np.ascontiguousarray(v0s, dtype=np.float64)
    n = len(t0s)
    minv = np.empty(n)
    maxv = np.empty(n)
    steps = np.empty(n, dtype=np.int64)
    ok = np.empty(n, dtype=np.bool_)
    if code == 0:
        for i in range(n):
            st = CollisionState.at(float(t0s[i]) % 1.0, float(v0s[i]))
            lo = hi = st.v
            good, done = True, n_coll
            for k in range(1, n_coll + 1):
                st, _, _ = _apply_map(profile, st, 1e-13)
                lo = min(lo, st.v)
                hi = max(hi, st.v)
                if not vlo <= st.v <= vhi:
                    good, done = False, k
                    break
            minv[i], maxv[i], steps[i], ok[i] = lo, hi, done, good
        return minv, maxv, steps, ok
    _require_fastpath(profile, vlo)
    _vband_impl(
        t0s, v0s, int(n_coll), float(vlo), float(vhi),
        code, p0, p1, p2, minv, maxv, steps, ok,
    )
    return minv, maxv, steps, ok


@njit(cache=True, nogil=True)
def _vband_impl(t0s, v0s, n_coll, vlo, vhi, code, p0, p1, p2, minv, maxv, steps, ok):
    ntr = t0s.shape[0]
    for i in range(ntr):
        t = t0s[i]
        v = v0s[i]
        lo = v
        hi = v
        good = True
        done = n_coll
        for n in range(1, n_coll + 1):
            t, v, _ = _advance(code, p0, p1, p2, t, v)
            if v < lo:
                lo = v
            if v > hi:
                hi = v
            if v < vlo or v > vhi:
                good = False
                done = n
                break
        minv[i] = lo
        maxv[i] = hi
        steps[i] = done
        ok[i] = good


def batch_action_series(profile, t0s, v0, jint, a_frac, b_frac, stride_periods,
                        max_samples, budget_periods):
    """Adiabatic-action samples every ``stride_periods`` wall periods.

    Each trial measures its own initial action J0 and stops at the first
    collision with J outside (a_frac*J0, b_frac*J0) or after
    ``budget_periods`` periods.  Returns (J0, series, n_samples,
    stop_periods, stop_J, hit) with hit 0 for budget exhaustion, 1 for the
    lower level, 2 for the upper level.
    """
    code, (p0, p1, p2) = family_code(profile)
    if code == 0:
        raise NotImplementedError("action series runs need a catalog profile")
    v_floor = a_frac * v0 * profile.l_min / profile.l_max - 2.0 * profile.lip_bound
    _require_fastpath(profile, v_floor)
    t0s = np.ascontiguousarray(t0s, dtype=np.float64)
    n = len(t0s)
    j0 = np.empty(n)
    series = np.zeros((n, max_samples))
    nsamp = np.empty(n, dtype=np.int64)
    stop_p = np.empty(n, dtype=np.int64)
    stop_j = np.empty(n)
    hit = np.empty(n, dtype=np.int8)
    _action_series_kernel(
        t0s, float(v0), float(jint), float(a_frac), float(b_frac),
        int(stride_periods), int(max_samples), int(budget_periods),
        code, p0, p1, p2, j0, series, nsamp, stop_p, stop_j, hit,
    )
    return j0, series, nsamp, stop_p, stop_j, hit


def sawtooth_series(delta, n_steps, tau0, act0):
    """tau series of one sawtooth orbit, compiled."""
    out = np.empty(int(n_steps))
    _sawtooth_kernel(float(delta), int(n_steps), float(tau0), float(act0), out)
    return out
