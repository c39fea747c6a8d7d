"""Exact event-driven dynamics of the ball between the two walls.

States are recorded at collisions with the moving wall: (t, v) with t the
collision time and v the outgoing velocity toward the fixed wall.  Between
collisions the motion is free; the fixed wall reflects elastically
(conserving speed), the moving wall reflects in its own frame, giving
v' = v - 2*l'(t').  A state is admissible when v > -l'(t), i.e. the ball
actually separates from the wall.

Time is stored as (winding, phase) with phase in [0, 1) so that runs
reaching t ~ 1e8 do not lose phase resolution to cancellation.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CollisionState",
    "OrbitTrace",
    "FlightError",
    "solve_flight",
    "collision_map",
    "iterate",
    "jacobian_check",
    "trace_to_csv",
]

# Collisions landing closer than this to the derivative jump are nudged to
# the 0+ side; keeps the two-valued l' deterministic across runs.
JUMP_GUARD = 1e-12

# Fixed-point flight iteration is used only when lip/v < 1/2 (guaranteed
# contraction); otherwise the solver falls back to event detection.
_FAST_PATH_MARGIN = 0.5
_STEP_FLOOR = 1e-6


class FlightError(RuntimeError):
    """No wall collision found within the search horizon."""


@dataclass(frozen=True)
class CollisionState:
    """Post-collision phase point: time split as winding + phase, velocity v."""

    winding: int
    phase: float
    v: float

    def __post_init__(self):
        if not 0.0 <= self.phase < 1.0:
            raise ValueError(f"phase must lie in [0, 1), got {self.phase}")

    @property
    def t(self):
        """Absolute collision time."""
        return self.winding + self.phase

    @classmethod
    def at(cls, t, v):
        w = math.floor(t)
        return cls(winding=int(w), phase=t - w, v=float(v))

    def is_admissible(self, profile, slack=0.0):
        return self.v > -profile.dl(self.phase) - slack


@dataclass
class OrbitTrace:
    """Recorded orbit: arrays indexed by collision step."""

    winding: np.ndarray
    phase: np.ndarray
    v: np.ndarray
    dt: np.ndarray
    bounced: np.ndarray
    truncated: bool

    def __len__(self):
        return len(self.v)

    def state(self, i):
        return CollisionState(int(self.winding[i]), float(self.phase[i]), float(self.v[i]))


def _require_admissible(profile, state):
    if not state.is_admissible(profile):
        raise ValueError(
            f"state (phase={state.phase}, v={state.v}) is outside the collision "
            f"space: need v > -l'(t) = {-profile.dl(state.phase)}"
        )


def _fixed_point_flight(profile, phase, v, tol):
    lt = profile.l(phase)
    dt = 2.0 * lt / v
    for _ in range(200):
        dt_next = (lt + profile.l(phase + dt)) / v
        if abs(dt_next - dt) <= tol * dt_next:
            return dt_next
        dt = dt_next
    raise FlightError("fixed-point flight iteration failed to contract")


def _walk_to_root(g, s_lo, s_hi, speed_bound, tol):
    """First root of the gap function g on (s_lo, s_hi].

    g <= 0 inside the domain and g(s_lo) <= 0; the walk advances by
    |g|/speed_bound (a Lipschitz bound on g), floored to avoid stalling, so
    no sign change can be skipped except a tangential graze shorter than the
    floor.  Returns None when no root is found before s_hi.
    """
    s = s_lo
    gs = g(s)
    while s < s_hi:
        step = max(abs(gs) / speed_bound, _STEP_FLOOR)
        s_next = min(s + step, s_hi)
        g_next = g(s_next)
        if g_next >= 0.0:
            lo, hi = s, s_next
            glo = gs
            for _ in range(200):
                if hi - lo <= tol:
                    break
                mid = 0.5 * (lo + hi)
                gm = g(mid)
                if gm >= 0.0:
                    hi = mid
                else:
                    lo, glo = mid, gm
            return hi
        if s_next >= s_hi:
            return None
        s, gs = s_next, g_next

    return None


def solve_flight(profile, state, tol=1e-13, horizon=None):
    """Time of flight to the next moving-wall collision.

    Returns ``(dt, bounced)`` where ``bounced`` tells whether the ball
    reached the fixed wall first.  For v large enough that the fixed-point
    iteration dt <- (l(t) + l(t+dt))/v contracts, that iteration is used to
    relative tolerance ``tol``; otherwise the distance-to-fixed-wall curve
    d(s) is intersected with l(s) by a Lipschitz-bounded step search refined
    by bisection.
    """
    _require_admissible(profile, state)
    t0, v = state.phase, state.v

    if v > 0.0 and profile.lip_bound < _FAST_PATH_MARGIN * v:
        return _fixed_point_flight(profile, t0, v, tol), True

    speed_bound = abs(v) + profile.lip_bound
    if horizon is None:
        horizon = t0 + 3.0 + (2.0 * profile.l_max / v if v > 0.0 else 0.0)

    if v > 0.0:
        s1 = t0 + profile.l(t0) / v
        g_pre = lambda s: profile.l(t0) - v * (s - t0) - profile.l(s)
        root = _walk_to_root(g_pre, t0, min(s1, horizon), speed_bound, tol)
        if root is not None:
            return root - t0, False
        if s1 >= horizon:
            raise FlightError("no collision before horizon (pre-bounce)")
        g_post = lambda s: v * (s - s1) - profile.l(s)
        root = _walk_to_root(g_post, s1, horizon, speed_bound, tol)
        if root is None:
            raise FlightError("no collision before horizon (post-bounce)")
        return root - t0, True

    # v <= 0: the ball drifts away from (or sits before) the fixed wall and
    # the receding wall must come back to it within about one period.
    g_drift = lambda s: profile.l(t0) - v * (s - t0) - profile.l(s)
    root = _walk_to_root(g_drift, t0, horizon, speed_bound, tol)
    if root is None:
        raise FlightError("no collision before horizon (drift)")
    return root - t0, False


def _land(winding, phase, dt):
    """Advance (winding, phase) by dt, nudging hits of the jump to its 0+ side."""
    raw = phase + dt
    k = math.floor(raw)
    new_phase = raw - k
    new_winding = winding + int(k)
    if new_phase >= 1.0 - JUMP_GUARD:
        new_winding += 1
        new_phase = JUMP_GUARD
    elif new_phase < JUMP_GUARD:
        new_phase = JUMP_GUARD
    return new_winding, new_phase


def _apply_map(profile, state, tol):
    dt, bounced = solve_flight(profile, state, tol=tol)
    w, p = _land(state.winding, state.phase, dt)
    out = CollisionState(w, p, state.v - 2.0 * profile.dl(p))
    if not out.is_admissible(profile, slack=1e-9):
        raise FlightError(
            f"collision map left the collision space at phase={p}, v={out.v}"
        )
    return out, dt, bounced


def collision_map(profile, state, tol=1e-13):
    """One application of the collision map: fly, reflect off the moving wall."""
    out, _, _ = _apply_map(profile, state, tol)
    return out


def iterate(profile, state, stop=None, budget=1_000_000, tol=1e-13):
    """Iterate the collision map until ``stop(step, state)`` fires.

    The full trace is recorded; if the step budget runs out first the trace
    is returned with ``truncated=True`` rather than raising.
    """
    _require_admissible(profile, state)
    windings = [state.winding]
    phases = [state.phase]
    vs = [state.v]
    dts = [0.0]
    bounced = [False]
    truncated = True
    cur = state
    for step in range(budget):
        if stop is not None and stop(step, cur):
            truncated = False
            break
        cur, dt, b = _apply_map(profile, cur, tol)
        windings.append(cur.winding)
        phases.append(cur.phase)
        vs.append(cur.v)
        dts.append(dt)
        bounced.append(b)
    else:
        if stop is None:
            truncated = False
    return OrbitTrace(
        winding=np.array(windings, dtype=np.int64),
        phase=np.array(phases),
        v=np.array(vs),
        dt=np.array(dts),
        bounced=np.array(bounced, dtype=bool),
        truncated=truncated,
    )


def jacobian_check(profile, state, h=1e-5, tol=1e-13):
    """Volume-form preservation diagnostic; contracts to 1 up to O(h^2).

    Estimates |det Df| by central differences and weights it by the density
    ratio of the invariant form (v + l'(t)) dt ^ dv between image and
    source.  Refuses stencils that straddle the derivative jump on either
    the source or the image side, where the finite differences are
    meaningless; callers must offset such states.
    """
    _require_admissible(profile, state)
    if state.phase < 2.0 * h or state.phase > 1.0 - 2.0 * h:
        raise ValueError("stencil straddles the jump at t = 0; offset the state")

    def image(ds, dv):
        s = CollisionState(state.winding, state.phase + ds, state.v + dv)
        out = collision_map(profile, s, tol=tol)
        return out

    imgs = {
        (+1, 0): image(+h, 0.0),
        (-1, 0): image(-h, 0.0),
        (0, +1): image(0.0, +h),
        (0, -1): image(0.0, -h),
    }
    if len({im.winding for im in imgs.values()}) > 1:
        raise ValueError("image stencil straddles the jump; offset the state")
    for im in imgs.values():
        if im.phase < 10.0 * h or im.phase > 1.0 - 10.0 * h:
            raise ValueError("image stencil too close to the jump; offset the state")

    dt_dt = (imgs[(+1, 0)].t - imgs[(-1, 0)].t) / (2.0 * h)
    dv_dt = (imgs[(+1, 0)].v - imgs[(-1, 0)].v) / (2.0 * h)
    dt_dv = (imgs[(0, +1)].t - imgs[(0, -1)].t) / (2.0 * h)
    dv_dv = (imgs[(0, +1)].v - imgs[(0, -1)].v) / (2.0 * h)
    det = dt_dt * dv_dv - dt_dv * dv_dt

    base = collision_map(profile, state, tol=tol)
    rho_src = state.v + profile.dl(state.phase)
    rho_img = base.v + profile.dl(base.phase)
    return abs(det) * rho_img / rho_src


def trace_to_csv(trace, path):
    """Write a trace as CSV with columns step, winding, phase, v, dt, bounced."""
    with open(path, "w") as fh:
        fh.write("step,winding,phase,v,dt,bounced\n")
        for i in range(len(trace)):
            fh.write(
                f"{i},{trace.winding[i]},{float(trace.phase[i])!r},"
                f"{float(trace.v[i])!r},{float(trace.dt[i])!r},"
                f"{int(trace.bounced[i])}\n"
            )
