"""Limiting maps of the first return and the sawtooth torus map.

The first return of the collision map to the jump strip is, to leading
order in 1/I, the piecewise-affine map

    fhat: tau' = tau - I mod 1,   I' = I + delta*(tau' - 1/2)

which factors as a kick after a shear, fhat = T_delta o G, and covers the
"sawtooth" torus map once the action is also reduced mod 1.  Every branch
shares the unit-determinant linearization [[1, -1], [delta, 1 - delta]]
with trace 2 - delta, elliptic for delta in (0, 4) and hyperbolic outside
[0, 4].  This module implements those maps together with their periodic
orbit enumeration and classification (periodic / accelerating /
decelerating by the integer action winding), invariant slopes, the
acceleration/deceleration duality, the twist diagnostic for the corrected
map, and the Green-Kubo diffusion coefficient of the action.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .wall_motion import ELLIPTIC, HYPERBOLIC, PARABOLIC

__all__ = [
    "TorusPoint",
    "OrbitReport",
    "TwistDiagnostic",
    "GreenKuboResult",
    "fhat",
    "fhat_inverse",
    "shear_G",
    "kick_T",
    "sawtooth_factored",
    "f_corrected",
    "invariant_slopes",
    "duality_check",
    "twist_diagnostic",
    "green_kubo_D2",
    "direct_variance_slope",
    "orbit_search",
    "window_scan",
    "scan_windows",
    "sawtooth_portrait",
    "fhat_portrait",
    "long_orbit_mixing_stats",
    "theta_to_delta",
]


def _mod1(x):
    r = x % 1.0
    return r if r < 1.0 else 0.0


def theta_to_delta(theta):
    """Rotation angle to map parameter: trace 2 - delta = 2 cos(theta)."""
    return 2.0 - 2.0 * math.cos(theta)


@dataclass(frozen=True)
class TorusPoint:
    """Torus representative (tau, action) in [0,1)^2 with an integer action lift."""

    tau: float
    action: float
    level: int = 0

    def __post_init__(self):
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if not 0.0 <= self.action < 1.0:
            raise ValueError("torus action must lie in [0, 1)")

    @property
    def lifted_action(self):
        return self.level + self.action


def fhat(point, delta):
    """One step of the limiting return map, tracking the action lift."""
    tau_new = _mod1(point.tau - point.action)
    y = point.action + delta * (tau_new - 0.5)
    n = math.floor(y)
    return TorusPoint(tau_new, y - n, point.level + n)


def fhat_inverse(point, delta):
    """Inverse step; fhat(fhat_inverse(p)) returns p including the lift."""
    y = point.action - delta * (point.tau - 0.5)
    n = math.floor(y)
    tau_prev = _mod1(point.tau + y)
    return TorusPoint(tau_prev, y - n, point.level - n)


def shear_G(point):
    """Integrable shear G: (tau, I) -> (tau - I mod 1, I)."""
    return TorusPoint(_mod1(point.tau - point.action), point.action, point.level)


def kick_T(point, delta):
    """Sawtooth kick T_delta: (tau, I) -> (tau, I + delta*(tau - 1/2))."""
    y = point.action + delta * (point.tau - 0.5)
    n = math.floor(y)
    return TorusPoint(point.tau, y - n, point.level + n)


def sawtooth_factored(point, delta):
    """Kick-after-shear factorization; agrees with fhat pointwise."""
    return kick_T(shear_G(point), delta)


def f_corrected(point, delta, delta1, I_abs):
    """Limiting map plus its 1/I action correction delta1*((tau'-1/2)^2 - 1/12)."""
    if I_abs == 0.0:
        raise ValueError("the correction needs a nonzero absolute action")
    tau_new = _mod1(point.tau - point.action)
    u = tau_new - 0.5
    y = point.action + delta * u + delta1 * (u * u - 1.0 / 12.0) / I_abs
    n = math.floor(y)
    return TorusPoint(tau_new, y - n, point.level + n)


def invariant_slopes(delta):
    """Slopes h of the invariant directions, roots of h^2 - delta*h + delta = 0.

    Real and distinct exactly in the hyperbolic regime; the multiplier along
    (1, h) is 1 - h, so the root with |1 - h| > 1 is the unstable slope.
    """
    if 0.0 <= delta <= 4.0:
        raise ValueError("invariant slopes are real only for delta outside [0, 4]")
    disc = math.sqrt(delta * delta - 4.0 * delta)
    return 0.5 * (delta + disc), 0.5 * (delta - disc)


def _circle_dist(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def duality_check(delta, samples=1000, seed=0):
    """Max deviation of fhat^-1 from its conjugate (T o J)^-1 fhat (T o J).

    J is the angle flip (tau, I) -> (1 - tau, I).  The identity is exact, so
    the deviation is zero up to the choice of mod-1 representatives.
    """
    rng = np.random.default_rng(np.random.Philox(key=[int(seed), 0]))
    worst = 0.0
    for _ in range(samples):
        tau, act = rng.random(), rng.random()
        p = TorusPoint(tau, act)
        lhs = fhat_inverse(p, delta)

        # (T o J): tau -> 1 - tau, then the kick at the flipped angle.
        a = _mod1(1.0 - p.tau)
        b = _mod1(p.action + delta * (a - 0.5))
        q = fhat(TorusPoint(a, b), delta)
        tau_back = _mod1(1.0 - q.tau)
        act_back = _mod1(q.action - delta * (q.tau - 0.5))

        dev = _circle_dist(lhs.tau, tau_back) + _circle_dist(lhs.action, act_back)
        worst = max(worst, dev)
    return worst


@dataclass(frozen=True)
class TwistDiagnostic:
    """Ellipticity data of the corrected map's fixed point at one action level."""

    epsilon: float
    kappa: float
    cos_theta_hat: float
    theta_bar: float
    theta_bar_alt: float
    upsilon_nonzero: bool
    resonance: bool
    resonance_alt: bool
    tau_shift: float


_RES_TOL = 1e-9


def twist_diagnostic(delta, delta1, I_abs):
    """Multiplier and twist flags of the corrected map near its fixed point.

    With eps = delta1 / I_abs, the fixed point sits at tau = 1/2 +
    eps/(12*delta) and its multiplier angle obeys cos(theta_bar) =
    cos(theta_hat) - eps^2/(12*delta); the reading with the eps^2*delta/12
    correction is reported alongside since only the resonance flags differ.
    The leading twist coefficient is proportional to eps, so the twist is
    nondegenerate iff eps != 0 and theta_bar avoids theta = 0 and
    cos(theta) = -1/4.
    """
    if not 0.0 < delta < 4.0:
        raise ValueError("twist diagnostic applies in the elliptic regime only")
    if I_abs == 0.0:
        raise ValueError("need a nonzero action level")
    eps = delta1 / I_abs
    if abs(eps) >= delta / 10.0:
        raise ValueError("correction too large: need |delta1 / I_abs| < delta / 10")
    cos_hat = 1.0 - delta / 2.0
    cos_bar = cos_hat - eps * eps / (12.0 * delta)
    cos_bar_alt = cos_hat - eps * eps * delta / 12.0
    theta_bar = math.acos(max(-1.0, min(1.0, cos_bar)))
    theta_bar_alt = math.acos(max(-1.0, min(1.0, cos_bar_alt)))
    res = abs(cos_bar - 1.0) <= _RES_TOL or abs(cos_bar + 0.25) <= _RES_TOL
    res_alt = abs(cos_bar_alt - 1.0) <= _RES_TOL or abs(cos_bar_alt + 0.25) <= _RES_TOL
    return TwistDiagnostic(
        epsilon=eps,
        kappa=delta + eps * eps / (6.0 * delta),
        cos_theta_hat=cos_hat,
        theta_bar=theta_bar,
        theta_bar_alt=theta_bar_alt,
        upsilon_nonzero=(eps != 0.0) and not res,
        resonance=res,
        resonance_alt=res_alt,
        tau_shift=eps / (12.0 * delta),
    )


# ---------------------------------------------------------------------------
# Green-Kubo diffusion coefficient of the action
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GreenKuboResult:
    d2: float
    stderr: float
    n_trunc: int
    samples: int
    c0: float
    tail: float
    tail_ok: bool
    observable: str = "delta*(tau - 1/2) at the current point of F = G o T_delta"


def _gk_step(tau, act, delta):
    # F = G o T_delta on the torus, vectorized: kick first, then shear.
    act = (act + delta * (tau - 0.5)) % 1.0
    act[act >= 1.0] = 0.0
    tau = (tau - act) % 1.0
    tau[tau >= 1.0] = 0.0
    return tau, act


def green_kubo_D2(delta, n_trunc=48, samples=200_000, seed=0, block=8192):
    """Monte Carlo estimate of D^2 = sum_|n|<=N int a(x) a(F^n x) dx.

    The observable a is the per-step action increment delta*(tau - 1/2) of
    F = G o T_delta, sampled at uniform torus points; the per-sample
    estimator a0*(a0 + 2*sum_k a_k) is unbiased for the truncated sum and
    its spread gives the reported standard error.  ``tail_ok`` records
    whether the lag-N correlation has decayed below that error.
    """
    if 0.0 <= delta <= 4.0:
        raise ValueError("Green-Kubo estimation needs the mixing (hyperbolic) regime")
    total_n = 0
    mean_q = 0.0
    m2_q = 0.0
    tail_sum = 0.0
    done = 0
    bidx = 0
    while done < samples:
        m = min(block, samples - done)
        rng = np.random.default_rng(np.random.Philox(key=[int(seed), bidx]))
        tau = rng.random(m)
        act = rng.random(m)
        a0 = delta * (tau - 0.5)
        q = a0 * a0
        for _ in range(n_trunc - 1):
            tau, act = _gk_step(tau, act, delta)
            q += 2.0 * a0 * (delta * (tau - 0.5))
        tau, act = _gk_step(tau, act, delta)
        a_tail = delta * (tau - 0.5)
        q += 2.0 * a0 * a_tail
        tail_sum += float(np.sum(a0 * a_tail))

        # streaming merge of block moments, in block order
        bn = m
        bmean = float(np.mean(q))
        bm2 = float(np.sum((q - bmean) ** 2))
        if total_n == 0:
            total_n, mean_q, m2_q = bn, bmean, bm2
        else:
            d = bmean - mean_q
            tot = total_n + bn
            m2_q = m2_q + bm2 + d * d * total_n * bn / tot
            mean_q = mean_q + d * bn / tot
            total_n = tot
        done += m
        bidx += 1
    stderr = math.sqrt(m2_q / (total_n - 1) / total_n)
    tail = abs(tail_sum / total_n)
    return GreenKuboResult(
        d2=mean_q,
        stderr=stderr,
        n_trunc=n_trunc,
        samples=samples,
        c0=delta * delta / 12.0,
        tail=tail,
        tail_ok=tail <= max(2.0 * stderr, 1e-12),
    )


def direct_variance_slope(delta, n_steps=512, samples=200_000, seed=1):
    """Var(I_n - I_0)/n from direct iteration of the sawtooth with a lifted action."""
    rng = np.random.default_rng(np.random.Philox(key=[int(seed), 0]))
    tau = rng.random(samples)
    act = rng.random(samples)
    lift = np.zeros(samples)
    for _ in range(n_steps):
        tau = (tau - act) % 1.0
        tau[tau >= 1.0] = 0.0
        inc = delta * (tau - 0.5)
        lift += inc
        act = (act + inc) % 1.0
        act[act >= 1.0] = 0.0
    return float(np.var(lift)) / n_steps


# ---------------------------------------------------------------------------
# Periodic orbit enumeration on the torus
# ---------------------------------------------------------------------------

PERIODIC = "Periodic"
ACCELERATING = "Accelerating"
DECELERATING = "Decelerating"


@dataclass(frozen=True)
class OrbitReport:
    """A periodic orbit of the sawtooth map with its lift winding and stability."""

    period: int
    winding: int
    classification: str
    trace: float
    stability: str
    tau: float
    action: float
    exact: tuple = None

    def as_dict(self):
        return {
            "N": self.period,
            "class": self.classification,
            "winding": self.winding,
            "trace": self.trace,
            "stability": self.stability,
            "tau": self.tau,
            "I": self.action,
        }


def _clip(poly, a, b, c):
    # keep a*x + b*y + c >= 0; works for float and Fraction vertices
    n = len(poly)
    if n == 0:
        return poly
    out = []
    d = [a * p[0] + b * p[1] + c for p in poly]
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        di, dj = d[i], d[j]
        pi = poly[i]
        if di >= 0:
            out.append(pi)
            if dj < 0:
                t = di / (di - dj)
                pj = poly[j]
                out.append((pi[0] + t * (pj[0] - pi[0]), pi[1] + t * (pj[1] - pi[1])))
        elif dj >= 0:
            t = di / (di - dj)
            pj = poly[j]
            out.append((pi[0] + t * (pj[0] - pi[0]), pi[1] + t * (pj[1] - pi[1])))
    return out


def _area2(poly):
    s = 0
    n = len(poly)
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        s += poly[i][0] * poly[j][1] - poly[j][0] * poly[i][1]
    return s


def _mat_mul(A, B):
    return (
        A[0] * B[0] + A[1] * B[2],
        A[0] * B[1] + A[1] * B[3],
        A[2] * B[0] + A[3] * B[2],
        A[2] * B[1] + A[3] * B[3],
    )


def _step_lifted(delta, x, y):
    """One sawtooth step with explicit sheds: returns (x', y', m, n)."""
    r = x - y
    m = -math.floor(r)
    xn = r + m
    yr = y + delta * (xn - _half_like(delta))
    n = math.floor(yr)
    return xn, yr - n, m, n


def _half_like(delta):
    return Fraction(1, 2) if isinstance(delta, Fraction) else 0.5


class OrbitSearchBudget(RuntimeError):
    """Itinerary enumeration exceeded its node budget."""


def _enumerate_pieces(delta, n_max, node_budget):
    """DFS over branch itineraries with convex-polygon feasibility pruning.

    Yields (depth, itinerary, c) for every feasible itinerary, where the
    lifted step composition satisfies x_depth = M^depth x_0 + c.  The
    polygon tracks the image of the feasible set in current coordinates, so
    infeasible symbol sequences are cut off as soon as they become empty.
    """
    exact = isinstance(delta, Fraction)
    if exact:
        zero, one, half = Fraction(0), Fraction(1), Fraction(1, 2)
        area_eps = Fraction(0)
    else:
        zero, one, half = 0.0, 1.0, 0.5
        area_eps = 1e-15
    unit = [(zero, zero), (one, zero), (one, one), (zero, one)]
    stack = [(0, (), unit, (zero, zero))]
    nodes = 0
    while stack:
        depth, itin, poly, c = stack.pop()
        if depth >= n_max:
            continue
        cx, cy = c
        for m in (0, 1):
            if m == 0:
                p1 = _clip(poly, one, -one, zero)
            else:
                p1 = _clip(poly, -one, one, zero)
            if len(p1) < 3 or abs(_area2(p1)) <= area_eps:
                continue
            mapped = []
            ylo = yhi = None
            for (x, y) in p1:
                xn = x - y + m
                yn = y + delta * (xn - half)
                mapped.append((xn, yn))
                if ylo is None or yn < ylo:
                    ylo = yn
                if yhi is None or yn > yhi:
                    yhi = yn
            cx1 = cx - cy + m
            cy1 = delta * cx1 + cy - delta * half
            for n in range(math.floor(ylo), math.ceil(yhi)):
                p2 = _clip(mapped, zero, one, -n)
                p2 = _clip(p2, zero, -one, n + 1)
                if len(p2) < 3 or abs(_area2(p2)) <= area_eps:
                    continue
                nodes += 1
                if nodes > node_budget:
                    raise OrbitSearchBudget(
                        f"orbit enumeration exceeded {node_budget} nodes"
                    )
                p3 = [(x, y - n) for (x, y) in p2]
                child = (depth + 1, itin + ((m, n),), p3, (cx1, cy1 - n))
                yield child
                stack.append(child)


def _orbit_points(delta, n, itin, x0, y0, tol):
    """Iterate n steps from (x0, y0), checking the sheds; None on mismatch."""
    exact = isinstance(delta, Fraction)
    pts = []
    x, y = x0, y0
    for k in range(n):
        lo_ok = x >= 0 and y >= 0 if exact else (x >= -1e-12 and y >= -1e-12)
        hi_ok = x < 1 and y < 1 if exact else (x < 1.0 + 1e-12 and y < 1.0 + 1e-12)
        if not (lo_ok and hi_ok):
            return None
        pts.append((x, y))
        x, y, m, nn = _step_lifted(delta, x, y)
        if (m, nn) != itin[k]:
            return None
    if exact:
        if x != x0 or y != y0:
            return None
    else:
        if _circle_dist(x, x0) > tol or _circle_dist(y, y0) > tol:
            return None
    return pts


_QUANT = 10**9


def _point_key(p):
    if isinstance(p[0], Fraction):
        return (p[0] % 1, p[1] % 1)
    return (int(round(p[0] * _QUANT)) % _QUANT, int(round(p[1] * _QUANT)) % _QUANT)


def _centroid(poly):
    n = len(poly)
    sx = sum(p[0] for p in poly)
    sy = sum(p[1] for p in poly)
    return sx / n, sy / n


def _stability(trace):
    at = abs(trace)
    if at < 2.0:
        return ELLIPTIC
    if at == 2.0:
        return PARABOLIC
    return HYPERBOLIC


def orbit_search(delta, n_max, node_budget=500_000, tol=1e-9):
    """All periodic orbits of the sawtooth map with minimal period <= n_max.

    Enumerates symbolic branch itineraries (with polygon pruning), solves
    the affine fixed-point system of each, validates that the solution
    realizes its itinerary, deduplicates cyclic shifts, and classifies by
    the total action winding and the trace of the period-N linearization.
    Pass ``delta`` as a Fraction for exact-rational arithmetic.
    """
    if not 1 <= n_max <= 12:
        raise ValueError("orbit_search supports 1 <= n_max <= 12")
    exact = isinstance(delta, Fraction)
    one = Fraction(1) if exact else 1.0
    M = (one, -one, delta, one - delta)
    powers = [(one, 0 * one, 0 * one, one)]
    for _ in range(n_max):
        powers.append(_mat_mul(M, powers[-1]))

    seen = set()
    reports = []
    for depth, itin, poly, c in _enumerate_pieces(delta, n_max, node_budget):
        P = powers[depth]
        a, b = one - P[0], -P[1]
        cc, d = -P[2], one - P[3]
        det = a * d - b * cc
        singular = det == 0 if exact else abs(det) < 1e-9
        if singular:
            # M^N ~ identity: the whole piece is periodic iff the offset
            # vanishes; report the piece's centroid as a representative.
            czero = (
                (c[0] == 0 and c[1] == 0)
                if exact
                else (abs(c[0]) < 1e-9 and abs(c[1]) < 1e-9)
            )
            if not czero:
                continue
            x0, y0 = _centroid(poly)
        else:
            x0 = (d * c[0] - b * c[1]) / det
            y0 = (-cc * c[0] + a * c[1]) / det
        pts = _orbit_points(delta, depth, itin, x0, y0, tol)
        if pts is None:
            continue
        keyset = frozenset(_point_key(p) for p in pts)
        if len(keyset) < depth or keyset in seen:
            continue
        seen.add(keyset)
        winding = sum(nn for (_, nn) in itin)
        trace = float(powers[depth][0] + powers[depth][3])
        cls = PERIODIC if winding == 0 else (ACCELERATING if winding > 0 else DECELERATING)
        reports.append(
            OrbitReport(
                period=depth,
                winding=winding,
                classification=cls,
                trace=trace,
                stability=_stability(trace),
                tau=float(pts[0][0]),
                action=float(pts[0][1]),
                exact=(pts[0][0], pts[0][1]) if exact else None,
            )
        )
    reports.sort(key=lambda r: (r.period, -r.winding, r.tau))
    return reports


def _runs_to_intervals(grid, flags):
    # A window is an interval: runs of a single grid point are dropped (they
    # are the degenerate orbit families at isolated resonances N*theta = 2*pi*k,
    # where the period-N linearization is the identity).
    out = []
    start = None
    for th, ok in zip(grid, flags):
        if ok and start is None:
            start = th
        elif not ok and start is not None:
            if prev > start:
                out.append((start, prev))
            start = None
        prev = th
    if start is not None and grid[-1] > start:
        out.append((start, grid[-1]))
    return out


def scan_windows(n_max, theta_step, node_budget=500_000):
    """Sweep theta over (0, pi) and collect existence windows per period.

    Returns {(N, kind): [(theta_lo, theta_hi), ...]} with kind "periodic"
    (zero winding) or "accelerating" (nonzero winding; decelerating mirrors
    exist on the same windows by duality).
    """
    n_grid = int(round(math.pi / theta_step))
    grid = [k * theta_step for k in range(1, n_grid) if k * theta_step < math.pi]
    has = {(n, kind): [] for n in range(1, n_max + 1) for kind in ("periodic", "accelerating")}
    for th in grid:
        found = {key: False for key in has}
        for rep in orbit_search(theta_to_delta(th), n_max, node_budget):
            kind = "periodic" if rep.winding == 0 else "accelerating"
            found[(rep.period, kind)] = True
        for key in has:
            has[key].append(found[key])
    out = {}
    for key, flags in has.items():
        intervals = _runs_to_intervals(grid, flags)
        if intervals:
            out[key] = intervals
    return out


def window_scan(N, theta_step, node_budget=500_000):
    """Existence windows of period-N orbits over theta in (0, pi).

    The contract expects a grid at least as fine as 1e-3 * pi.
    """
    if theta_step > 1e-3 * math.pi + 1e-15:
        raise ValueError("window_scan requires a grid step <= 1e-3 * pi")
    windows = scan_windows(N, theta_step, node_budget)
    return {
        kind: windows.get((N, kind), [])
        for kind in ("periodic", "accelerating")
    }


# ---------------------------------------------------------------------------
# Phase portraits
# ---------------------------------------------------------------------------


def sawtooth_portrait(delta, seeds, iters, seed=0):
    """(tau, I) clouds of sawtooth orbits from ``seeds`` initial points.

    ``seeds`` may be an integer (that many random starts) or a list of
    (tau, I) pairs.  Returns one (iters, 2) array per orbit.
    """
    if isinstance(seeds, int):
        rng = np.random.default_rng(np.random.Philox(key=[int(seed), 0]))
        starts = [(rng.random(), rng.random()) for _ in range(seeds)]
    else:
        starts = [(float(a), float(b)) for a, b in seeds]
    clouds = []
    for tau, act in starts:
        out = np.empty((iters, 2))
        for k in range(iters):
            tau = (tau - act) % 1.0
            if tau >= 1.0:
                tau = 0.0
            act = (act + delta * (tau - 0.5)) % 1.0
            if act >= 1.0:
                act = 0.0
            out[k, 0] = tau
            out[k, 1] = act
        clouds.append(out)
    return clouds


def fhat_portrait(delta, starts, iters, delta1=0.0, corrected=False):
    """Lifted-orbit clouds of fhat (or its corrected variant) from given points.

    ``starts`` are (tau, lifted action) pairs; the emitted second column is
    the lifted action level + representative.
    """
    clouds = []
    for tau0, act0 in starts:
        lev = math.floor(act0)
        p = TorusPoint(_mod1(float(tau0)), float(act0) - lev, int(lev))
        out = np.empty((iters, 2))
        for k in range(iters):
            if corrected:
                p = f_corrected(p, delta, delta1, max(p.lifted_action, 1.0))
            else:
                p = fhat(p, delta)
            out[k, 0] = p.tau
            out[k, 1] = p.lifted_action
        clouds.append(out)
    return clouds


def long_orbit_mixing_stats(delta, n_steps, tau0=0.2, act0=0.6, max_lag=64):
    """Birkhoff average of cos(2 pi tau) and the action-increment autocorrelation.

    Runs one sawtooth orbit of ``n_steps`` collisions (compiled kernel) and
    returns (birkhoff_mean, rho) where rho[k] is the normalized lag-k
    autocorrelation of the per-step action increment for k <= max_lag.
    """
    from .engine import sawtooth_series
    from .stats import autocorrelation

    taus = sawtooth_series(delta, n_steps, tau0, act0)
    birkhoff = float(np.mean(np.cos(2.0 * math.pi * taus)))
    inc = delta * (taus - 0.5)
    rho = autocorrelation(inc, max_lag)
    return birkhoff, rho
