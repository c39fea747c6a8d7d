"""Action-angle machinery for the high-energy regime.

The angle is the normalized phase integral theta(t) = J^-1 int_0^t l^-2,
a bijection of [0, 1).  Two actions are available: the implicit one,
I = J / int_t^t' l^-2 built from an actual flight, and the explicit
adiabatic invariant

    J(t, v) = (J_int / 2) * (v*l + l*l' + l^2*l''/(3v)),

which agrees with I up to O(v^-2).  In these variables the collision map is
conjugate, away from the jump strip, to the integrable shear
g: (theta, J) -> (theta + 1/J, J); its first return to the strip
{0 <= theta < 1/J} is the piecewise shift G(tau, J) = (tau - J mod 1, J) in
the scaled coordinate tau = J*theta.
"""

import math
from dataclasses import dataclass

import numpy as np

from .collisions import _apply_map, collision_map
from .quadrature import adaptive_simpson, gl_panel_integral

__all__ = [
    "AngleAction",
    "ReturnPoint",
    "theta_of",
    "invert_theta",
    "ThetaTable",
    "get_theta_table",
    "phase_advance",
    "adiabatic_J",
    "I_implicit",
    "reference_map",
    "reference_first_return",
    "first_return",
    "return_coordinates",
    "conjugacy_residuals",
    "scan_to_csv",
]

# Tolerance used for every cached J and quadrature inside this module; the
# residual diagnostics subtract nearly equal phase integrals, so they are
# computed through the panel integrator at machine relative precision and
# share a single J value to keep errors multiplicative.
_COORD_TOL = 1e-12


@dataclass(frozen=True)
class AngleAction:
    """Angle theta in [0, 1) and adiabatic action j > 0."""

    theta: float
    j: float

    def __post_init__(self):
        if not 0.0 <= self.theta < 1.0:
            raise ValueError("theta must lie in [0, 1)")


@dataclass(frozen=True)
class ReturnPoint:
    """Strip coordinates (tau, action) with tau = action * theta mod 1."""

    tau: float
    action: float
    level: int = 0

    def __post_init__(self):
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if self.action <= 0.0:
            raise ValueError("action must be positive")


def _integrand(profile):
    return lambda s: profile.l(s) ** -2.0


def theta_of(profile, t, tol=_COORD_TOL):
    """Normalized phase theta(t) = J^-1 int_0^t l(s)^-2 ds for t in [0, 1)."""
    if not 0.0 <= t < 1.0:
        raise ValueError("theta_of expects a phase in [0, 1)")
    if t == 0.0:
        return 0.0
    j = profile.j_integral(tol)
    return adaptive_simpson(_integrand(profile), 0.0, t, tol=tol) / j


class ThetaTable:
    """Precomputed theta on 4096 intervals with monotone cubic interpolation.

    Knot values come from panel quadrature (machine accurate); between knots
    a PCHIP interpolant keeps evaluation cheap and strictly monotone.  Scans
    that call theta millions of times use this; tests use direct quadrature.
    """

    N = 4096

    def __init__(self, profile):
        from scipy.interpolate import PchipInterpolator

        f = _integrand(profile)
        h = 1.0 / self.N
        seg = np.empty(self.N)
        for k in range(self.N):
            seg[k] = gl_panel_integral(f, k * h, h)
        cum = np.zeros(self.N + 1)
        np.cumsum(seg, out=cum[1:])
        cum /= cum[-1]
        knots = np.linspace(0.0, 1.0, self.N + 1)
        self._fwd = PchipInterpolator(knots, cum)
        self._inv = PchipInterpolator(cum, knots)

    def theta(self, t):
        return float(self._fwd(t))

    def inverse(self, x):
        return float(self._inv(x))


def get_theta_table(profile):
    """Lazily built, per-profile shared theta table."""
    if profile._theta_table is None:
        profile._theta_table = ThetaTable(profile)
    return profile._theta_table


def invert_theta(profile, x, tol=_COORD_TOL):
    """Solve theta(t) = x for t in [0, 1)."""
    from scipy.optimize import brentq

    if not 0.0 <= x < 1.0:
        raise ValueError("theta values live in [0, 1)")
    if x == 0.0:
        return 0.0
    guess = get_theta_table(profile).inverse(x)
    lo = max(0.0, guess - 1e-3)
    hi = min(1.0 - 1e-15, guess + 1e-3)
    f = lambda t: theta_of(profile, t, tol) - x
    flo, fhi = f(lo), f(hi)
    if flo > 0.0 or fhi < 0.0:
        lo, hi = 0.0, 1.0 - 1e-15
    return brentq(f, lo, hi, xtol=1e-14)


def phase_advance(profile, phase, dt):
    """int_{t}^{t+dt} l(s)^-2 ds evaluated through the (phase, dt) pair.

    Splits at integer crossings of the flight, where the integrand has a
    corner, and never rounds t + dt into a single float, which preserves
    machine relative accuracy for the small flight integrals entering the
    conjugacy residuals.
    """
    first = 1.0 - phase
    breaks = []
    c = first
    while c < dt:
        breaks.append(c)
        c += 1.0
    return gl_panel_integral(_integrand(profile), phase, dt, breaks)


def adiabatic_J(profile, state):
    """Explicit adiabatic action (J_int/2)(v*l + l*l' + l^2*l''/(3v))."""
    p, v = state.phase, state.v
    if p == 0.0:
        raise ValueError("adiabatic action is two-valued at the jump; offset the phase")
    if v <= 0.0:
        raise ValueError("adiabatic action needs v > 0")
    j = profile.j_integral(_COORD_TOL)
    l = profile.l(p)
    return 0.5 * j * (v * l + l * profile.dl(p) + l * l * profile.ddl(p) / (3.0 * v))


def _flight(profile, state, tol):
    out, dt, _ = _apply_map(profile, state, tol)
    return out, dt


def I_implicit(profile, state, tol=1e-13):
    """Implicit action J_int / int_t^t' l^-2 with t' the next collision time."""
    if state.v <= 0.0:
        raise ValueError("implicit action needs v > 0")
    _, dt = _flight(profile, state, tol)
    pa = phase_advance(profile, state.phase, dt)
    return profile.j_integral(_COORD_TOL) / pa


def reference_map(point):
    """Integrable shear g: (theta, J) -> (theta + 1/J mod 1, J)."""
    if point.j <= 0.0:
        raise ValueError("reference map needs J > 0")
    return AngleAction((point.theta + 1.0 / point.j) % 1.0, point.j)


def reference_first_return(point):
    """First return of the shear to the strip {0 <= theta < 1/J}.

    Returns the mapped point (tau - J mod 1, J) and the number of shear
    steps taken: with k = floor(J) and J = k + Jhat, the return happens at
    step k when tau >= Jhat (theta_k = theta - Jhat/J lands in the strip
    directly) and at step k + 1 otherwise.
    """
    tau, j = point.tau, point.action
    k = math.floor(j)
    j_hat = j - k
    steps = int(k) if tau >= j_hat else int(k) + 1
    return ReturnPoint((tau - j) % 1.0, j, point.level), steps


def return_coordinates(profile, state, tol=1e-13):
    """Strip coordinates (tau, I) of a collision state, tau = I*theta mod 1."""
    action = I_implicit(profile, state, tol)
    theta = theta_of(profile, state.phase)
    return ReturnPoint((action * theta) % 1.0, action, 0)


def first_return(profile, state, tol=1e-13, budget=None):
    """Iterate the collision map until the flight next crosses t = 0 mod 1.

    Returns (state at return, its ReturnPoint, number of collisions).  The
    step budget defaults to 10 times the action, matching the expected
    return length.
    """
    if budget is None:
        budget = int(10.0 * max(adiabatic_J(profile, state), 10.0))
    cur = state
    for step in range(1, budget + 1):
        nxt = collision_map(profile, cur, tol=tol)
        if nxt.winding > cur.winding:
            return nxt, return_coordinates(profile, nxt, tol), step
        cur = nxt
    raise RuntimeError(f"no return to the strip within {budget} collisions")


def conjugacy_residuals(profile, state, tol=1e-13):
    """Deviation of one collision step from the integrable shear.

    r_theta = theta(t') - theta(t) - 1/J(t, v) and r_J = J(t', v') - J(t, v),
    valid only when neither the state nor its image sits in the jump strip;
    a flight that crosses t = 0 mod 1 is refused.
    """
    out, dt = _flight(profile, state, tol)
    if state.phase + dt >= 1.0:
        raise ValueError("flight crosses the jump; the state lies in the pre-strip")
    j = profile.j_integral(_COORD_TOL)
    pa = phase_advance(profile, state.phase, dt)
    r_theta = pa / j - 1.0 / adiabatic_J(profile, state)
    r_j = adiabatic_J(profile, out) - adiabatic_J(profile, state)
    return r_theta, r_j


def scan_to_csv(rows, path):
    """Write first-return scan rows (tau, I, tau_next, I_next, steps) as CSV."""
    with open(path, "w") as fh:
        fh.write("tau,I,tau_next,I_next,steps\n")
        for tau, act, tau2, act2, steps in rows:
            fh.write(f"{tau!r},{act!r},{tau2!r},{act2!r},{steps}\n")
