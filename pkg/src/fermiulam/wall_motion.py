"""Admissible wall motions and their normal-form parameters.

A wall motion is the period-1 gap function l(t) > 0 between the fixed and
the oscillating wall.  l is continuous across the period; its derivative is
smooth inside (0, 1) and jumps only at t = 0.  The jump data (one-sided
limits of l' and l'' at the discontinuity) together with the quadrature
J = int_0^1 l(s)^-2 ds determine the two parameters

    delta  = J * l0 * (l'(0+) - l'(1-))
    delta1 = J^2 * l0^3 * (l''(0+) - l''(1-)) / 2

that control the high-energy behaviour: elliptic for delta in (0, 4),
hyperbolic for delta outside [0, 4].
"""

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import adaptive_simpson

__all__ = [
    "WallProfile",
    "NormalFormParams",
    "make_quadratic",
    "make_sine",
    "make_cubic",
    "make_spline",
    "compute_J",
    "compute_params",
    "classify_regime",
    "j_closed_form",
    "delta_closed_form",
    "profile_from_config",
    "ELLIPTIC",
    "HYPERBOLIC",
    "PARABOLIC",
]

ELLIPTIC = "Elliptic"
HYPERBOLIC = "Hyperbolic"
PARABOLIC = "Parabolic"

_CONTINUITY_TOL = 1e-12


class WallProfile:
    """Immutable wall-gap function with analytic jump data.

    Parameters
    ----------
    family : str
        Catalog name ("quadratic", "sine", "cubic", "spline").
    params : dict
        Family parameters, round-trippable through config files.
    funcs : tuple of callables
        (l, dl, ddl, dddl) evaluated on the open interval (0, 1); the phase
        argument is already reduced mod 1 by the caller-facing methods.
    limits : tuple
        (l0, dl_plus, dl_minus, ddl_plus, ddl_minus) one-sided jump data,
        stored analytically rather than estimated numerically.
    lip_bound : float
        A Lipschitz constant for l.
    """

    def __init__(self, family, params, funcs, limits, lip_bound):
        self.family = family
        self.params = dict(params)
        self._l, self._dl, self._ddl, self._dddl = funcs
        self.l0, self.dl_plus, self.dl_minus, self.ddl_plus, self.ddl_minus = limits
        self.lip_bound = float(lip_bound)
        self._j_cache = {}
        self._theta_table = None
        self._validate()

    def _validate(self):
        u = np.linspace(0.0, 1.0, 4097)
        vals = np.array([self._l(x) for x in u])
        if not np.all(vals > 0.0):
            bad = u[int(np.argmin(vals))]
            raise ValueError(f"wall gap must stay positive; l({bad:.6f}) <= 0")
        if abs(self._l(0.0) - self._l(1.0)) > _CONTINUITY_TOL:
            raise ValueError("wall gap must be continuous across the period")
        if abs(self._l(0.0) - self.l0) > _CONTINUITY_TOL:
            raise ValueError("l0 limit inconsistent with l(0)")
        self.l_min = float(vals.min())
        self.l_max = float(vals.max())

    @staticmethod
    def _frac(t):
        return t - math.floor(t)

    def l(self, t):
        """Gap at time t (periodic)."""
        return self._l(self._frac(t))

    def dl(self, t):
        """Gap rate at time t; the jump at t = 0 resolves to the 0+ side."""
        u = self._frac(t)
        if u == 0.0:
            return self.dl_plus
        return self._dl(u)

    def ddl(self, t):
        u = self._frac(t)
        if u == 0.0:
            return self.ddl_plus
        return self._ddl(u)

    def dddl(self, t):
        u = self._frac(t)
        if u == 0.0:
            u = 1e-15
        return self._dddl(u)

    def j_integral(self, tol=1e-10):
        """Cached J = int_0^1 l(s)^-2 ds at the requested tolerance."""
        key = float(tol)
        if key not in self._j_cache:
            self._j_cache[key] = adaptive_simpson(
                lambda s: self._l(s) ** -2.0, 0.0, 1.0, tol=key
            )
        return self._j_cache[key]

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"WallProfile({self.family}, {inner})"


@dataclass(frozen=True)
class NormalFormParams:
    """Normal-form data of a wall motion: J, jump data, delta, delta1, regime."""

    j: float
    l0: float
    dl_plus: float
    dl_minus: float
    ddl_plus: float
    ddl_minus: float
    delta: float
    delta1: float
    regime: str

    def as_dict(self):
        return {
            "J": self.j,
            "l0": self.l0,
            "dl_plus": self.dl_plus,
            "dl_minus": self.dl_minus,
            "ddl_plus": self.ddl_plus,
            "ddl_minus": self.ddl_minus,
            "delta": self.delta,
            "delta1": self.delta1,
            "regime": self.regime,
        }


def classify_regime(delta):
    """Elliptic for delta in (0, 4), Parabolic at exactly 0 or 4, else Hyperbolic."""
    if delta == 0.0 or delta == 4.0:
        return PARABOLIC
    if 0.0 < delta < 4.0:
        return ELLIPTIC
    return HYPERBOLIC


def make_quadratic(A, B=1.0):
    """Gap l(t) = B + A*((t mod 1) - 1/2)^2.

    Requires B > 0 and B + A/4 > 0 so the gap stays positive; for B = 1 the
    admissible range is A > -4.  The derivative jump is dl(0+) - dl(1-) = -2A
    and the curvature is continuous (2A on both sides).
    """
    A = float(A)
    B = float(B)
    if B <= 0.0:
        raise ValueError("B must be positive")
    if B + A / 4.0 <= 0.0:
        raise ValueError(f"gap closes at t=0: need B + A/4 > 0, got {B + A / 4.0}")
    funcs = (
        lambda u: B + A * (u - 0.5) ** 2,
        lambda u: 2.0 * A * (u - 0.5),
        lambda u: 2.0 * A,
        lambda u: 0.0,
    )
    limits = (B + A / 4.0, -A, A, 2.0 * A, 2.0 * A)
    return WallProfile("quadratic", {"A": A, "B": B}, funcs, limits, abs(A))


def make_sine(amplitude):
    """Gap l(t) = 1 - amplitude*sin(pi*(t mod 1)); requires |amplitude| < 1."""
    a = float(amplitude)
    if abs(a) >= 1.0:
        raise ValueError("need |amplitude| < 1 to keep the gap positive")
    pi = math.pi
    funcs = (
        lambda u: 1.0 - a * math.sin(pi * u),
        lambda u: -a * pi * math.cos(pi * u),
        lambda u: a * pi * pi * math.sin(pi * u),
        lambda u: a * pi**3 * math.cos(pi * u),
    )
    limits = (1.0, -a * pi, a * pi, 0.0, 0.0)
    return WallProfile("sine", {"amplitude": a}, funcs, limits, abs(a) * pi)


def make_cubic(A, B=1.0, C=0.0):
    """Gap l(t) = B + A*(u - 1/2)^2 + C*u^2*(1 - u) with u = t mod 1.

    The cubic term vanishes at both period endpoints, so the gap stays
    continuous, while it breaks the curvature symmetry:
    ddl(0+) - ddl(1-) = 6C.  This is the catalog entry with delta1 != 0.
    """
    A = float(A)
    B = float(B)
    C = float(C)
    if B <= 0.0:
        raise ValueError("B must be positive")
    funcs = (
        lambda u: B + A * (u - 0.5) ** 2 + C * u * u * (1.0 - u),
        lambda u: 2.0 * A * (u - 0.5) + C * (2.0 * u - 3.0 * u * u),
        lambda u: 2.0 * A + C * (2.0 - 6.0 * u),
        lambda u: -6.0 * C,
    )
    limits = (B + A / 4.0, -A, A - C, 2.0 * A + 2.0 * C, 2.0 * A - 4.0 * C)
    return WallProfile(
        "cubic", {"A": A, "B": B, "C": C}, funcs, limits, abs(A) + abs(C)
    )


def make_spline(knots):
    """Gap tabulated at knots [(t, value), ...] and interpolated by a cubic spline.

    The knot sequence must start at t = 0, end at t = 1, and carry equal end
    values (the gap is continuous across the period; its derivatives need
    not be).  Derivative limits at the jump come from differentiating the
    boundary polynomial pieces analytically.
    """
    from scipy.interpolate import CubicSpline

    pts = sorted((float(t), float(v)) for t, v in knots)
    if len(pts) < 4:
        raise ValueError("spline profile needs at least 4 knots")
    ts = np.array([p[0] for p in pts])
    vs = np.array([p[1] for p in pts])
    if ts[0] != 0.0 or ts[-1] != 1.0:
        raise ValueError("spline knots must span [0, 1]")
    if abs(vs[0] - vs[-1]) > _CONTINUITY_TOL:
        raise ValueError("spline end values must match (gap is continuous)")
    cs = CubicSpline(ts, vs, bc_type="not-a-knot")
    funcs = (
        lambda u: float(cs(u)),
        lambda u: float(cs(u, 1)),
        lambda u: float(cs(u, 2)),
        lambda u: float(cs(u, 3)),
    )
    limits = (
        float(cs(0.0)),
        float(cs(0.0, 1)),
        float(cs(1.0, 1)),
        float(cs(0.0, 2)),
        float(cs(1.0, 2)),
    )
    grid = np.linspace(0.0, 1.0, 8193)
    lip = float(np.abs(cs(grid, 1)).max()) * 1.05 + 1e-9
    return WallProfile("spline", {"knots": [list(p) for p in pts]}, funcs, limits, lip)


def compute_J(profile, tol=1e-10):
    """J = int_0^1 l(s)^-2 ds by adaptive quadrature (absolute error <= tol)."""
    return profile.j_integral(tol)


def compute_params(profile, tol=1e-10):
    """Normal-form parameters (J, delta, delta1) of a wall profile."""
    j = compute_J(profile, tol)
    delta = j * profile.l0 * (profile.dl_plus - profile.dl_minus)
    delta1 = 0.5 * j * j * profile.l0**3 * (profile.ddl_plus - profile.ddl_minus)
    return NormalFormParams(
        j=j,
        l0=profile.l0,
        dl_plus=profile.dl_plus,
        dl_minus=profile.dl_minus,
        ddl_plus=profile.ddl_plus,
        ddl_minus=profile.ddl_minus,
        delta=delta,
        delta1=delta1,
        regime=classify_regime(delta),
    )


def j_closed_form(A):
    """Closed form of J(A) for the quadratic family at B = 1.

    Log branch for -4 < A <= 0, arctan branch for A > 0; both reduce to 1
    at A = 0.
    """
    A = float(A)
    if A <= -4.0:
        raise ValueError("closed form requires A > -4")
    if A == 0.0:
        return 1.0
    r = math.sqrt(abs(A))
    lead = 2.0 / (A + 4.0)
    if A < 0.0:
        return lead + 0.5 / r * math.log((2.0 + r) / (2.0 - r))
    return lead + math.atan(0.5 * r) / r


def delta_closed_form(A):
    """Closed form delta(A) = -2A(1 + A/4) J(A) for the quadratic family, B = 1."""
    A = float(A)
    if A == 0.0:
        return 0.0
    return -2.0 * A * (1.0 + A / 4.0) * j_closed_form(A)


_FAMILIES = {
    "quadratic": lambda p: make_quadratic(p.get("A", 0.0), p.get("B", 1.0)),
    "sine": lambda p: make_sine(p.get("amplitude", 0.0)),
    "cubic": lambda p: make_cubic(p.get("A", 0.0), p.get("B", 1.0), p.get("C", 0.0)),
    "spline": lambda p: make_spline(p["knots"]),
}


def profile_from_config(block):
    """Build a profile from a config mapping with a ``family`` key."""
    if "family" not in block:
        raise ValueError("profile block needs a 'family' key")
    family = str(block["family"])
    if family not in _FAMILIES:
        raise ValueError(
            f"unknown profile family {family!r}; choose from {sorted(_FAMILIES)}"
        )
    return _FAMILIES[family](block)
