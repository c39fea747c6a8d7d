"""Scalar quadrature helpers for smooth periodic integrands.

Two tools live here.  ``adaptive_simpson`` is the workhorse for integrals of
wall-profile functions over [0, 1] and its sub-intervals, driven by an
absolute tolerance.  ``gl_panel_integral`` evaluates an integral over a short
flight interval [t, t + dt] through the (t, dt) pair directly, which keeps
the result accurate to machine *relative* precision even when dt is tiny;
this matters when two nearly equal phase integrals are subtracted downstream.
"""

import math

import numpy as np

__all__ = [
    "QuadratureError",
    "adaptive_simpson",
    "gl_panel_integral",
]


class QuadratureError(RuntimeError):
    """Raised when an integral does not converge within its evaluation budget."""


def adaptive_simpson(f, a, b, tol=1e-10, max_evals=500_000):
    """Integrate ``f`` on [a, b] to absolute tolerance ``tol``.

    Classic recursive Simpson subdivision with Richardson correction.  The
    integrand must be finite on the closed interval; smoothness in the
    interior is what makes the subdivision terminate quickly.
    """
    if not b > a:
        if b == a:
            return 0.0
        raise ValueError("integration bounds must satisfy a <= b")
    if tol <= 0:
        raise ValueError("tol must be positive")

    evals = [0]

    def feval(x):
        evals[0] += 1
        if evals[0] > max_evals:
            raise QuadratureError(
                f"quadrature did not converge within {max_evals} evaluations"
            )
        return f(x)

    def simpson(fa, fm, fb, h):
        return (h / 6.0) * (fa + 4.0 * fm + fb)

    def recurse(xa, xb, fa, fm, fb, whole, tol_loc, depth):
        xm = 0.5 * (xa + xb)
        xlm = 0.5 * (xa + xm)
        xrm = 0.5 * (xm + xb)
        flm = feval(xlm)
        frm = feval(xrm)
        h = xb - xa
        left = simpson(fa, flm, fm, 0.5 * h)
        right = simpson(fm, frm, fb, 0.5 * h)
        delta = left + right - whole
        if depth <= 0:
            raise QuadratureError("quadrature recursion depth exhausted")
        if abs(delta) <= 15.0 * tol_loc:
            return left + right + delta / 15.0
        return recurse(xa, xm, fa, flm, fm, left, 0.5 * tol_loc, depth - 1) + recurse(
            xm, xb, fm, frm, fb, right, 0.5 * tol_loc, depth - 1
        )

    fa = feval(a)
    fb = feval(b)
    fm = feval(0.5 * (a + b))
    whole = simpson(fa, fm, fb, b - a)
    return recurse(a, b, fa, fm, fb, whole, tol, 60)


# 24-point Gauss-Legendre rule on [0, 1]; machine-exact for analytic
# integrands on panels shorter than ~0.1.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W
_GL_NODES = [(float(x), float(w)) for x, w in zip(_GL_X, _GL_W)]

_MAX_PANEL = 0.04


def gl_panel_integral(f, t, dt, breakpoints=()):
    """Integrate ``f`` over [t, t + dt] without ever forming t + dt.

    ``breakpoints`` are offsets in (0, dt) where the integrand has a corner
    (for wall profiles: integer crossings of the flight).  Each smooth piece
    is covered by fixed Gauss-Legendre panels no longer than ``_MAX_PANEL``,
    so the result carries machine relative accuracy for smooth ``f``.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0.0:
        return 0.0
    edges = [0.0]
    for c in sorted(breakpoints):
        if 0.0 < c < dt:
            edges.append(c)
    edges.append(dt)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        width = hi - lo
        if width <= 0:
            continue
        npan = max(1, math.ceil(width / _MAX_PANEL))
        pw = width / npan
        for k in range(npan):
            base = lo + k * pw
            acc = 0.0
            for x, w in _GL_NODES:
                acc += w * f(t + (base + x * pw))
            total += acc * pw
    return total
