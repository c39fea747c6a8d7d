"""Simulation and analysis toolkit for piecewise-smooth Fermi-Ulam ping pongs.

A ball bounces elastically between a fixed wall and a periodically moving
wall whose gap function l(t) has one derivative jump per period.  The
package provides the exact event-driven collision dynamics, action-angle
coordinates for the high-energy regime, the piecewise-affine limit of the
first-return map and its sawtooth torus quotient, periodic-orbit and
stability analysis, and seeded Monte Carlo experiments for escape-time
tails, Brownian action scaling, elliptic trapping, and the Green-Kubo
diffusion coefficient.
"""

__version__ = "0.1.0"

from .collisions import CollisionState, OrbitTrace, collision_map, iterate, jacobian_check, solve_flight
from .coordinates import (
    AngleAction,
    I_implicit,
    ReturnPoint,
    adiabatic_J,
    conjugacy_residuals,
    first_return,
    reference_first_return,
    reference_map,
    theta_of,
)
from .normal_form import (
    OrbitReport,
    TorusPoint,
    duality_check,
    f_corrected,
    fhat,
    green_kubo_D2,
    invariant_slopes,
    orbit_search,
    sawtooth_factored,
    twist_diagnostic,
    window_scan,
)
from .wall_motion import (
    NormalFormParams,
    WallProfile,
    compute_J,
    compute_params,
    delta_closed_form,
    make_cubic,
    make_quadratic,
    make_sine,
    make_spline,
    profile_from_config,
)

__all__ = [
    "__version__",
    "AngleAction",
    "CollisionState",
    "I_implicit",
    "NormalFormParams",
    "OrbitReport",
    "OrbitTrace",
    "ReturnPoint",
    "TorusPoint",
    "WallProfile",
    "adiabatic_J",
    "collision_map",
    "compute_J",
    "compute_params",
    "conjugacy_residuals",
    "delta_closed_form",
    "duality_check",
    "f_corrected",
    "fhat",
    "first_return",
    "green_kubo_D2",
    "invariant_slopes",
    "iterate",
    "jacobian_check",
    "make_cubic",
    "make_quadratic",
    "make_sine",
    "make_spline",
    "orbit_search",
    "profile_from_config",
    "reference_first_return",
    "reference_map",
    "sawtooth_factored",
    "solve_flight",
    "theta_of",
    "twist_diagnostic",
    "window_scan",
]
