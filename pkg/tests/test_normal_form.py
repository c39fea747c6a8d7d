import math
from fractions import Fraction

import numpy as np
import pytest

from fermiulam.normal_form import (
    ACCELERATING,
    DECELERATING,
    PERIODIC,
    OrbitSearchBudget,
    TorusPoint,
    direct_variance_slope,
    duality_check,
    f_corrected,
    fhat,
    fhat_inverse,
    fhat_portrait,
    green_kubo_D2,
    invariant_slopes,
    kick_T,
    long_orbit_mixing_stats,
    orbit_search,
    sawtooth_factored,
    sawtooth_portrait,
    scan_windows,
    shear_G,
    theta_to_delta,
    twist_diagnostic,
    window_scan,
)


def test_fhat_fixed_point():
    for delta in (-0.3, 1.0, 3.0, 4.5):
        p = fhat(TorusPoint(0.5, 0.0), delta)
        assert (p.tau, p.action, p.level) == (0.5, 0.0, 0)


def test_fhat_accelerating_and_decelerating_points():
    p = fhat(TorusPoint(5.0 / 6.0, 0.0), 3.0)
    assert p.tau == pytest.approx(5.0 / 6.0)
    assert p.action == pytest.approx(0.0, abs=1e-15)
    assert p.level == 1
    q = fhat(TorusPoint(1.0 / 6.0, 0.0), 3.0)
    assert q.tau == pytest.approx(1.0 / 6.0)
    assert q.level == -1


def test_fhat_branch_matrix_and_trace():
    # dF = [[1, -1], [delta, 1 - delta]]: trace 2 - delta, determinant 1
    delta = 1.7
    h = 1e-7
    p0 = TorusPoint(0.37, 0.21)
    base = fhat(p0, delta)
    dtau = fhat(TorusPoint(0.37 + h, 0.21), delta)
    dact = fhat(TorusPoint(0.37, 0.21 + h), delta)
    m = np.array(
        [
            [(dtau.tau - base.tau) / h, (dact.tau - base.tau) / h],
            [
                (dtau.lifted_action - base.lifted_action) / h,
                (dact.lifted_action - base.lifted_action) / h,
            ],
        ]
    )
    assert np.allclose(m, [[1.0, -1.0], [delta, 1.0 - delta]], atol=1e-6)
    assert np.trace(m) == pytest.approx(2.0 - delta, abs=1e-6)
    assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-6)


def test_factorization_equals_fhat_exactly():
    rng = np.random.default_rng(0)
    for delta in (-0.3, 0.0, 2.2, 3.7):
        for _ in range(2500):
            p = TorusPoint(rng.random(), rng.random())
            a = fhat(p, delta)
            b = sawtooth_factored(p, delta)
            assert (a.tau, a.action, a.level) == (b.tau, b.action, b.level)


def test_shear_and_kick_components():
    p = TorusPoint(0.2, 0.7)
    g = shear_G(p)
    assert g.tau == pytest.approx(0.5) and g.action == 0.7
    k = kick_T(TorusPoint(0.75, 0.1), 2.0)
    assert k.action == pytest.approx(0.6) and k.tau == 0.75


def _circ(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def test_fhat_inverse_round_trip():
    rng = np.random.default_rng(1)
    for delta in (-0.3, 1.6, 4.2):
        for _ in range(2000):
            p = TorusPoint(rng.random(), rng.random(), int(rng.integers(-3, 4)))
            q = fhat(fhat_inverse(p, delta), delta)
            assert _circ(q.tau, p.tau) < 1e-11
            assert abs(q.lifted_action - p.lifted_action) % 1.0 < 1e-11 or \
                1.0 - abs(q.lifted_action - p.lifted_action) % 1.0 < 1e-11


def test_corrected_map_reduces_to_fhat():
    rng = np.random.default_rng(2)
    for _ in range(500):
        p = TorusPoint(rng.random(), rng.random())
        a = fhat(p, 1.3)
        b = f_corrected(p, 1.3, 0.0, 57.0)
        assert (a.tau, a.action, a.level) == (b.tau, b.action, b.level)


def test_corrected_map_vanishing_correction_points():
    # tau_bar = 1/2 +- 1/sqrt(12) zeroes the quadratic correction factor
    for sgn in (+1.0, -1.0):
        tau_bar = 0.5 + sgn / math.sqrt(12.0)
        p = TorusPoint(tau_bar, 0.0)
        a = fhat(p, 0.9)
        b = f_corrected(p, 0.9, 5.0, 40.0)
        assert b.action == pytest.approx(a.action, abs=1e-15)


def test_corrected_map_hand_value():
    # delta = 1, delta1 = 2, I = 100, tau_bar = 1/2: shift = 2*(-1/12)/100
    p = TorusPoint(0.5, 0.0)
    out = f_corrected(p, 1.0, 2.0, 100.0)
    assert out.lifted_action == pytest.approx(-2.0 / 12.0 / 100.0, abs=1e-15)
    with pytest.raises(ValueError):
        f_corrected(p, 1.0, 2.0, 0.0)


def test_invariant_slopes_values_and_vieta():
    hp, hm = invariant_slopes(-0.3)
    assert hp == pytest.approx(0.4179, abs=1e-4)
    assert hm == pytest.approx(-0.7179, abs=1e-4)
    hp, hm = invariant_slopes(4.5)
    assert hp != hm
    assert hp * hm == pytest.approx(4.5, rel=1e-12)
    assert hp + hm == pytest.approx(4.5, rel=1e-12)
    for bad in (0.0, 2.0, 4.0):
        with pytest.raises(ValueError):
            invariant_slopes(bad)


def test_invariant_slopes_are_eigendirections():
    for delta in (-0.3, 4.5, -2.16):
        for h in invariant_slopes(delta):
            # M (1, h) must be parallel to (1, h) with multiplier 1 - h
            vec = np.array([1.0, h])
            img = np.array([vec[0] - vec[1], delta * vec[0] + (1 - delta) * vec[1]])
            lam = 1.0 - h
            assert np.allclose(img, lam * vec, atol=1e-12)


def test_duality_identity():
    for delta in (1.0, -0.3, 3.7):
        assert duality_check(delta, samples=1000, seed=3) < 1e-9


def test_twist_diagnostic_flags():
    d = twist_diagnostic(1.8, 0.0, 50.0)
    assert not d.upsilon_nonzero
    assert d.epsilon == 0.0
    d = twist_diagnostic(1.8, 1.4, 50.0)
    assert d.upsilon_nonzero
    assert not d.resonance
    assert d.tau_shift == pytest.approx((1.4 / 50.0) / (12.0 * 1.8))


def test_twist_diagnostic_engineered_resonance():
    # choose delta slightly below 5/2 and eps to land cos(theta_bar) = -1/4
    delta = 2.499
    cos_hat = 1.0 - delta / 2.0
    eps = math.sqrt((cos_hat + 0.25) * 12.0 * delta)
    assert eps < delta / 10.0
    delta1 = eps * 30.0
    d = twist_diagnostic(delta, delta1, 30.0)
    assert d.resonance
    assert not d.upsilon_nonzero


def test_twist_diagnostic_preconditions():
    with pytest.raises(ValueError):
        twist_diagnostic(-0.3, 0.1, 50.0)
    with pytest.raises(ValueError):
        twist_diagnostic(1.0, 50.0, 10.0)  # eps too large


def test_green_kubo_refuses_elliptic():
    for delta in (0.0, 1.0, 4.0):
        with pytest.raises(ValueError):
            green_kubo_D2(delta)


def test_green_kubo_stability_under_doubling():
    a = green_kubo_D2(-0.3, n_trunc=32, samples=400_000, seed=5)
    b = green_kubo_D2(-0.3, n_trunc=64, samples=800_000, seed=6)
    assert a.d2 > 0.0
    assert abs(a.d2 - b.d2) / b.d2 < 0.05
    assert a.tail_ok and b.tail_ok


def test_green_kubo_lag_one_correlation_vanishes():
    # the shear uniformizes the angle over the fiber: C_1 = 0 exactly, so
    # truncating at lag 1 must already give C_0 within noise
    a = green_kubo_D2(-0.9, n_trunc=1, samples=150_000, seed=7)
    assert a.d2 == pytest.approx((-0.9) ** 2 / 12.0, abs=4.0 * a.stderr)


def test_green_kubo_matches_direct_variance():
    gk = green_kubo_D2(-0.3, n_trunc=48, samples=150_000, seed=8)
    direct = direct_variance_slope(-0.3, n_steps=512, samples=150_000, seed=9)
    assert abs(gk.d2 - direct) / direct < 0.1


def test_orbit_search_exact_triple_at_delta_3():
    reports = orbit_search(Fraction(3), 1)
    assert len(reports) == 3
    by_class = {r.classification: r for r in reports}
    assert set(by_class) == {PERIODIC, ACCELERATING, DECELERATING}
    assert by_class[PERIODIC].exact == (Fraction(1, 2), Fraction(0))
    assert by_class[ACCELERATING].exact == (Fraction(5, 6), Fraction(0))
    assert by_class[ACCELERATING].winding == 1
    assert by_class[DECELERATING].exact == (Fraction(1, 6), Fraction(0))
    assert by_class[DECELERATING].winding == -1
    for r in reports:
        assert abs(r.trace) < 2.0
        assert r.stability == "Elliptic"


def test_orbit_search_theta_windows_spot_checks():
    # theta = 0.9 pi lies in the period-1 accelerating window (pi/2, pi)
    reps = orbit_search(theta_to_delta(0.9 * math.pi), 1)
    assert any(r.winding > 0 for r in reps)
    # theta = 0.3 pi: period-2 periodic orbit exists, no period-2 accelerating
    reps = orbit_search(theta_to_delta(0.3 * math.pi), 2)
    two = [r for r in reps if r.period == 2]
    assert any(r.winding == 0 for r in two)
    assert all(r.winding == 0 for r in two)


def test_orbit_search_minimal_period_dedup():
    # the fixed point must not reappear as a period-2 orbit
    reps = orbit_search(theta_to_delta(0.77 * math.pi), 2)
    fixed = [r for r in reps if r.period == 1 and r.classification == PERIODIC]
    assert len(fixed) == 1
    for r in reps:
        if r.period == 2:
            assert abs(r.tau - 0.5) > 1e-6 or abs(r.action) > 1e-6


def test_orbit_search_budget_guard():
    with pytest.raises(OrbitSearchBudget):
        orbit_search(-6.0, 12, node_budget=200)
    with pytest.raises(ValueError):
        orbit_search(1.0, 0)
    with pytest.raises(ValueError):
        orbit_search(1.0, 13)


def test_window_scan_grid_contract():
    with pytest.raises(ValueError):
        window_scan(1, 0.01 * math.pi)


def test_scan_windows_period_one(tmp_path):
    wins = scan_windows(1, 5e-3 * math.pi)
    per = wins[(1, "periodic")]
    acc = wins[(1, "accelerating")]
    assert len(per) == 1 and len(acc) == 1
    assert per[0][0] < 0.02 * math.pi and per[0][1] > 0.98 * math.pi
    assert abs(acc[0][0] - 0.5 * math.pi) < 0.012 * math.pi
    assert acc[0][1] > 0.98 * math.pi


def test_portrait_shapes():
    clouds = sawtooth_portrait(-0.3, 2, 500, seed=1)
    assert len(clouds) == 2 and clouds[0].shape == (500, 2)
    assert np.all((clouds[0] >= 0.0) & (clouds[0] < 1.0))
    clouds = fhat_portrait(1.8, [(0.3, 40.2)], 200)
    assert clouds[0].shape == (200, 2)
    # elliptic regime: the lifted action stays near its start
    assert np.all(np.abs(clouds[0][:, 1] - 40.2) < 5.0)


def test_long_orbit_mixing_stats_smoke():
    birkhoff, rho = long_orbit_mixing_stats(-0.3, 200_000, max_lag=40)
    assert abs(birkhoff) < 0.02
    assert rho[0] == pytest.approx(1.0)
    assert np.max(np.abs(rho[30:])) < 0.05
