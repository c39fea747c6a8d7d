import numpy as np
import pytest

from fermiulam.collisions import (
    CollisionState,
    FlightError,
    collision_map,
    iterate,
    jacobian_check,
    solve_flight,
    trace_to_csv,
)
from fermiulam.wall_motion import make_cubic, make_quadratic, make_sine

CONST = make_quadratic(0.0, 1.0)
CONST2 = make_quadratic(0.0, 2.0)
QUAD = make_quadratic(-1.0, 1.0)
SINE = make_sine(0.12)


def test_state_time_split():
    s = CollisionState.at(12.375, 5.0)
    assert s.winding == 12
    assert s.phase == pytest.approx(0.375)
    assert s.t == pytest.approx(12.375)
    with pytest.raises(ValueError):
        CollisionState(0, 1.0, 5.0)


def test_flight_constant_profile():
    dt, bounced = solve_flight(CONST, CollisionState.at(0.3, 10.0))
    assert dt == pytest.approx(0.2, abs=1e-14)
    assert bounced
    dt, bounced = solve_flight(CONST2, CollisionState.at(0.1, 4.0))
    assert dt == pytest.approx(1.0, abs=1e-13)
    assert bounced


def test_flight_matches_series_expansion():
    # three-term expansion dt = 2l/v + 2l l'/v^2 + 2l(l'^2 + l l'')/v^3
    st = CollisionState.at(0.25, 100.0)
    dt, _ = solve_flight(QUAD, st, tol=1e-15)
    t, v = 0.25, 100.0
    l, dl, ddl = QUAD.l(t), QUAD.dl(t), QUAD.ddl(t)
    approx = 2 * l / v + 2 * l * dl / v**2 + 2 * l * (dl * dl + l * ddl) / v**3
    assert abs(dt - approx) < 10.0 / v**4


def test_flight_collision_equation_residual():
    # the returned time solves v dt = l(t) + l(t + dt)
    rng = np.random.default_rng(3)
    for profile in (QUAD, SINE):
        for _ in range(40):
            st = CollisionState.at(rng.random(), 5.0 + 95.0 * rng.random())
            dt, bounced = solve_flight(profile, st, tol=1e-14)
            assert bounced
            res = st.v * dt - profile.l(st.phase) - profile.l(st.phase + dt)
            assert abs(res) < 1e-10


def test_map_constant_profile():
    out = collision_map(CONST, CollisionState.at(0.3, 5.0))
    assert out.phase == pytest.approx(0.7, abs=1e-13)
    assert out.v == 5.0


def test_map_reflection_law():
    st = CollisionState.at(0.5, 50.0)
    dt, _ = solve_flight(QUAD, st)
    out = collision_map(QUAD, st)
    assert out.t == pytest.approx(0.5 + dt, abs=1e-12)
    assert out.v == pytest.approx(50.0 - 2.0 * QUAD.dl(out.phase), abs=1e-12)


def test_map_stays_admissible():
    rng = np.random.default_rng(7)
    for profile in (CONST, QUAD, SINE, make_cubic(-1.0, 1.0, 1.0)):
        for _ in range(100):
            st = CollisionState.at(rng.random(), 3.0 + 60.0 * rng.random())
            if not st.is_admissible(profile):
                continue
            out = collision_map(profile, st)
            assert out.v > -profile.dl(out.phase)


def test_inadmissible_state_rejected():
    # v < -l'(t): the ball does not separate from the wall
    st = CollisionState.at(0.7, -0.9)  # dl(0.7) = 0.4, so need v > -0.4
    with pytest.raises(ValueError):
        solve_flight(QUAD, st)


def test_low_velocity_drift_collision():
    # admissible v < 0: the receding wall turns around and recaptures
    st = CollisionState.at(0.2, -0.3)  # -l'(0.2) = -0.6 < -0.3
    assert st.is_admissible(QUAD)
    dt, bounced = solve_flight(QUAD, st)
    assert not bounced
    assert dt > 0.0
    # collision condition: distance from the fixed wall matches the gap
    d = QUAD.l(0.2) - st.v * dt
    assert d == pytest.approx(QUAD.l(0.2 + dt), abs=1e-9)


def test_low_velocity_prebounce_recapture():
    # fast wall (lip ~ pi/2) catches a slow outgoing ball before the far wall
    fast = make_sine(0.5)
    st = CollisionState.at(0.55, 0.8)
    assert st.is_admissible(fast)
    dt, bounced = solve_flight(fast, st)
    d = fast.l(0.55) - 0.8 * dt if not bounced else 0.8 * (dt - fast.l(0.55) / 0.8)
    assert d == pytest.approx(fast.l(0.55 + dt), abs=1e-9)
    if not bounced:
        assert dt < fast.l(0.55) / 0.8  # caught before reaching the fixed wall


def test_zero_velocity_collision():
    st = CollisionState.at(0.3, 0.0)  # dl(0.3) > 0 for A=-1? dl = -2(t-1/2) = 0.4
    assert st.is_admissible(QUAD)
    dt, bounced = solve_flight(QUAD, st)
    assert not bounced
    assert QUAD.l(0.3) == pytest.approx(QUAD.l(0.3 + dt), abs=1e-9)


def test_landing_on_jump_is_nudged():
    # constant profile from phase 0.8 at v = 10: lands exactly on t = 1
    out = collision_map(CONST, CollisionState.at(0.8, 10.0))
    assert out.winding == 1
    assert out.phase == pytest.approx(1e-12, abs=1e-13)


def test_iterate_constant_profile():
    tr = iterate(CONST, CollisionState.at(0.0 + 1e-12, 10.0),
                 stop=lambda n, s: n >= 5)
    assert len(tr) == 6
    assert not tr.truncated
    assert np.allclose(np.diff(tr.phase[:5] + tr.winding[:5]), 0.2, atol=1e-12)
    assert np.all(tr.v == 10.0)


def test_iterate_stop_on_winding():
    tr = iterate(QUAD, CollisionState.at(0.3, 7.0),
                 stop=lambda n, s: s.winding >= 1)
    assert tr.winding[-1] >= 1
    assert np.all(tr.winding[:-1] == 0)


def test_iterate_budget_truncates():
    tr = iterate(CONST, CollisionState.at(0.25, 10.0), stop=lambda n, s: False,
                 budget=10)
    assert tr.truncated
    assert len(tr) == 11


def test_iterate_winding_nondecreasing():
    tr = iterate(SINE, CollisionState.at(0.4, 13.0), stop=lambda n, s: n >= 300)
    assert np.all(np.diff(tr.winding) >= 0)


def test_hyperbolic_deceleration_reaches_low_velocity():
    # most random starts on a hyperbolic profile decelerate below v = 2
    hyper = make_quadratic(1.0, 1.0)
    rng = np.random.default_rng(11)
    done = 0
    for _ in range(20):
        tr = iterate(hyper, CollisionState.at(rng.random(), 15.0),
                     stop=lambda n, s: s.v < 2.0, budget=120_000)
        done += not tr.truncated
    assert done >= 14


def test_reversibility_constant_profile():
    st = CollisionState.at(0.37, 9.0)
    tr = iterate(CONST, st, stop=lambda n, s: n >= 10)
    t_end = tr.winding[-1] + tr.phase[-1]
    # free flight at conserved speed: stepping the flights back recovers t0
    back = t_end - tr.dt[1:].sum()
    assert back == pytest.approx(st.t, abs=1e-10)


def test_jacobian_constant_is_shear():
    val = jacobian_check(CONST, CollisionState.at(0.4, 8.0), h=1e-5)
    assert val == pytest.approx(1.0, abs=1e-9)


def test_jacobian_quadratic_and_sine():
    assert jacobian_check(QUAD, CollisionState.at(0.3, 40.0), h=1e-5) == pytest.approx(
        1.0, abs=1e-6
    )
    assert jacobian_check(SINE, CollisionState.at(0.6, 25.0), h=1e-5) == pytest.approx(
        1.0, abs=1e-6
    )


def test_jacobian_refuses_jump_stencils():
    with pytest.raises(ValueError):
        jacobian_check(QUAD, CollisionState.at(1e-6, 40.0), h=1e-5)


def test_jacobian_random_states_property():
    rng = np.random.default_rng(5)
    for profile in (QUAD, SINE):
        count = 0
        while count < 120:
            st = CollisionState.at(0.02 + 0.96 * rng.random(),
                                   10.0 * 100.0 ** rng.random())
            try:
                val = jacobian_check(profile, st, h=1e-5)
            except ValueError:
                continue
            assert abs(val - 1.0) < 1e-5
            count += 1


def test_trace_csv(tmp_path):
    tr = iterate(CONST, CollisionState.at(0.1, 10.0), stop=lambda n, s: n >= 3)
    path = tmp_path / "trace.csv"
    trace_to_csv(tr, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,winding,phase,v,dt,bounced"
    assert len(lines) == len(tr) + 1
    # 17-significant-digit round trip
    assert float(lines[1].split(",")[3]) == tr.v[0]


def test_flight_horizon_error():
    # horizon too tight to reach the far wall and come back
    with pytest.raises(FlightError):
        solve_flight(QUAD, CollisionState.at(0.3, -0.3), horizon=0.3 + 1e-9)
