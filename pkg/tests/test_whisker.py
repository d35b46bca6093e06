import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from whiskersim.geometry import Circle, OpenPolyline, Pose2D, signed_distance
from whiskersim.whisker import (ContactKind, DegenerateContactError, ExactMeasurementSurface,
                                UnresolvableContactError, WhiskerError, WhiskerParams,
                                arc_point, arc_points, base_pose, curvature_from_contact,
                                curvature_from_measurement, measurement_from_curvature,
                                shaft_polyline, solve_contact)


def rk_arc(kappa, L):
    """Oracle: integrate x' = cos(theta), y' = sin(theta), theta' = kappa."""
    sol = solve_ivp(lambda s, u: [math.cos(u[2]), math.sin(u[2]), kappa], (0, L),
                    [0.0, 0.0, 0.0], rtol=1e-11, atol=1e-12)
    return sol.y[:2, -1]


@pytest.mark.parametrize("kappa", [0.0, 1e-9, 1e-4, 0.0023, 0.01, 0.02, -0.015])
def test_arc_matches_ode(kappa):
    assert np.allclose(arc_point(kappa, 75.0), rk_arc(kappa, 75.0), atol=1e-7)


def test_arc_points_vectorized():
    s = np.linspace(0, 75, 11)
    for k in (0.0, 3e-9, 0.012):
        assert np.allclose(arc_points(k, s), [arc_point(k, si) for si in s], atol=1e-12)


def test_arc_is_unit_speed():
    s = np.linspace(0, 75, 20001)
    P = arc_points(0.017, s)
    assert np.sum(np.hypot(*np.diff(P, axis=0).T)) == pytest.approx(75.0, rel=1e-8)


@pytest.mark.parametrize("c", [(40.0, 5.0), (70.0, 20.0), (10.0, 30.0), (60.0, -8.0)])
def test_curvature_from_contact_root_oracle(c):
    c = np.array(c)

    # the arc of curvature k is the circle centred (0, 1/k); find where c lies on it
    def f(k):
        return math.hypot(c[0], c[1] - 1.0 / k) - abs(1.0 / k)

    sign = 1.0 if c[1] > 0 else -1.0
    k_ref = sign * brentq(lambda a: f(sign * a), 1e-6, 1.0, xtol=1e-15)
    assert curvature_from_contact(c) == pytest.approx(k_ref, rel=1e-9)


def test_curvature_round_trip_through_arc():
    for k in np.linspace(-0.02, 0.02, 9):
        for s in (5.0, 40.0, 75.0):
            assert curvature_from_contact(arc_point(k, s)) == pytest.approx(k, abs=1e-12)


def test_degenerate_contact():
    with pytest.raises(DegenerateContactError):
        curvature_from_contact([0.0, 0.0])


def test_measurement_affine():
    p = WhiskerParams()
    assert measurement_from_curvature(0.0, p).z == p.static_offset
    assert measurement_from_curvature(0.0023, p).z == pytest.approx(-8760.0)
    assert curvature_from_measurement(-8600.0, p) == pytest.approx(0.0015)
    assert p.z_range == (pytest.approx(-12300.0), -8300.0)


def test_measurement_noise_statistics():
    p = WhiskerParams(noise_std=3.0)
    rng = np.random.default_rng(0)
    z = np.array([measurement_from_curvature(0.01, p, rng).z for _ in range(20000)])
    assert z.mean() == pytest.approx(-10300.0, abs=0.1)
    assert z.std() == pytest.approx(3.0, rel=0.03)


def test_exact_surface_level_sets_are_shafts():
    p = WhiskerParams()
    f = ExactMeasurementSurface(p)
    for k in (0.002, 0.011):
        for s in (10.0, 50.0, 75.0):
            assert f(arc_point(k, s)) == pytest.approx(measurement_from_curvature(k, p).z)


def test_params_validation():
    with pytest.raises(WhiskerError):
        WhiskerParams(shaft_length=-1)
    with pytest.raises(WhiskerError):
        WhiskerParams(curvature_max=0.1)
    with pytest.raises(WhiskerError):
        WhiskerParams(noise_std=-1)


def wall_below(d, L=75.0, angle=0.0):
    """Straight wall whose line passes d mm below the base axis at x = L/2."""
    return OpenPolyline(((500.0, -d), (-500.0, -d)), 1.0, Pose2D.from_xyh(0, 0, angle))


def test_no_contact_when_clear():
    p = WhiskerParams()
    ws = solve_contact(Pose2D(), Circle(10.0, Pose2D.from_xyh(0.0, -50.0)), p)
    assert ws.contact_kind is ContactKind.NONE and ws.curvature == 0.0


@pytest.mark.parametrize("r,cx", [(10.0, 60.0), (30.0, 80.0), (5.0, 74.0)])
def test_solution_is_minimal(r, cx):
    """The returned curvature clears the object, any smaller one penetrates."""
    p = WhiskerParams()
    obj = Circle(r, Pose2D.from_xyh(cx, -r + 3.0))
    ws = solve_contact(Pose2D(), obj, p)
    s = np.linspace(0, p.shaft_length, p.arc_samples)
    clear = np.min(signed_distance(obj, arc_points(ws.curvature, s)))
    tighter = np.min(signed_distance(obj, arc_points(ws.curvature - 2e-8, s)))
    assert clear >= -1e-6
    assert tighter < clear
    assert tighter < 1e-6
    assert ws.curvature > 0
    assert ws.contact_kind in (ContactKind.TIP, ContactKind.TANGENTIAL)


def test_tip_contact_curvature_matches_closed_form():
    """Tip pressing on a rotated wall: kappa from the tip's offset."""
    p = WhiskerParams()
    ang = 1.3
    d = 20.0
    k = brentq(lambda kk: (1 - math.cos(kk * 75)) / kk - d, 1e-9, 0.02)
    tip = arc_point(k, 75.0)
    # wall through the deflected tip, tilted by the attack angle, solid below
    u = np.array([math.cos(ang), math.sin(ang)])
    wall = OpenPolyline((tuple(tip + 300 * u), tuple(tip - 300 * u)), 1.0)
    ws = solve_contact(Pose2D(), wall, p)
    assert ws.contact_kind is ContactKind.TIP
    assert ws.curvature == pytest.approx(k, abs=1e-7)


def test_hint_gives_same_answer():
    p = WhiskerParams()
    obj = Circle(20.0, Pose2D.from_xyh(55.0, -18.0))
    a = solve_contact(Pose2D(), obj, p)
    for h in (a.curvature * 0.5, a.curvature, a.curvature * 1.7, 0.019):
        b = solve_contact(Pose2D(), obj, p, hint=h)
        assert b.curvature == pytest.approx(a.curvature, abs=2e-9)


def test_unresolvable_contact():
    p = WhiskerParams()
    with pytest.raises(UnresolvableContactError):
        solve_contact(Pose2D(), Circle(30.0, Pose2D.from_xyh(20.0, 0.0)), p)


def test_rigid_invariance_of_contact():
    p = WhiskerParams()
    obj = Circle(15.0, Pose2D.from_xyh(50.0, -14.0))
    a = solve_contact(Pose2D(), obj, p)
    T = Pose2D.from_xyh(-30.0, 12.0, 2.2)
    moved = Circle(15.0, Pose2D(T.position + np.array([[math.cos(2.2), -math.sin(2.2)],
                                                        [math.sin(2.2), math.cos(2.2)]])
                                @ obj.pose.position, 0.0))
    b = solve_contact(T, moved, p)
    assert b.curvature == pytest.approx(a.curvature, abs=2e-9)


def test_base_pose_and_polyline():
    p = WhiskerParams()
    bp = base_pose(Pose2D.from_xyh(1, 2, 0.5), p)
    assert bp.heading == pytest.approx(0.5 + p.mount_angle)
    line = shaft_polyline(bp, 0.0, p, 5)
    assert np.allclose(line[-1], [1 + 75 * math.cos(bp.heading), 2 + 75 * math.sin(bp.heading)])
