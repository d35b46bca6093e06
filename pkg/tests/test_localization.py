import json
import math
import time

import numpy as np
import pytest

from whiskersim.calibration import eval_poly, grad_poly
from whiskersim.localization import (CharacterizedModel, GradientVanishedError,
                                     LeftDomainError, NotConvergedError, OutOfRangeError,
                                     TraceConfig, build_characterized_model,
                                     tip_from_measurement, trace_path, trace_tip)
from whiskersim.whisker import (ExactMeasurementSurface, WhiskerParams, arc_point,
                                curvature_from_measurement, measurement_from_curvature)


def oracle_tip(z, p):
    return arc_point(curvature_from_measurement(z, p), p.shaft_length)


def test_exact_surface_trace_matches_arc(quiet_params):
    f = ExactMeasurementSurface(quiet_params)
    for z in np.linspace(*quiet_params.z_range, 20):
        tip = trace_tip(f, z, 75.0)
        assert np.hypot(*(tip.position - oracle_tip(z, quiet_params))) < 0.05
        assert tip.arc_length_traced == pytest.approx(75.0, abs=1e-9)


def _settled(path, start):
    s = np.r_[0.0, np.cumsum(np.hypot(*np.diff(path, axis=0).T))]
    return path[s >= start]


def test_trace_adheres_to_level_set(poly, quiet_params):
    # the trace starts at the root, where the fitted surface is an
    # extrapolation, and relaxes onto the level set; adherence is checked
    # once it has settled
    lo, hi = quiet_params.z_range
    for z in np.linspace(lo, hi - 1e-9, 20):
        path, _ = trace_path(poly, z, 75.0)
        tail = _settled(path, 37.5)
        assert np.max(np.abs(eval_poly(poly, tail) - z)) < 5.0
        mid = _settled(path, 30.0)
        offset = np.abs(eval_poly(poly, mid) - z) / np.hypot(*grad_poly(poly, mid).T)
        assert offset.max() < 0.06


def test_exact_trace_stays_on_arc(quiet_params):
    f = ExactMeasurementSurface(quiet_params)
    for z in np.linspace(quiet_params.z_range[0], -8300.0 - 50.0, 10):
        k = curvature_from_measurement(z, quiet_params)
        P = _settled(trace_path(f, z, 75.0)[0], 30.0)
        assert np.max(np.abs(np.hypot(P[:, 0], P[:, 1] - 1 / k) - 1 / k)) < 0.02


def test_trace_path_is_simple_and_unit_step(poly):
    path, _ = trace_path(poly, -9200.0, 75.0)
    steps = np.hypot(*np.diff(path, axis=0).T)
    assert np.allclose(steps, 1e-3, rtol=1e-9)
    # heading never reverses: consecutive steps point forward
    d = np.diff(path, axis=0)
    assert np.all(np.einsum("ij,ij->i", d[1:], d[:-1]) > 0)


def test_poly_trace_end_to_end(poly, quiet_params):
    # useful range: from the contact threshold to the maximum bend
    lo, hi = quiet_params.z_range
    for z in np.linspace(lo, hi - 300.0, 12):
        tip = trace_tip(poly, z, 75.0)
        assert np.hypot(*(tip.position - oracle_tip(z, quiet_params))) < 0.2


def test_tip_moves_monotonically_with_reading(poly):
    ys = [trace_tip(poly, z, 75.0).position[1] for z in np.linspace(-12200, -8400, 15)]
    assert np.all(np.diff(ys) < 0)


def test_trace_errors(poly, quiet_params):
    with pytest.raises(NotConvergedError):
        trace_tip(poly, -9000.0, 75.0, TraceConfig(max_steps=100))
    with pytest.raises(LeftDomainError):
        trace_tip(poly, -9000.0, 200.0)
    flat = ExactMeasurementSurface(WhiskerParams(measurement_gain=1e-9))
    with pytest.raises(GradientVanishedError):
        trace_tip(flat, -8300.0 - 1e-12, 75.0, TraceConfig(root=(30.0, 10.0)))


def test_characterized_fit_quality(cm):
    assert all(r.r_squared > 0.9999 for r in cm.reports)
    assert cm.anchors.shape == (20, 3)


def test_characterized_matches_fresh_trace(cm, poly):
    # readings halfway between the anchors are not in the fit
    z = cm.anchors[:, 0]
    for zm in 0.5 * (z[1:] + z[:-1]):
        est = tip_from_measurement(cm, zm).position
        assert np.hypot(*(est - trace_tip(poly, zm, 75.0).position)) < 0.1


def test_characterized_speed(cm):
    zs = np.linspace(-12000, -8400, 1000)
    tip_from_measurement(cm, zs[0])
    t0 = time.perf_counter()
    for z in zs:
        tip_from_measurement(cm, float(z))
    assert time.perf_counter() - t0 < 0.01


def test_out_of_range(cm):
    with pytest.raises(OutOfRangeError):
        tip_from_measurement(cm, -8000.0)
    with pytest.raises(OutOfRangeError):
        tip_from_measurement(cm, -13000.0)
    tip_from_measurement(cm, cm.z_range[1])


def test_characterized_serialization(cm):
    back = CharacterizedModel.from_dict(json.loads(json.dumps(cm.to_dict())))
    for z in (-8300.0, -9000.0, -12300.0):
        assert np.array_equal(tip_from_measurement(back, z).position,
                              tip_from_measurement(cm, z).position)


def test_exact_characterized_model(quiet_params):
    f = ExactMeasurementSurface(quiet_params)
    cm = build_characterized_model(f, 75.0)
    for k in np.linspace(0.0, 0.02, 13):
        z = measurement_from_curvature(k, quiet_params).z
        est = tip_from_measurement(cm, z).position
        assert np.hypot(*(est - arc_point(k, 75.0))) < 0.05


def test_reported_worst_error(poly):
    path, worst = trace_path(poly, -9300.0, 75.0)
    assert worst == pytest.approx(np.max(np.abs(eval_poly(poly, _settled(path, 37.5)[:-1])
                                                + 9300.0)), rel=1e-2)
    assert worst < 5.0
