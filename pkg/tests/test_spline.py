import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import make_interp_spline

from whiskersim.spline import (SplineError, centripetal_parameters, extrapolate_next,
                               interpolate, next_parameter)


def random_points(rng, n):
    # roughly ordered points, like consecutive contacts along a contour
    t = np.cumsum(rng.uniform(1.0, 4.0, n))
    return np.column_stack([t, 5.0 * np.sin(t / 7.0) + rng.normal(scale=0.3, size=n)])


@pytest.mark.parametrize("n,k", [(4, 3), (5, 3), (6, 3), (7, 5), (6, 2), (5, 4), (3, 1)])
def test_matches_reference_implementation(n, k):
    rng = np.random.default_rng(n * 10 + k)
    P = random_points(rng, n)
    sp = interpolate(P, k)
    ref = make_interp_spline(centripetal_parameters(P), P, k=k)
    for u in np.r_[np.linspace(0, 1, 23), next_parameter(n)]:
        assert np.allclose(sp(u), ref(u, extrapolate=True), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(4, 9))
def test_interpolates_key_points(seed, n):
    P = random_points(np.random.default_rng(seed), n)
    sp = interpolate(P, 3)
    resid = [np.hypot(*(sp(u) - p)) for u, p in zip(sp.params, P)]
    assert max(resid) < 1e-9


@pytest.mark.parametrize("n,k", [(4, 3), (5, 3), (8, 3), (10, 5), (5, 2)])
def test_collinear_extrapolation_exact(n, k):
    d = np.array([0.6, -0.8])
    P = np.array([3.0, 7.0]) + np.arange(n)[:, None] * 2.5 * d
    nxt = extrapolate_next(interpolate(P, k), n)
    assert np.hypot(*(nxt - (P[-1] + 2.5 * d))) < 1e-6


def test_uneven_collinear_spacing_stays_on_line():
    s = np.array([0.0, 1.0, 4.0, 5.0, 9.0])
    P = np.column_stack([s, 2 * s + 1])
    nxt = extrapolate_next(interpolate(P, 3), 5)
    assert nxt[1] == pytest.approx(2 * nxt[0] + 1, abs=1e-9)
    assert nxt[0] > 9.0


@pytest.mark.parametrize("n", range(2, 12))
def test_next_parameter(n):
    assert next_parameter(n) == pytest.approx(1.0 + 1.0 / (n - 1), abs=0)


def test_centripetal_parameters():
    P = np.array([[0, 0], [1, 0], [1, 4]])
    # chords 1 and 4 -> square roots 1 and 2
    assert np.allclose(centripetal_parameters(P), [0, 1 / 3, 1])


def test_errors():
    with pytest.raises(SplineError):
        interpolate(np.zeros((3, 2)), 3)
    with pytest.raises(SplineError):
        interpolate([[0, 0], [1, 1], [1, 1], [2, 2]], 3)
