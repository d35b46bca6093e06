"""Interpolating B-spline through key points, with one-step extrapolation.

Parameters follow the centripetal rule (cumulative square-root chord length,
normalized to [0, 1]); knots are clamped at the ends with not-a-knot interior
placement so the spline passes through every key point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SplineError(ValueError):
    pass


def centripetal_parameters(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    chord = np.sqrt(np.hypot(*np.diff(P, axis=0).T))
    if np.any(chord <= 0):
        raise SplineError("coincident key points")
    u = np.concatenate([[0.0], np.cumsum(chord)])
    return u / u[-1]


def not_a_knot_knots(u: np.ndarray, k: int) -> np.ndarray:
    n = len(u)
    if k % 2 == 1:
        inner = u[(k + 1) // 2: n - (k + 1) // 2]
    else:
        inner = 0.5 * (u[k // 2: n - k // 2 - 1] + u[k // 2 + 1: n - k // 2])
    return np.concatenate([np.full(k + 1, u[0]), inner, np.full(k + 1, u[-1])])


def _span(t: np.ndarray, k: int, n: int, x: float) -> int:
    """Knot span index for x, clamped to the first/last non-empty span."""
    i = int(np.searchsorted(t, x, side="right")) - 1
    return min(max(i, k), n - 1)


def _basis(t: np.ndarray, k: int, i: int, x: float) -> np.ndarray:
    """Nonzero basis values B_{i-k..i,k}(x) by the Cox-de Boor recursion.

    The span i is fixed by the caller, so for x outside [t_i, t_{i+1}) this
    evaluates the polynomial piece of that span (used for extrapolation).
    """
    N = np.zeros(k + 1)
    N[0] = 1.0
    left = np.zeros(k + 1)
    right = np.zeros(k + 1)
    for j in range(1, k + 1):
        left[j] = x - t[i + 1 - j]
        right[j] = t[i + j] - x
        saved = 0.0
        for r in range(j):
            tmp = N[r] / (right[r + 1] + left[j - r])
            N[r] = saved + right[r + 1] * tmp
            saved = left[j - r] * tmp
        N[j] = saved
    return N


@dataclass(frozen=True)
class SplinePredictor:
    """Fitted spline: knots t, control points c (n, 2), degree k, parameters u."""

    knots: np.ndarray
    coeffs: np.ndarray
    degree: int
    params: np.ndarray

    def __call__(self, x: float) -> np.ndarray:
        k, t, c = self.degree, self.knots, self.coeffs
        i = _span(t, k, len(c), float(x))
        return _basis(t, k, i, float(x)) @ c[i - k: i + 1]


def interpolate(points, degree: int = 3) -> SplinePredictor:
    """Interpolating spline through points (n >= degree + 1)."""
    P = np.asarray(points, dtype=float)
    n, k = len(P), int(degree)
    if k < 1 or n < k + 1:
        raise SplineError(f"need at least {k + 1} points for degree {k}")
    u = centripetal_parameters(P)
    t = not_a_knot_knots(u, k)
    A = np.zeros((n, n))
    for r, x in enumerate(u):
        i = _span(t, k, n, x)
        A[r, i - k: i + 1] = _basis(t, k, i, x)
    try:
        c = np.linalg.solve(A, P)
    except np.linalg.LinAlgError as exc:
        raise SplineError(f"collocation matrix singular: {exc}") from None
    return SplinePredictor(t, c, k, u)


def next_parameter(n: int) -> float:
    """Parameter of the point one key-point spacing past the end."""
    return 1.0 + 1.0 / (n - 1)


def extrapolate_next(sp: SplinePredictor, n: int) -> np.ndarray:
    return sp(next_parameter(n))
