"""Constant-state Kalman filter over the 2D tip position.

Each axis is filtered independently with a scalar filter; the measurement
variance comes from the spread of the most recent raw tip estimates.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

PRIOR_VARIANCE = 10.0
PROCESS_VARIANCE = 1e-5
VARIANCE_FLOOR = 1e-6


class FilterError(ValueError):
    pass


class WindowNotFullError(FilterError):
    """The noise window needs more samples before R can be estimated."""


@dataclass(frozen=True)
class FilterState:
    """Posterior mean and per-axis variances.

    Args:
        x: tip position estimate (mm, base frame).
        P: per-axis variance (mm^2).
        Q: per-axis process variance.
        initialized: set by init_filter.
        predicted: a predict step happened since the last update.
        K: per-axis gain of the last update.
    """

    x: np.ndarray = field(default_factory=lambda: np.zeros(2))
    P: np.ndarray = field(default_factory=lambda: np.full(2, PRIOR_VARIANCE))
    Q: np.ndarray = field(default_factory=lambda: np.full(2, PROCESS_VARIANCE))
    initialized: bool = False
    predicted: bool = False
    K: np.ndarray = field(default_factory=lambda: np.zeros(2))


def init_filter(first_tip, prior_variance: float = PRIOR_VARIANCE,
                process_variance: float = PROCESS_VARIANCE) -> FilterState:
    """Start a filter at the first tip estimate (a TipEstimate or 2-vector)."""
    pos = getattr(first_tip, "position", first_tip)
    return FilterState(np.array(pos, dtype=float).reshape(2),
                       np.full(2, float(prior_variance)),
                       np.full(2, float(process_variance)), True, False)


def predict(state: FilterState) -> FilterState:
    """Constant-state prediction: mean kept, variance grows by Q."""
    if not state.initialized:
        raise FilterError("predict on an uninitialized filter")
    return replace(state, P=state.P + state.Q, predicted=True)


def update(state: FilterState, z, R) -> FilterState:
    """Per-axis correction with measurement z and variance R."""
    if not state.initialized:
        raise FilterError("update on an uninitialized filter")
    if not state.predicted:
        raise FilterError("update requires a predict since the last update")
    R = np.broadcast_to(np.asarray(R, dtype=float), (2,))
    if np.any(~(R > 0)):
        raise FilterError("measurement variance must be positive")
    z = np.asarray(getattr(z, "position", z), dtype=float).reshape(2)
    P = state.P
    K = P / (P + R)
    # R = inf gives K = 0 and leaves the prior untouched
    x = state.x + K * (z - state.x)
    return replace(state, x=x, P=(1.0 - K) * P, predicted=False, K=K)


class NoiseWindow:
    """Ring buffer of the last N raw tip estimates.

    Args:
        capacity: window length N.
        floor: lower bound on the per-axis variance.
    """

    def __init__(self, capacity: int = 10, floor: float = VARIANCE_FLOOR):
        if capacity < 2:
            raise FilterError("noise window needs at least 2 entries")
        self.capacity = capacity
        self.floor = floor
        self.buf = deque(maxlen=capacity)

    def push(self, tip):
        self.buf.append(np.array(getattr(tip, "position", tip), dtype=float).reshape(2))

    def clear(self):
        self.buf.clear()

    @property
    def full(self) -> bool:
        return len(self.buf) == self.capacity

    def __len__(self):
        return len(self.buf)


def estimate_R(window: NoiseWindow) -> np.ndarray:
    """Unbiased per-axis sample variance of the window, floored."""
    if not window.full:
        raise WindowNotFullError(f"window has {len(window)}/{window.capacity} samples")
    var = np.var(np.array(window.buf), axis=0, ddof=1)
    return np.maximum(var, window.floor)
