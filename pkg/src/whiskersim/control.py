"""Active contour following: key points, spline heading, PID radial speed.

Sensor frame conventions: +x is the approach axis (the sensor heading, pointing
into the surface) and +y is the tangential travel direction, 90 degrees
counter-clockwise from it. With the object on the right of travel the
sensor circles closed objects clockwise.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose2D, rotation, to_world
from .kalman import (FilterState, NoiseWindow, estimate_R, init_filter, predict, update)
from .localization import CharacterizedModel, LocalizationError, tip_from_measurement
from .spline import SplinePredictor, extrapolate_next, interpolate
from .whisker import WhiskerParams, base_pose


class ControlError(ValueError):
    pass


@dataclass(frozen=True)
class ControlConfig:
    """Controller settings.

    Args:
        collision_threshold: deflection (uT above static) that marks contact.
        target_deflection: reading the PID holds in contact (uT).
        total_velocity: fixed speed |(v_x, v_y)| in mm/s.
        keypoint_count: spline key points n.
        keypoint_stride: iterations d between key point pushes.
        keypoint_min_spacing: mm between consecutive key points.
        spline_degree: B-spline degree k.
        kp, ki, kd: PID gains on the deflection error (mm/s per uT).
        integral_clamp: bound on the error integral; defaults to total_velocity/ki.
        max_turn_rate: heading slew limit (rad/s), applied by the simulator.
        filter_window: raw estimates used for the measurement variance.
        release_fraction: contact counts as lost below this fraction of the
            collision threshold.
        pivot_on_tip: rotate about the filtered tip rather than the sensor.
    """

    collision_threshold: float = 300.0
    target_deflection: float = -8760.0
    total_velocity: float = 10.0
    keypoint_count: int = 5
    keypoint_stride: int = 10
    keypoint_min_spacing: float = 2.0
    spline_degree: int = 3
    kp: float = 0.02
    ki: float = 0.002
    kd: float = 0.001
    integral_clamp: Optional[float] = None
    max_turn_rate: float = 1.0
    filter_window: int = 10
    prior_variance: float = 10.0
    process_variance: float = 1e-5
    variance_floor: float = 1e-6
    release_fraction: float = 0.5
    pivot_on_tip: bool = True

    def __post_init__(self):
        if self.keypoint_count < self.spline_degree + 1:
            raise ControlError("keypoint_count must be at least spline_degree + 1")
        if not self.total_velocity > 0:
            raise ControlError("total_velocity must be positive")
        if not self.collision_threshold > 0:
            raise ControlError("collision_threshold must be positive")
        if not 0 < self.release_fraction <= 1:
            raise ControlError("release_fraction must lie in (0, 1]")
        if self.keypoint_stride < 1 or self.filter_window < 2:
            raise ControlError("keypoint_stride >= 1 and filter_window >= 2 required")
        if not self.max_turn_rate > 0:
            raise ControlError("max_turn_rate must be positive")

    @property
    def clamp(self) -> float:
        if self.integral_clamp is not None:
            return self.integral_clamp
        return self.total_velocity / self.ki if self.ki > 0 else math.inf


@dataclass(frozen=True)
class ControlCommand:
    """Per-iteration command.

    target_orientation is the commanded sensor heading (world, rad); pivot is
    the sensor-frame point the simulator rotates about.
    """

    target_orientation: float
    v_x: float
    v_y: float
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(2))


class KeyPointDeque:
    """Ordered world-frame key points with stride and spacing gates."""

    def __init__(self, capacity: int = 5, stride: int = 10, min_spacing: float = 2.0):
        self.points = deque(maxlen=capacity)
        self.capacity = capacity
        self.stride = stride
        self.min_spacing = min_spacing
        self.last_push_iter: Optional[int] = None

    @property
    def full(self) -> bool:
        return len(self.points) == self.capacity

    def __len__(self):
        return len(self.points)

    def array(self) -> np.ndarray:
        return np.array(self.points)


def detect_collision(z: float, static_z: float, cfg: ControlConfig) -> bool:
    return abs(z - static_z) >= cfg.collision_threshold


def maybe_push_keypoint(dq: KeyPointDeque, p, it: int, cfg: Optional[ControlConfig] = None) -> bool:
    """Push p when both the iteration stride and the spacing gate pass."""
    stride = dq.stride if cfg is None else cfg.keypoint_stride
    spacing = dq.min_spacing if cfg is None else cfg.keypoint_min_spacing
    p = np.array(p, dtype=float).reshape(2)
    if dq.last_push_iter is not None and it - dq.last_push_iter < stride:
        return False
    if dq.points and math.hypot(*(p - dq.points[-1])) < spacing:
        return False
    dq.points.append(p)
    dq.last_push_iter = it
    return True


def fit_spline(dq: KeyPointDeque, cfg: ControlConfig) -> SplinePredictor:
    if not dq.full:
        raise ControlError("key point deque is not full")
    return interpolate(dq.array(), cfg.spline_degree)


def target_orientation(p_cur, p_next, previous: Optional[float] = None) -> float:
    """Direction angle from p_cur to p_next; previous value if they coincide."""
    d = np.asarray(p_next, dtype=float) - np.asarray(p_cur, dtype=float)
    if not np.any(d):
        if previous is None:
            raise ControlError("coincident points and no previous orientation")
        return previous
    return math.atan2(d[1], d[0])


class PIDController:
    """PID with a clamped error integral and a clamped output.

    Args:
        kp, ki, kd: gains.
        integral_clamp: |integral of error| bound.
        output_limit: |output| bound.
    """

    def __init__(self, kp, ki, kd, integral_clamp=math.inf, output_limit=math.inf):
        self.kp = kp
        self.ki = ki
        self.kd = kd
        self.integral_clamp = integral_clamp
        self.output_limit = output_limit
        self.reset()

    def reset(self):
        self.integral = 0.0
        self.prev_error = None

    def update(self, error: float, dt: float) -> float:
        if not dt > 0:
            raise ControlError("dt must be positive")
        lim = self.integral_clamp
        self.integral = min(max(self.integral + error * dt, -lim), lim)
        deriv = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        self.prev_error = error
        out = self.kp * error + self.ki * self.integral + self.kd * deriv
        return min(max(out, -self.output_limit), self.output_limit)


def make_pid(cfg: ControlConfig) -> PIDController:
    return PIDController(cfg.kp, cfg.ki, cfg.kd, cfg.clamp, cfg.total_velocity)


def deflection_error(z: float, static_z: float, cfg: ControlConfig) -> float:
    """Positive when under-deflected (approach), negative when over-deflected."""
    return abs(cfg.target_deflection - static_z) - abs(z - static_z)


def pid_update(ctrl: PIDController, z: float, cfg: ControlConfig, dt: float,
               static_z: float) -> float:
    """Radial velocity v_x from the deflection error."""
    return ctrl.update(deflection_error(z, static_z, cfg), dt)


def constrain_tangential(v_x: float, cfg: ControlConfig) -> float:
    V = cfg.total_velocity
    if abs(v_x) > V + 1e-12:
        raise ControlError("|v_x| exceeds total velocity")
    return math.sqrt(max(V * V - v_x * v_x, 0.0))


# ---------------------------------------------------------------------------


@dataclass
class StepInfo:
    """What one control iteration saw and did (for logging)."""

    contact: bool = False
    holding: bool = False
    lost: bool = False
    raw_tip: Optional[np.ndarray] = None       # base frame
    raw_tip_world: Optional[np.ndarray] = None
    filtered_world: Optional[np.ndarray] = None
    prior: Optional[tuple] = None              # (x, P) before update
    posterior: Optional[FilterState] = None
    R: Optional[np.ndarray] = None
    keypoint: bool = False
    prediction: Optional[np.ndarray] = None


class ControllerState:
    """Everything the loop carries between iterations.

    Args:
        cm: characterized model used for localization.
        params: whisker constants (for the static reading and mount).
        cfg: controller settings.
    """

    def __init__(self, cm: CharacterizedModel, params: WhiskerParams,
                 cfg: ControlConfig = ControlConfig()):
        self.cm = cm
        self.params = params
        self.cfg = cfg
        self.static_z = params.static_offset
        self.contacted = False
        self.holding = False
        self.filter: Optional[FilterState] = None
        self.window = NoiseWindow(cfg.filter_window, cfg.variance_floor)
        self.keypoints = KeyPointDeque(cfg.keypoint_count, cfg.keypoint_stride,
                                       cfg.keypoint_min_spacing)
        self.pid = make_pid(cfg)
        self.theta: Optional[float] = None
        self.iteration = 0
        self.losses = 0

    def reset_filter(self):
        self.filter = None
        self.window.clear()


def control_step(z: float, pose: Pose2D, st: ControllerState, dt: float):
    """One iteration of the perception-action loop.

    Args:
        z: current reading (uT).
        pose: current sensor pose.
        st: loop state, updated in place.
        dt: iteration period (s).

    Returns:
        (ControlCommand, StepInfo)
    """
    cfg = st.cfg
    it = st.iteration
    st.iteration += 1
    if st.theta is None:
        st.theta = pose.heading
    info = StepInfo()
    V = cfg.total_velocity

    if not st.contacted:
        if not detect_collision(z, st.static_z, cfg):
            return ControlCommand(st.theta, V, 0.0), info
        st.contacted = True

    info.contact = True
    defl = abs(z - st.static_z)
    tip = None
    if defl >= cfg.release_fraction * cfg.collision_threshold:
        try:
            tip = tip_from_measurement(st.cm, z)
        except LocalizationError:
            tip = None
    if tip is None:
        if st.holding:
            st.losses += 1
            info.lost = True
        st.holding = False
        st.reset_filter()
    else:
        st.holding = True
        info.holding = True
        bp = base_pose(pose, st.params)
        info.raw_tip = tip.position
        info.raw_tip_world = to_world(bp, tip.position)
        if st.filter is None:
            st.filter = init_filter(tip, cfg.prior_variance, cfg.process_variance)
        st.window.push(tip)
        if st.window.full:
            R = estimate_R(st.window)
            prior = predict(st.filter)
            st.filter = update(prior, tip, R)
            info.R = R
            info.prior = (prior.x, prior.P)
            info.posterior = st.filter
            p_cur = to_world(bp, st.filter.x)
            info.filtered_world = p_cur
            if maybe_push_keypoint(st.keypoints, p_cur, it, cfg):
                info.keypoint = True
                if st.keypoints.full:
                    sp = fit_spline(st.keypoints, cfg)
                    p_next = extrapolate_next(sp, cfg.keypoint_count)
                    info.prediction = p_next
                    surf = target_orientation(p_cur, p_next, None if st.theta is None
                                              else st.theta + math.pi / 2)
                    # the approach axis sits a right angle clockwise of travel
                    st.theta = surf - math.pi / 2

    v_x = pid_update(st.pid, z, cfg, dt, st.static_z)
    v_y = constrain_tangential(v_x, cfg) if len(st.keypoints) else 0.0
    pivot = np.zeros(2)
    if cfg.pivot_on_tip and st.filter is not None:
        pivot = rotation(st.params.mount_angle) @ st.filter.x
    return ControlCommand(st.theta, v_x, v_y, pivot), info
