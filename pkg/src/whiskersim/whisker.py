"""Quasi-static whisker shaft: arc shape, contact resolution and synthetic readings.

The shaft is a constant-curvature arc rooted at the base origin with its
initial tangent along base +X. Positive curvature bends it toward base +Y, so
objects are met on the -Y side (the shaft bends away from them).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .geometry import (ContourSpec, OpenPolyline, Pose2D, _packed, _sd_polyline, _sd_rounded,
                       to_local, to_world)

# penetration tolerance (mm) and bisection resolution (1/mm)
PENETRATION_TOL = 1e-6
KAPPA_TOL = 1e-9


class WhiskerError(ValueError):
    pass


class DegenerateContactError(WhiskerError):
    """Contact point too close to the root to define a curvature."""


class UnresolvableContactError(WhiskerError):
    """Even the maximum curvature penetrates the object."""


@dataclass(frozen=True)
class WhiskerParams:
    """Shaft and transducer constants.

    Args:
        shaft_length: L in mm.
        measurement_gain: g in uT*mm; reading is z0 - g*kappa.
        static_offset: z0, the rest reading in uT.
        curvature_max: largest curvature the shaft can take (1/mm).
        arc_samples: points used to test the shaft against an object.
        noise_std: additive Gaussian reading noise (uT).
        mount_angle: whisker axis relative to the sensor heading (rad).
    """

    shaft_length: float = 75.0
    measurement_gain: float = 2.0e5
    static_offset: float = -8300.0
    curvature_max: float = 0.02
    arc_samples: int = 200
    noise_std: float = 3.0
    mount_angle: float = math.pi / 2 - 1.1

    def __post_init__(self):
        if not self.shaft_length > 0:
            raise WhiskerError("shaft_length must be positive")
        if not 0 < self.curvature_max * self.shaft_length < math.pi:
            raise WhiskerError("curvature_max * shaft_length must lie in (0, pi)")
        if self.arc_samples < 16:
            raise WhiskerError("arc_samples must be >= 16")
        if self.noise_std < 0:
            raise WhiskerError("noise_std must be >= 0")
        if not self.measurement_gain > 0:
            raise WhiskerError("measurement_gain must be positive")

    @property
    def z_saturation(self) -> float:
        return self.static_offset - self.measurement_gain * self.curvature_max

    @property
    def z_range(self) -> tuple[float, float]:
        """Valid reading interval (low, high) for noiseless tip contact."""
        return self.z_saturation, self.static_offset


class ContactKind(str, enum.Enum):
    NONE = "none"
    TIP = "tip"
    TANGENTIAL = "tangential"


@dataclass(frozen=True)
class WhiskerState:
    curvature: float
    contact_s: Optional[float]
    contact_kind: ContactKind
    contact_point_world: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Measurement:
    z: float


def arc_point(kappa: float, s: float) -> np.ndarray:
    """Base-frame point at arc length s on a shaft of curvature kappa."""
    ks = kappa * s
    if abs(ks) < 1e-6:
        # series keeps full precision near the straight shaft
        return np.array([s - kappa * kappa * s ** 3 / 6.0,
                         0.5 * kappa * s * s - kappa ** 3 * s ** 4 / 24.0])
    return np.array([math.sin(ks) / kappa, (1.0 - math.cos(ks)) / kappa])


def arc_points(kappa: float, s: np.ndarray) -> np.ndarray:
    """Vectorized :func:`arc_point` over an array of arc lengths."""
    s = np.asarray(s, dtype=float)
    ks = kappa * s
    if abs(kappa) * float(np.max(np.abs(s), initial=0.0)) < 1e-6:
        return np.stack([s - kappa * kappa * s ** 3 / 6.0,
                         0.5 * kappa * s * s - kappa ** 3 * s ** 4 / 24.0], axis=-1)
    return np.stack([np.sin(ks) / kappa, (1.0 - np.cos(ks)) / kappa], axis=-1)


def curvature_from_contact(c) -> float:
    """Curvature of the root arc passing through base-frame point c."""
    x, y = float(c[0]), float(c[1])
    r2 = x * x + y * y
    if r2 < 1e-12:
        raise DegenerateContactError("contact point coincides with the root")
    return 2.0 * y / r2


def curvature_from_measurement(z: float, params: WhiskerParams) -> float:
    return (params.static_offset - z) / params.measurement_gain


def measurement_from_curvature(kappa: float, params: WhiskerParams,
                               rng: Optional[np.random.Generator] = None,
                               noise_std: Optional[float] = None) -> Measurement:
    """Affine reading z = z0 - g*kappa, plus noise when an rng is given."""
    z = params.static_offset - params.measurement_gain * kappa
    sigma = params.noise_std if noise_std is None else noise_std
    if rng is not None and sigma > 0:
        z += sigma * float(rng.standard_normal())
    return Measurement(z)


@dataclass(frozen=True)
class ExactMeasurementSurface:
    """Noiseless reading as a function of a base-frame contact point.

    Its level sets are exactly the deflected shaft shapes, which makes it the
    ground-truth counterpart of a fitted calibration polynomial.
    """

    params: WhiskerParams

    @property
    def z_range(self) -> tuple[float, float]:
        return self.params.z_range

    def __call__(self, p) -> float:
        return measurement_from_curvature(curvature_from_contact(p), self.params).z


def base_pose(sensor_pose: Pose2D, params: WhiskerParams) -> Pose2D:
    """Whisker base frame for a sensor pose (axis rotated by the mount angle)."""
    return Pose2D(sensor_pose.position, sensor_pose.heading + params.mount_angle)


def _shaft_world(base: Pose2D, kappa: float, s: np.ndarray) -> np.ndarray:
    return to_world(base, arc_points(kappa, s))


@numba.njit(cache=True)
def _shaft_local(kappa, s, ox, oy, ang):
    """Shaft samples mapped into the contour frame."""
    c = math.cos(ang)
    sn = math.sin(ang)
    q = np.empty((s.shape[0], 2))
    for i in range(s.shape[0]):
        ks = kappa * s[i]
        if abs(ks) < 1e-6:
            x = s[i] - kappa * kappa * s[i] ** 3 / 6.0
            y = 0.5 * kappa * s[i] * s[i] - kappa ** 3 * s[i] ** 4 / 24.0
        else:
            x = math.sin(ks) / kappa
            y = (1.0 - math.cos(ks)) / kappa
        q[i, 0] = ox + c * x - sn * y
        q[i, 1] = oy + sn * x + c * y
    return q


@numba.njit(cache=True)
def _clearance_rounded(verts, r, kappa, s, ox, oy, ang):
    q = _shaft_local(kappa, s, ox, oy, ang)
    out = np.empty(s.shape[0])
    _sd_rounded(verts, r, q, out)
    i = np.argmin(out)
    return out[i], i


@numba.njit(cache=True)
def _clearance_polyline(segs, arcs, kappa, s, ox, oy, ang):
    q = _shaft_local(kappa, s, ox, oy, ang)
    out = np.empty(s.shape[0])
    _sd_polyline(segs, arcs, q, out)
    i = np.argmin(out)
    return out[i], i


def solve_contact(base: Pose2D, contour: ContourSpec, params: WhiskerParams,
                  hint: Optional[float] = None) -> WhiskerState:
    """Smallest curvature that keeps the sampled shaft out of the solid.

    Penetration is assumed to shrink monotonically as the shaft bends, so the
    answer is found by bisection on the curvature.

    Args:
        base: whisker base pose in the world.
        contour: object to resolve against.
        params: shaft constants.
        hint: previous curvature; used to bracket the search faster.

    Raises:
        UnresolvableContactError: the shaft penetrates even at curvature_max.
    """
    L = params.shaft_length
    s = np.linspace(0.0, L, params.arc_samples)
    o = to_local(contour.pose, base.position)
    ang = base.heading - contour.pose.heading
    packed = _packed(contour)
    if isinstance(contour, OpenPolyline):
        kernel, a, b = _clearance_polyline, packed[0], packed[1]
    else:
        kernel, a, b = _clearance_rounded, packed[0], float(packed[1])
    ox, oy = float(o[0]), float(o[1])

    def clearance(k):
        d, i = kernel(a, b, float(k), s, ox, oy, ang)
        return float(d), int(i)

    def free(k):
        return clearance(k)[0] >= -PENETRATION_TOL

    d0, i0 = clearance(0.0)
    if d0 > PENETRATION_TOL:
        return WhiskerState(0.0, None, ContactKind.NONE)
    kmax = params.curvature_max
    if d0 >= -PENETRATION_TOL:
        lo = hi = 0.0
    else:
        lo, hi = 0.0, kmax
        if hint is not None and 0.0 < hint < kmax:
            # expand a bracket around the previous solution
            step = 1e-6
            if free(hint):
                hi = hint
                while True:
                    t = max(hint - step, 0.0)
                    if t == 0.0 or not free(t):
                        lo = t
                        break
                    hi = t
                    step *= 4.0
            else:
                lo = hint
                while True:
                    t = min(hint + step, kmax)
                    if t == kmax or free(t):
                        hi = t
                        break
                    lo = t
                    step *= 4.0
        if not free(hi):
            raise UnresolvableContactError(
                "shaft penetrates the object even at maximum curvature")
        while hi - lo > KAPPA_TOL:
            mid = 0.5 * (lo + hi)
            if free(mid):
                hi = mid
            else:
                lo = mid
    d, i = clearance(hi)
    kind = ContactKind.TIP if i == len(s) - 1 else ContactKind.TANGENTIAL
    cs = float(s[i])
    return WhiskerState(hi, cs, kind, _shaft_world(base, hi, np.array([cs]))[0])


def shaft_polyline(base: Pose2D, kappa: float, params: WhiskerParams, n: int = 60) -> np.ndarray:
    return _shaft_world(base, kappa, np.linspace(0.0, params.shaft_length, n))
