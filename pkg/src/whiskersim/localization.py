"""Tip localization by tracing a level set of the reading surface.

Starting at the shaft root, the tracer walks the curve f(x, y) = z_c in
fixed-length steps. Each step blends the unit tangent of the level set with a
Gauss-Newton pull back onto it, so the trace follows the deflected shaft
shape; the point reached after one shaft length is the tip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numba
import numpy as np

from .calibration import MODEL_FORMAT, MODEL_VERSION, FitReport, PolyModel, _check_header
from .whisker import ExactMeasurementSurface

OK, GRADIENT_VANISHED, LEFT_DOMAIN, NOT_CONVERGED = 0, 1, 2, 3
GRAD_EPS = 1e-9  # uT/mm


class LocalizationError(ValueError):
    pass


class GradientVanishedError(LocalizationError):
    pass


class LeftDomainError(LocalizationError):
    pass


class NotConvergedError(LocalizationError):
    pass


class OutOfRangeError(LocalizationError):
    """Reading outside the characterized range (treated as contact lost)."""


@dataclass(frozen=True)
class TraceConfig:
    """Tracer settings.

    Args:
        step_size: fixed step length in mm.
        relaxation_length: distance (mm) over which an offset from the level
            set is pulled back; smaller values hug the level set harder.
        max_steps: step budget; defaults to ceil(1.5 * L / step_size).
        root: start point in the base frame.
    """

    step_size: float = 1e-3
    relaxation_length: float = 4.75
    max_steps: Optional[int] = None
    root: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.step_size > 0:
            raise LocalizationError("step_size must be positive")
        if not self.relaxation_length > 0:
            raise LocalizationError("relaxation_length must be positive")

    def steps_for(self, L: float) -> int:
        if self.max_steps is not None:
            return int(self.max_steps)
        return int(math.ceil(1.5 * L / self.step_size))


@dataclass(frozen=True)
class TipEstimate:
    position: np.ndarray
    arc_length_traced: float
    converged: bool = True


Surface = Union[PolyModel, ExactMeasurementSurface]


@numba.njit(cache=True)
def _field(kind, coef, sc, x, y):
    """Value and gradient of the reading surface at (x, y)."""
    if kind == 0:
        # exact model: coef = [[z0, g]]; z = z0 - g * 2y / r^2
        z0 = coef[0, 0]
        g = coef[0, 1]
        r2 = x * x + y * y
        if r2 < 1e-24:
            return z0, 0.0, 0.0, True
        r4 = r2 * r2
        k = 2.0 * y / r2
        dkx = -4.0 * x * y / r4
        dky = 2.0 * (x * x - y * y) / r4
        return z0 - g * k, -g * dkx, -g * dky, False
    cx, hx, cy, hy = sc[0], sc[1], sc[2], sc[3]
    n = coef.shape[0]
    u = (x - cx) / hx
    v = (y - cy) / hy
    up = np.ones(n)
    vp = np.ones(n)
    for i in range(1, n):
        up[i] = up[i - 1] * u
        vp[i] = vp[i - 1] * v
    f = 0.0
    fu = 0.0
    fv = 0.0
    for i in range(n):
        for j in range(n - i):
            c = coef[i, j]
            f += c * up[i] * vp[j]
            if i > 0:
                fu += c * i * up[i - 1] * vp[j]
            if j > 0:
                fv += c * j * up[i] * vp[j - 1]
    return f, fu / hx, fv / hy, False


@numba.njit(cache=True)
def _trace(kind, coef, sc, dom, zc, L, h, relax, max_steps, x0, y0, out):
    """Walk the level set f = zc from (x0, y0) for arc length L.

    Writes visited points into `out` when it has room for them. Returns
    (x, y, traced length, steps, status, worst level-set error over the
    second half of the trace, after the start transient has settled).
    """
    x = x0
    y = y0
    px = 1.0
    py = 0.0
    n_full = int(math.floor(L / h + 1e-9))
    tail = L - n_full * h
    if tail < 1e-12:
        tail = 0.0
    total = n_full + (1 if tail > 0.0 else 0)
    record = out.shape[0] > total
    if record:
        out[0, 0] = x
        out[0, 1] = y
    worst = 0.0
    n = 0
    while n < total:
        if n >= max_steps:
            return x, y, n * h, n, 3, worst
        f, gx, gy, singular = _field(kind, coef, sc, x, y)
        if 2.0 * n * h >= L and abs(f - zc) > worst:
            worst = abs(f - zc)
        gn2 = gx * gx + gy * gy
        if singular:
            tx = px
            ty = py
            cxx = 0.0
            cyy = 0.0
        else:
            if gn2 < GRAD_EPS * GRAD_EPS:
                return x, y, n * h, n, 1, worst
            gn = math.sqrt(gn2)
            tx = -gy / gn
            ty = gx / gn
            if tx * px + ty * py < 0.0:
                tx = -tx
                ty = -ty
            cxx = -(f - zc) * gx / gn2
            cyy = -(f - zc) * gy / gn2
        dx = tx + cxx / relax
        dy = ty + cyy / relax
        dn = math.sqrt(dx * dx + dy * dy)
        dx /= dn
        dy /= dn
        step = h if n < n_full else tail
        x += step * dx
        y += step * dy
        px = dx
        py = dy
        n += 1
        if kind == 1 and (x < dom[0] or x > dom[1] or y < dom[2] or y > dom[3]):
            return x, y, n * h, n, 2, worst
        if record:
            out[n, 0] = x
            out[n, 1] = y
    return x, y, L, n, 0, worst


def _surface_args(surface: Surface):
    if isinstance(surface, ExactMeasurementSurface):
        p = surface.params
        return 0, np.array([[p.static_offset, p.measurement_gain]]), np.zeros(4), np.zeros(4)
    if isinstance(surface, PolyModel):
        return 1, surface.coeff_matrix, surface.scaling, np.array(surface.domain)
    raise TypeError(f"unsupported surface {type(surface).__name__}")


_STATUS_ERRORS = {
    GRADIENT_VANISHED: GradientVanishedError("level-set gradient vanished"),
    LEFT_DOMAIN: LeftDomainError("trace left the polynomial domain"),
    NOT_CONVERGED: NotConvergedError("step budget exhausted before reaching L"),
}


def _run(surface, z_c, L, cfg, out):
    kind, coef, sc, dom = _surface_args(surface)
    x, y, s, n, status, worst = _trace(kind, coef, sc, dom, float(z_c), float(L),
                                       cfg.step_size, cfg.relaxation_length,
                                       cfg.steps_for(L), float(cfg.root[0]),
                                       float(cfg.root[1]), out)
    if status != OK:
        err = _STATUS_ERRORS[status]
        raise type(err)(f"{err} (z_c={z_c:.3f}, traced {s:.3f} mm)")
    return x, y, s, n, worst


def trace_tip(surface: Surface, z_c: float, L: float, cfg: TraceConfig = TraceConfig()) -> TipEstimate:
    """Trace the level set f = z_c from the root for one shaft length.

    Args:
        surface: fitted PolyModel or the exact reading surface.
        z_c: reading to localize (uT).
        L: shaft length (mm).
        cfg: tracer settings.

    Raises:
        GradientVanishedError, LeftDomainError, NotConvergedError.
    """
    x, y, s, _, _ = _run(surface, z_c, L, cfg, np.zeros((0, 2)))
    return TipEstimate(np.array([x, y]), s, True)


def trace_path(surface: Surface, z_c: float, L: float, cfg: TraceConfig = TraceConfig()):
    """Full traced polyline plus the worst level-set error over its second half."""
    total = int(math.ceil(L / cfg.step_size + 1e-9)) + 2
    out = np.zeros((total, 2))
    _, _, _, n, worst = _run(surface, z_c, L, cfg, out)
    return out[: n + 1].copy(), worst


# ---------------------------------------------------------------------------


def _horner(c, t: float) -> float:
    acc = 0.0
    for a in reversed(c):
        acc = acc * t + a
    return acc


@dataclass
class CharacterizedModel:
    """Per-axis polynomials x_tip(z), y_tip(z) over a scaled reading.

    The argument is t = (z - zc)/zh with (zc, zh) mapping z_range to [-1, 1].
    """

    x_coeffs: np.ndarray
    y_coeffs: np.ndarray
    z_range: tuple
    degree: int = 5
    reports: tuple = ()
    anchors: Optional[np.ndarray] = None  # (n, 3): z, x, y
    shaft_length: float = 75.0

    def __post_init__(self):
        self.x_coeffs = np.asarray(self.x_coeffs, dtype=float)
        self.y_coeffs = np.asarray(self.y_coeffs, dtype=float)
        lo, hi = (float(v) for v in self.z_range)
        self.z_range = (lo, hi)
        self._zc = 0.5 * (lo + hi)
        self._zh = 0.5 * (hi - lo)
        self._tol = 1e-9 * max(abs(lo), abs(hi), 1.0)
        self._xc = [float(c) for c in self.x_coeffs]
        self._yc = [float(c) for c in self.y_coeffs]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "characterized-model",
            "degree": self.degree,
            "basis": "power series in t=(z-zc)/zh over z_range",
            "z_range": list(self.z_range),
            "x_coeffs": [float(c) for c in self.x_coeffs],
            "y_coeffs": [float(c) for c in self.y_coeffs],
            "fit_reports": [{"axis": a, "rmse": r.rmse, "r_squared": r.r_squared}
                            for a, r in zip("xy", self.reports)],
            "anchors": None if self.anchors is None else self.anchors.tolist(),
            "shaft_length": self.shaft_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CharacterizedModel":
        _check_header(d, "characterized-model")
        reps = tuple(FitReport(r["rmse"], r["r_squared"]) for r in d.get("fit_reports", []))
        anchors = d.get("anchors")
        return cls(np.asarray(d["x_coeffs"]), np.asarray(d["y_coeffs"]), tuple(d["z_range"]),
                   int(d["degree"]), reps, None if anchors is None else np.asarray(anchors),
                   float(d.get("shaft_length", 75.0)))


def build_characterized_model(surface: Surface, L: float, n_samples: int = 20,
                              degree: int = 5, cfg: TraceConfig = TraceConfig(),
                              z_range=None) -> CharacterizedModel:
    """Trace n_samples evenly spaced readings and fit tip coordinates in z.

    Args:
        surface: reading surface to trace.
        L: shaft length in mm.
        n_samples: number of traced anchors.
        degree: polynomial degree per axis.
        cfg: tracer settings.
        z_range: reading interval; defaults to the surface's valid range.
    """
    if n_samples < degree + 1:
        raise LocalizationError("n_samples must be at least degree + 1")
    if z_range is None:
        z_range = surface.z_range
    if z_range is None:
        raise LocalizationError("surface has no valid reading range")
    lo, hi = (float(v) for v in z_range)
    zs = np.linspace(lo, hi, n_samples)
    tips = np.array([trace_tip(surface, z, L, cfg).position for z in zs])
    t = (zs - 0.5 * (lo + hi)) / (0.5 * (hi - lo))
    V = np.vander(t, degree + 1, increasing=True)
    if np.linalg.matrix_rank(V) < degree + 1:
        raise LocalizationError("characterized model fit is rank deficient")
    coeffs, reports = [], []
    for axis in range(2):
        c = np.linalg.lstsq(V, tips[:, axis], rcond=None)[0]
        r = tips[:, axis] - V @ c
        sst = float(np.sum((tips[:, axis] - tips[:, axis].mean()) ** 2))
        sse = float(np.sum(r ** 2))
        coeffs.append(c)
        reports.append(FitReport(math.sqrt(sse / n_samples),
                                 1.0 - sse / sst if sst > 0 else 1.0, n_samples))
    anchors = np.column_stack([zs, tips])
    return CharacterizedModel(coeffs[0], coeffs[1], (lo, hi), degree, tuple(reports),
                              anchors, float(L))


def tip_from_measurement(cm: CharacterizedModel, z: float) -> TipEstimate:
    """Tip position for a reading via the characterized model.

    Raises:
        OutOfRangeError: z outside the characterized interval.
    """
    lo, hi = cm.z_range
    if not (lo - cm._tol <= z <= hi + cm._tol):
        raise OutOfRangeError(f"reading {z:.3f} outside [{lo:.3f}, {hi:.3f}]")
    t = (z - cm._zc) / cm._zh
    return TipEstimate(np.array([_horner(cm._xc, t), _horner(cm._yc, t)]),
                       cm.shaft_length, True)
