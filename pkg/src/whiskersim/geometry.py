"""2D poses, frame transforms and analytic contours with exact distance queries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numba
import numpy as np

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Raised for invalid contour or pose definitions."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(float(a), TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def rotation(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in mm and heading in radians.

    The heading is normalized to (-pi, pi] on construction.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    heading: float = 0.0

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(2)
        if not np.all(np.isfinite(p)) or not math.isfinite(self.heading):
            raise GeometryError("pose must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @classmethod
    def from_xyh(cls, x: float, y: float, heading: float = 0.0) -> "Pose2D":
        return cls(np.array([x, y], dtype=float), heading)

    def as_tuple(self):
        return float(self.position[0]), float(self.position[1]), self.heading


IDENTITY = Pose2D()


def to_world(pose: Pose2D, p_local) -> np.ndarray:
    """Map local coordinates (single point or (N, 2) array) into the world frame."""
    p = np.asarray(p_local, dtype=float)
    return p @ rotation(pose.heading).T + pose.position


def to_local(pose: Pose2D, p_world) -> np.ndarray:
    """Inverse of :func:`to_world`."""
    p = np.asarray(p_world, dtype=float)
    return (p - pose.position) @ rotation(pose.heading)


# ---------------------------------------------------------------------------
# Contour variants. Lengths are mm; each contour carries a placement pose.


@dataclass(frozen=True)
class Circle:
    radius: float
    pose: Pose2D = IDENTITY
    variant = "circle"

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("circle radius must be positive")


@dataclass(frozen=True)
class RoundedRectangle:
    """Axis-aligned (in its own frame) rectangle with filleted corners.

    Width and height are the outer extents of the shape.
    """

    width: float
    height: float
    corner_radius: float
    pose: Pose2D = IDENTITY
    variant = "rounded-rectangle"

    def __post_init__(self):
        if min(self.width, self.height, self.corner_radius) <= 0:
            raise GeometryError("rectangle dimensions must be positive")
        if self.corner_radius > 0.5 * min(self.width, self.height):
            raise GeometryError("corner radius exceeds half the shortest side")


@dataclass(frozen=True)
class RoundedPolygon:
    """Regular polygon with filleted corners.

    side_length is the side of the sharp polygon that the rounded shape is
    inscribed in, so flats keep the same apothem as the sharp shape.
    """

    sides: int
    side_length: float
    corner_radius: float
    pose: Pose2D = IDENTITY
    variant = "rounded-regular-polygon"

    def __post_init__(self):
        if int(self.sides) != self.sides or self.sides < 3:
            raise GeometryError("polygon needs an integer side count >= 3")
        if min(self.side_length, self.corner_radius) <= 0:
            raise GeometryError("polygon dimensions must be positive")
        if self.corner_radius > min(0.5 * self.side_length, self.apothem):
            raise GeometryError("corner radius exceeds half the shortest side")

    @property
    def apothem(self) -> float:
        return self.side_length / (2.0 * math.tan(math.pi / self.sides))


@dataclass(frozen=True)
class OpenPolyline:
    """One-sided wall along a vertex path with filleted interior corners.

    The solid lies to the left of the travel direction v0 -> v1 -> ...; the
    first and last segments extend to infinity as rays.
    """

    vertices: tuple
    fillet_radius: float
    pose: Pose2D = IDENTITY
    variant = "open-polyline"

    def __post_init__(self):
        v = tuple(tuple(float(c) for c in p) for p in self.vertices)
        object.__setattr__(self, "vertices", v)
        if len(v) < 2:
            raise GeometryError("polyline needs at least 2 vertices")
        if not self.fillet_radius > 0:
            raise GeometryError("fillet radius must be positive")
        _polyline_pieces(self)  # validates that fillets fit


ContourSpec = Union[Circle, RoundedRectangle, RoundedPolygon, OpenPolyline]


@dataclass(frozen=True)
class ClosestPointResult:
    point: np.ndarray
    distance: float


# ---------------------------------------------------------------------------
# Convex core polygons (rounded shapes are core polygon + disc)


def _core(contour) -> tuple[np.ndarray, float]:
    """Core polygon vertices (CCW, local frame) and rounding radius."""
    verts, r = _raw_core(contour)
    keep = [0] + [i for i in range(1, len(verts))
                  if np.hypot(*(verts[i] - verts[i - 1])) > 1e-12]
    verts = verts[keep]
    if len(verts) > 1 and np.hypot(*(verts[-1] - verts[0])) <= 1e-12:
        verts = verts[:-1]
    return verts, r


def _raw_core(contour):
    if isinstance(contour, Circle):
        return np.zeros((1, 2)), contour.radius
    r = contour.corner_radius
    if isinstance(contour, RoundedRectangle):
        hx = 0.5 * contour.width - r
        hy = 0.5 * contour.height - r
        return np.array([[hx, -hy], [hx, hy], [-hx, hy], [-hx, -hy]]), r
    if isinstance(contour, RoundedPolygon):
        n = int(contour.sides)
        rc = (contour.apothem - r) / math.cos(math.pi / n)
        ang = math.pi / n + TWO_PI * np.arange(n) / n - math.pi / 2
        return rc * np.stack([np.cos(ang), np.sin(ang)], axis=1), r
    raise GeometryError(f"no core polygon for {type(contour).__name__}")


def _polygon_sdf(verts: np.ndarray, q: np.ndarray):
    """Signed distance to a convex CCW polygon (possibly degenerate).

    Returns (distance, closest point, index of nearest edge).
    """
    m = len(verts)
    best = np.full(len(q), np.inf)
    foot = np.zeros_like(q)
    edge = np.zeros(len(q), dtype=int)
    inside = np.ones(len(q), dtype=bool)
    for i in range(m):
        a = verts[i]
        e = verts[(i + 1) % m] - a
        w = q - a
        ee = float(e @ e)
        t = np.clip((w @ e) / ee, 0.0, 1.0) if ee > 0 else np.zeros(len(q))
        f = a + t[:, None] * e
        d = np.hypot(*(q - f).T)
        better = d < best
        best = np.where(better, d, best)
        foot[better] = f[better]
        edge[better] = i
        if m > 2:
            inside &= (e[0] * w[:, 1] - e[1] * w[:, 0]) >= 0
        else:
            inside &= False
    return np.where(inside, -best, best), foot, edge


def _rounded_query(contour, q: np.ndarray):
    verts, r = _core(contour)
    if len(verts) == 1:
        d = np.hypot(q[:, 0], q[:, 1])
        # atan2 stays exact for tiny offsets and gives +X at the centre
        a = np.arctan2(q[:, 1], q[:, 0])
        dirs = np.stack([np.cos(a), np.sin(a)], axis=1)
        return d - r, dirs * r
    d0, foot, edge = _polygon_sdf(verts, q)
    delta = q - foot
    n = np.hypot(*delta.T)
    m = len(verts)
    e = verts[(edge + 1) % m] - verts[edge]
    en = np.hypot(*e.T)
    # outward normal of the nearest edge (CCW polygon: rotate edge by -90 deg)
    normal = np.stack([e[:, 1], -e[:, 0]], axis=1) / np.maximum(en, 1e-300)[:, None]
    use_delta = (d0 > 0) & (n > 0)
    a = np.arctan2(delta[:, 1], delta[:, 0])
    dirs = np.where(use_delta[:, None], np.stack([np.cos(a), np.sin(a)], axis=1), normal)
    return d0 - r, foot + r * dirs


# ---------------------------------------------------------------------------
# Open polyline primitives


@dataclass(frozen=True)
class _Seg:
    a: np.ndarray
    b: np.ndarray
    ray_back: bool = False
    ray_fwd: bool = False


@dataclass(frozen=True)
class _Arc:
    c: np.ndarray
    r: float
    start: float   # angle of the first tangent point seen from c
    sweep: float   # signed sweep, positive = counter-clockwise


def _polyline_pieces(contour: OpenPolyline):
    v = np.array(contour.vertices, dtype=float)
    r = contour.fillet_radius
    dirs = np.diff(v, axis=0)
    lens = np.hypot(*dirs.T)
    if np.any(lens <= 0):
        raise GeometryError("polyline has coincident vertices")
    dirs = dirs / lens[:, None]
    trims = np.zeros((len(dirs), 2))  # tangent length cut from (start, end) of each segment
    arcs = []
    for i in range(1, len(v) - 1):
        a, b = dirs[i - 1], dirs[i]
        phi = math.atan2(a[0] * b[1] - a[1] * b[0], float(a @ b))
        if abs(phi) < 1e-12:
            arcs.append(None)
            continue
        if abs(phi) > math.pi - 1e-9:
            raise GeometryError("polyline reverses direction")
        t = r * math.tan(0.5 * abs(phi))
        trims[i - 1, 1] = t
        trims[i, 0] = t
        p1 = v[i] - a * t
        left = np.array([-a[1], a[0]])
        c = p1 + (left if phi > 0 else -left) * r
        start = math.atan2(p1[1] - c[1], p1[0] - c[0])
        arcs.append(_Arc(c, r, start, phi))
    if np.any(trims.sum(axis=1) > lens + 1e-9):
        raise GeometryError("fillet radius too large for polyline segments")
    pieces = []
    last = len(dirs) - 1
    for i in range(len(dirs)):
        a = v[i] + dirs[i] * trims[i, 0]
        b = v[i + 1] - dirs[i] * trims[i, 1]
        pieces.append(_Seg(a, b, ray_back=(i == 0), ray_fwd=(i == last)))
        if i < last and arcs[i] is not None:
            pieces.append(arcs[i])
    return pieces


def _piece_query(piece, q: np.ndarray):
    """Unsigned distance, signed distance and foot point for one primitive."""
    if isinstance(piece, _Seg):
        e = piece.b - piece.a
        ee = float(e @ e)
        w = q - piece.a
        t = (w @ e) / ee if ee > 0 else np.zeros(len(q))
        lo = -np.inf if piece.ray_back else 0.0
        hi = np.inf if piece.ray_fwd else 1.0
        t = np.clip(t, lo, hi)
        f = piece.a + t[:, None] * e
        d = np.hypot(*(q - f).T)
        side = e[0] * w[:, 1] - e[1] * w[:, 0]
        return d, np.where(side > 0, -d, d), f
    w = q - piece.c
    rho = np.hypot(*w.T)
    ang = np.arctan2(w[:, 1], w[:, 0])
    if piece.sweep > 0:
        rel = np.mod(ang - piece.start, TWO_PI)
    else:
        rel = np.mod(piece.start - ang, TWO_PI)
    on = rel <= abs(piece.sweep)
    d = np.where(on, np.abs(rho - piece.r), np.inf)
    sd = rho - piece.r if piece.sweep > 0 else piece.r - rho
    u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return d, np.where(on, sd, np.inf), piece.c + piece.r * u


def _polyline_query(contour: OpenPolyline, q: np.ndarray):
    best = np.full(len(q), np.inf)
    sd = np.full(len(q), np.inf)
    foot = np.zeros_like(q)
    for piece in _polyline_pieces(contour):
        d, s, f = _piece_query(piece, q)
        better = d < best
        best = np.where(better, d, best)
        sd = np.where(better, s, sd)
        foot[better] = f[better]
    return sd, foot


# ---------------------------------------------------------------------------
# Compiled signed distance (hot path of contact resolution). Each contour is
# packed once into arrays: rounded shapes as (core vertices, radius), open
# polylines as segment rows (ax, ay, bx, by, ray_back, ray_fwd) and arc rows
# (cx, cy, r, start, sweep).


@numba.njit(cache=True)
def _sd_rounded(verts, r, q, out):
    m = verts.shape[0]
    for k in range(q.shape[0]):
        x = q[k, 0]
        y = q[k, 1]
        if m == 1:
            out[k] = math.hypot(x - verts[0, 0], y - verts[0, 1]) - r
            continue
        best = 1e300
        inside = m > 2
        for i in range(m):
            ax = verts[i, 0]
            ay = verts[i, 1]
            j = i + 1 if i + 1 < m else 0
            ex = verts[j, 0] - ax
            ey = verts[j, 1] - ay
            wx = x - ax
            wy = y - ay
            ee = ex * ex + ey * ey
            t = 0.0
            if ee > 0.0:
                t = (wx * ex + wy * ey) / ee
                t = min(max(t, 0.0), 1.0)
            d = math.hypot(wx - t * ex, wy - t * ey)
            if d < best:
                best = d
            if ex * wy - ey * wx < 0.0:
                inside = False
        out[k] = (-best if inside else best) - r


@numba.njit(cache=True)
def _sd_polyline(segs, arcs, q, out):
    for k in range(q.shape[0]):
        x = q[k, 0]
        y = q[k, 1]
        best = 1e300
        sd = 1e300
        for i in range(segs.shape[0]):
            ax = segs[i, 0]
            ay = segs[i, 1]
            ex = segs[i, 2] - ax
            ey = segs[i, 3] - ay
            wx = x - ax
            wy = y - ay
            t = (wx * ex + wy * ey) / (ex * ex + ey * ey)
            if t < 0.0 and segs[i, 4] == 0.0:
                t = 0.0
            if t > 1.0 and segs[i, 5] == 0.0:
                t = 1.0
            d = math.hypot(wx - t * ex, wy - t * ey)
            if d < best:
                best = d
                sd = -d if ex * wy - ey * wx > 0.0 else d
        for i in range(arcs.shape[0]):
            wx = x - arcs[i, 0]
            wy = y - arcs[i, 1]
            rho = math.hypot(wx, wy)
            ang = math.atan2(wy, wx)
            sweep = arcs[i, 4]
            if sweep > 0.0:
                rel = (ang - arcs[i, 3]) % (2.0 * math.pi)
            else:
                rel = (arcs[i, 3] - ang) % (2.0 * math.pi)
            if rel <= abs(sweep):
                d = abs(rho - arcs[i, 2])
                if d < best:
                    best = d
                    sd = rho - arcs[i, 2] if sweep > 0.0 else arcs[i, 2] - rho
        out[k] = sd


def _packed(contour):
    cached = contour.__dict__.get("_packed_cache")
    if cached is not None:
        return cached
    if isinstance(contour, OpenPolyline):
        pieces = _polyline_pieces(contour)
        segs = np.array([[*p.a, *p.b, float(p.ray_back), float(p.ray_fwd)]
                         for p in pieces if isinstance(p, _Seg)]).reshape(-1, 6)
        arcs = np.array([[*p.c, p.r, p.start, p.sweep]
                         for p in pieces if isinstance(p, _Arc)]).reshape(-1, 5)
        packed = (segs, arcs)
    else:
        packed = _core(contour)
    object.__setattr__(contour, "_packed_cache", packed)
    return packed


def fast_signed_distance(contour: ContourSpec, pts: np.ndarray) -> np.ndarray:
    """Compiled signed distance for an (N, 2) array of world points."""
    q = np.ascontiguousarray(to_local(contour.pose, pts))
    out = np.empty(len(q))
    packed = _packed(contour)
    if isinstance(contour, OpenPolyline):
        _sd_polyline(packed[0], packed[1], q, out)
    else:
        _sd_rounded(packed[0], float(packed[1]), q, out)
    return out


def _query(contour, p):
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    q = to_local(contour.pose, np.atleast_2d(p))
    if isinstance(contour, OpenPolyline):
        sd, foot = _polyline_query(contour, q)
    else:
        sd, foot = _rounded_query(contour, q)
    foot = to_world(contour.pose, foot)
    if single:
        return float(sd[0]), foot[0]
    return sd, foot


def signed_distance(contour: ContourSpec, p):
    """Signed distance from world point(s) to the contour (negative inside).

    Args:
        contour: any contour variant.
        p: a 2-vector or an (N, 2) array in world coordinates.
    """
    return _query(contour, p)[0]


def closest_point(contour: ContourSpec, p) -> ClosestPointResult:
    """Closest boundary point and signed distance for a single world point."""
    sd, foot = _query(contour, np.asarray(p, dtype=float).reshape(2))
    return ClosestPointResult(point=foot, distance=sd)


# ---------------------------------------------------------------------------
# Boundary sampling (for plots and coverage)


def _closed_pieces(contour):
    verts, r = _core(contour)
    if len(verts) == 1:
        return [_Arc(np.zeros(2), r, 0.0, TWO_PI)]
    m = len(verts)
    pieces = []
    for i in range(m):
        a, b = verts[i], verts[(i + 1) % m]
        e = b - a
        n = np.array([e[1], -e[0]]) / math.hypot(*e)
        pieces.append(_Seg(a + r * n, b + r * n))
        e2 = verts[(i + 2) % m] - b
        n2 = np.array([e2[1], -e2[0]]) / math.hypot(*e2)
        a0 = math.atan2(n[1], n[0])
        turn = wrap_angle(math.atan2(n2[1], n2[0]) - a0)
        pieces.append(_Arc(b.copy(), r, a0, turn))
    return pieces


def _pieces(contour):
    if isinstance(contour, OpenPolyline):
        # rays are clipped at the end vertices for sampling purposes
        return _polyline_pieces(contour)
    return _closed_pieces(contour)


def _piece_length(piece) -> float:
    if isinstance(piece, _Seg):
        return float(math.hypot(*(piece.b - piece.a)))
    return abs(piece.sweep) * piece.r


def _piece_point(piece, t: np.ndarray) -> np.ndarray:
    if isinstance(piece, _Seg):
        return piece.a + t[:, None] * (piece.b - piece.a)
    ang = piece.start + piece.sweep * t
    return piece.c + piece.r * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def perimeter(contour: ContourSpec) -> float:
    """Boundary length; for open polylines the length between end vertices."""
    return float(sum(_piece_length(p) for p in _pieces(contour)))


def sample_boundary(contour: ContourSpec, spacing: float, centered: bool = True) -> np.ndarray:
    """Points along the boundary at (approximately) even arc-length spacing.

    Args:
        contour: contour to sample.
        spacing: target spacing in mm; the count is rounded up so the actual
            spacing is never larger.
        centered: return bucket centres instead of bucket starts.

    Returns:
        (M, 2) world-frame points.
    """
    pieces = _pieces(contour)
    lens = np.array([_piece_length(p) for p in pieces])
    total = float(lens.sum())
    m = max(1, int(math.ceil(total / spacing - 1e-9)))
    s = (np.arange(m) + (0.5 if centered else 0.0)) * (total / m)
    edges = np.concatenate([[0.0], np.cumsum(lens)])
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, len(pieces) - 1)
    out = np.zeros((m, 2))
    for k, piece in enumerate(pieces):
        sel = idx == k
        if np.any(sel):
            t = (s[sel] - edges[k]) / max(lens[k], 1e-300)
            out[sel] = _piece_point(piece, t)
    return to_world(contour.pose, out)


def boundary_polyline(contour: ContourSpec, spacing: float = 0.5) -> np.ndarray:
    """Dense polyline for plotting (closed contours repeat the first point)."""
    pts = sample_boundary(contour, spacing, centered=False)
    if not isinstance(contour, OpenPolyline):
        return np.vstack([pts, pts[:1]])
    end = to_world(contour.pose, np.array(contour.vertices[-1]))
    return np.vstack([pts, end])


# ---------------------------------------------------------------------------
# Dict (de)serialization used by config files


def contour_from_dict(d: dict) -> ContourSpec:
    """Build a contour from a config mapping with a 'variant' key."""
    d = dict(d)
    variant = d.pop("variant", None)
    center = d.pop("center", [0.0, 0.0])
    rot = d.pop("rotation", 0.0)
    pose = Pose2D(np.asarray(center, dtype=float), float(rot))
    try:
        if variant == "circle":
            return Circle(float(d.pop("radius")), pose, **d)
        if variant == "rounded-rectangle":
            w = float(d.pop("width"))
            h = d.pop("height", None)
            return RoundedRectangle(w, w if h is None else float(h),
                                    float(d.pop("corner_radius")), pose, **d)
        if variant == "rounded-regular-polygon":
            return RoundedPolygon(int(d.pop("sides")), float(d.pop("side_length")),
                                  float(d.pop("corner_radius")), pose, **d)
        if variant == "open-polyline":
            return OpenPolyline(tuple(map(tuple, d.pop("vertices"))),
                                float(d.pop("fillet_radius")), pose, **d)
    except KeyError as exc:
        raise GeometryError(f"contour '{variant}' missing field {exc}") from None
    except TypeError as exc:
        raise GeometryError(f"contour '{variant}': {exc}") from None
    raise GeometryError(f"unknown contour variant {variant!r}")


def contour_to_dict(c: ContourSpec) -> dict:
    out = {"variant": c.variant}
    if isinstance(c, Circle):
        out["radius"] = c.radius
    elif isinstance(c, RoundedRectangle):
        out.update(width=c.width, height=c.height, corner_radius=c.corner_radius)
    elif isinstance(c, RoundedPolygon):
        out.update(sides=c.sides, side_length=c.side_length, corner_radius=c.corner_radius)
    else:
        out.update(vertices=[list(v) for v in c.vertices], fillet_radius=c.fillet_radius)
    out["center"] = [float(c.pose.position[0]), float(c.pose.position[1])]
    out["rotation"] = c.pose.heading
    return out


def transformed(contour: ContourSpec, T: Pose2D) -> ContourSpec:
    """Return the contour moved rigidly by T (applied on the left)."""
    pos = to_world(T, contour.pose.position)
    pose = Pose2D(pos, contour.pose.heading + T.heading)
    d = contour_to_dict(contour)
    d["center"] = pos.tolist()
    d["rotation"] = pose.heading
    return contour_from_dict(d)


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose b expressed in frame a, mapped to the world."""
    return Pose2D(to_world(a, b.position), a.heading + b.heading)


def as_points(seq: Sequence) -> np.ndarray:
    return np.asarray(seq, dtype=float).reshape(-1, 2)
