"""Closed-loop simulation: world stepping, experiment runners and scoring."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .control import ControlCommand, ControlConfig, ControllerState, control_step
from .geometry import (Circle, ContourSpec, OpenPolyline, Pose2D, RoundedPolygon,
                       RoundedRectangle, contour_to_dict, perimeter, rotation,
                       sample_boundary, signed_distance, to_world, wrap_angle)
from .kalman import NoiseWindow, estimate_R, init_filter, predict, update
from .localization import CharacterizedModel, LocalizationError, tip_from_measurement
from .whisker import (ContactKind, UnresolvableContactError, WhiskerParams, arc_point,
                      base_pose, measurement_from_curvature, solve_contact)

COVERAGE_BUCKET = 2.0  # mm


@dataclass
class ScenarioConfig:
    """One contour-following trial.

    Args:
        name: label used in file names.
        contour: object to follow.
        start_pose: initial sensor pose; derived from the contour when None.
        tick_rate: control rate in Hz.
        duration: time limit in s.
        params: whisker constants.
        control: controller settings.
        seed: noise seed.
        standoff: clearance (mm) between the resting tip and the object for
            derived start poses.
        completion_turn: closed contours stop once the sensor heading has
            turned this far (rad) after the first key point.
    """

    name: str
    contour: ContourSpec
    start_pose: Optional[Pose2D] = None
    tick_rate: float = 30.0
    duration: float = 80.0
    params: WhiskerParams = field(default_factory=WhiskerParams)
    control: ControlConfig = field(default_factory=ControlConfig)
    seed: int = 0
    standoff: float = 10.0
    completion_turn: float = 2.0 * math.pi + 0.3

    def __post_init__(self):
        if not self.tick_rate > 0:
            raise ValueError("tick_rate must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")


def default_start_pose(contour: ContourSpec, params: WhiskerParams, standoff: float) -> Pose2D:
    """Sensor placed so its resting tip is `standoff` mm off the object.

    Closed contours are approached downward onto their highest point. Open
    walls are approached along the inward normal of their last segment, 20 mm
    before its end vertex, since travel runs against the vertex order.
    """
    if isinstance(contour, OpenPolyline):
        v = to_world(contour.pose, np.array(contour.vertices[-2:]))
        d = (v[1] - v[0]) / math.hypot(*(v[1] - v[0]))
        inward = np.array([-d[1], d[0]])
        anchor = v[1] - 20.0 * d
    else:
        pts = sample_boundary(contour, 0.5)
        anchor = pts[int(np.argmax(pts[:, 1]))]
        inward = np.array([0.0, -1.0])
    heading = math.atan2(inward[1], inward[0])
    tip = rotation(heading + params.mount_angle) @ arc_point(0.0, params.shaft_length)
    return Pose2D(anchor - tip - standoff * inward, heading)


def step_world(pose: Pose2D, cmd: ControlCommand, dt: float, max_turn_rate: float) -> Pose2D:
    """Slew the heading toward the command, then integrate the velocity.

    Rotation happens about cmd.pivot (sensor frame) so that point stays put;
    the translation uses the sensor axes after the rotation.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    h = pose.heading
    dth = wrap_angle(cmd.target_orientation - h)
    lim = max_turn_rate * dt
    dpsi = min(max(dth, -lim), lim)
    piv = np.asarray(cmd.pivot, dtype=float)
    pw = pose.position + rotation(h) @ piv
    h2 = h + dpsi
    R2 = rotation(h2)
    pos = pw - R2 @ piv + dt * (R2 @ np.array([cmd.v_x, cmd.v_y]))
    return Pose2D(pos, h2)


# ---------------------------------------------------------------------------
# Records and metrics

RECORD_COLUMNS = ["tick", "t", "x", "y", "heading", "z", "curvature", "contact_kind",
                  "holding", "raw_tip_x", "raw_tip_y", "filt_tip_x", "filt_tip_y",
                  "keypoint", "theta", "v_x", "v_y"]
FILTER_COLUMNS = ["tick", "prior_x", "prior_y", "prior_Px", "prior_Py", "post_x", "post_y",
                  "post_Px", "post_Py", "K_x", "K_y", "R_x", "R_y"]


@dataclass
class TrialRecord:
    """Per-tick log of a trial plus the reconstructed contour points."""

    name: str
    seed: int
    dt: float
    rows: list = field(default_factory=list)
    filter_rows: list = field(default_factory=list)
    failure: Optional[str] = None

    @property
    def reconstructed(self) -> np.ndarray:
        pts = [(r[11], r[12]) for r in self.rows if r[11] is not None]
        return np.array(pts, dtype=float).reshape(-1, 2)

    def column(self, name: str) -> list:
        i = RECORD_COLUMNS.index(name)
        return [r[i] for r in self.rows]


@dataclass
class Metrics:
    mean_abs_error: float
    std_error: float
    max_error: float
    mean_deflection: float
    deflection_deviation_pct: float
    slip_count: int
    coverage_fraction: float
    n_points: int = 0
    contact_losses: int = 0
    longest_detachment_s: float = 0.0
    valid: bool = True
    failure: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


def coverage_fraction(contour: ContourSpec, points: np.ndarray,
                      bucket: float = COVERAGE_BUCKET) -> float:
    """Share of 2 mm boundary buckets whose centre has a point within 2 mm."""
    centres = sample_boundary(contour, bucket, centered=True)
    if len(points) == 0:
        return 0.0
    d, _ = cKDTree(points).query(centres, k=1)
    return float(np.mean(d <= bucket))


def compute_metrics(record: TrialRecord, contour: ContourSpec, target_z: Optional[float],
                    static_z: float, with_coverage: bool = True,
                    offsets: Optional[np.ndarray] = None) -> Metrics:
    """Score a trial against the ground-truth contour.

    Args:
        record: trial log.
        contour: ground truth.
        target_z: commanded reading, for the deviation figure (None when the
            trial is open loop).
        static_z: rest reading.
        with_coverage: skip coverage for unbounded walls.
        offsets: optional per-point world offsets for moving objects (the
            point is compared after subtracting its tick's offset).
    """
    pts = record.reconstructed
    holding = [r for r in record.rows if r[8]]
    z_hold = np.array([r[5] for r in holding], dtype=float)
    kinds = [r[7] for r in record.rows]
    slips = sum(1 for a, b in zip(["none"] + kinds[:-1], kinds)
                if b == ContactKind.TANGENTIAL.value and a != b)
    losses = 0
    longest = run = 0
    started = False
    for r in record.rows:
        if r[8]:
            if started and run:
                losses += 1
            started = True
            run = 0
        elif started:
            run += 1
            longest = max(longest, run)
    longest_s = longest * record.dt
    if len(pts) == 0:
        nan = float("nan")
        return Metrics(nan, nan, nan, nan, nan, slips, 0.0 if with_coverage else nan,
                       0, losses, longest_s, False, record.failure or "no contact estimates")
    if offsets is not None:
        pts = pts - offsets
    err = np.abs(signed_distance(contour, pts))
    mean_z = float(z_hold.mean()) if len(z_hold) else float("nan")
    dev = (float("nan") if target_z is None
           else abs(mean_z - target_z) / abs(target_z - static_z) * 100.0)
    cov = coverage_fraction(contour, pts) if with_coverage else float("nan")
    return Metrics(float(err.mean()), float(err.std()), float(err.max()), mean_z, dev,
                   slips, cov, len(pts), losses, longest_s, record.failure is None,
                   record.failure)


# ---------------------------------------------------------------------------
# Runners


def _row(tick, t, pose, z, ws, info, cmd):
    def xy(v):
        return (None, None) if v is None else (float(v[0]), float(v[1]))

    rx, ry = xy(info.raw_tip_world)
    fx, fy = xy(info.filtered_world)
    return (tick, t, float(pose.position[0]), float(pose.position[1]), pose.heading, z,
            ws.curvature, ws.contact_kind.value, info.holding, rx, ry, fx, fy,
            info.keypoint, cmd.target_orientation, cmd.v_x, cmd.v_y)


def _filter_row(tick, info):
    prior_x, prior_P = info.prior
    post = info.posterior
    return (tick, *map(float, prior_x), *map(float, prior_P), *map(float, post.x),
            *map(float, post.P), *map(float, post.K), *map(float, info.R))


def run_follow(sc: ScenarioConfig, cm: CharacterizedModel):
    """Closed-loop contour following.

    Runs until the time limit, a full lap (closed contours) or a failure,
    which is recorded rather than raised.

    Returns:
        (TrialRecord, Metrics)
    """
    params, cfg = sc.params, sc.control
    dt = 1.0 / sc.tick_rate
    rng = np.random.default_rng(sc.seed)
    pose = sc.start_pose or default_start_pose(sc.contour, params, sc.standoff)
    st = ControllerState(cm, params, cfg)
    rec = TrialRecord(sc.name, sc.seed, dt)
    closed = not isinstance(sc.contour, OpenPolyline)
    hint = None
    turned = 0.0
    for tick in range(int(round(sc.duration * sc.tick_rate))):
        try:
            ws = solve_contact(base_pose(pose, params), sc.contour, params, hint)
        except UnresolvableContactError as exc:
            rec.failure = f"tick {tick}: {exc}"
            break
        hint = ws.curvature if ws.curvature > 0 else None
        z = measurement_from_curvature(ws.curvature, params, rng).z
        cmd, info = control_step(z, pose, st, dt)
        rec.rows.append(_row(tick, tick * dt, pose, z, ws, info, cmd))
        if info.posterior is not None:
            rec.filter_rows.append(_filter_row(tick, info))
        new = step_world(pose, cmd, dt, cfg.max_turn_rate)
        if len(st.keypoints):
            turned += wrap_angle(new.heading - pose.heading)
        pose = new
        if closed and abs(turned) >= sc.completion_turn:
            break
    m = compute_metrics(rec, sc.contour, cfg.target_deflection, params.static_offset)
    return rec, m


@dataclass
class SweepConfig:
    """Flat-wall sweep past a fixed whisker.

    Args:
        distances: lateral tip displacement per trial (mm).
        attack_angle: angle between the wall and the whisker axis (rad).
        travel: wall travel per trial (mm).
        speed: wall speed (mm/s).
        tick_rate: sampling rate (Hz).
        seed: noise seed (trial i uses seed + i).
    """

    distances: tuple = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0)
    attack_angle: float = 1.3
    travel: float = 80.0
    speed: float = 10.0
    tick_rate: float = 300.0
    seed: int = 0


@dataclass
class SweepTrial:
    distance: float
    metrics: Metrics
    slip: bool
    tip_ticks: int
    tangential_ticks: int
    errors: np.ndarray
    record: TrialRecord


def tip_curvature_for_offset(d: float, params: WhiskerParams) -> float:
    """Curvature whose tip sits d mm off the straight axis."""
    L = params.shaft_length
    def f(k):
        return (1.0 - math.cos(k * L)) / k - d

    if not 0 < d <= f(params.curvature_max) + d:
        raise ValueError(f"offset {d} mm is beyond the deflection range")
    return brentq(f, 1e-12, params.curvature_max, xtol=1e-15, rtol=1e-15)


def flat_wall(d: float, params: WhiskerParams, attack_angle: float,
              half_length: float = 1000.0) -> OpenPolyline:
    """Wall through the tip of the shaft deflected d mm, in the base frame.

    The solid sits on the -Y side of the shaft.
    """
    p = arc_point(tip_curvature_for_offset(d, params), params.shaft_length)
    u = np.array([math.cos(attack_angle), math.sin(attack_angle)])
    # vertex order runs along -u so that the solid (left of travel) is on -Y
    return OpenPolyline((tuple(p + half_length * u), tuple(p - half_length * u)), 1.0)


def run_flat_sweep(sw: SweepConfig, params: WhiskerParams, cm: CharacterizedModel,
                   cfg: ControlConfig = ControlConfig()) -> list:
    """Nine-distance flat sweep with localization and filtering active.

    The whisker base is the world origin; the wall slides along itself.
    Errors compare filtered tip estimates with the wall.
    """
    trials = []
    dt = 1.0 / sw.tick_rate
    n_ticks = int(round(sw.travel / sw.speed * sw.tick_rate))
    u = np.array([math.cos(sw.attack_angle), math.sin(sw.attack_angle)])
    for i, d in enumerate(sw.distances):
        rng = np.random.default_rng(sw.seed + i)
        wall = flat_wall(d, params, sw.attack_angle)
        rec = TrialRecord(f"sweep_{d:g}", sw.seed + i, dt)
        window = NoiseWindow(cfg.filter_window, cfg.variance_floor)
        filt = None
        hint = None
        kinds = {ContactKind.TIP: 0, ContactKind.TANGENTIAL: 0, ContactKind.NONE: 0}
        offsets = []
        for tick in range(n_ticks):
            shift = sw.speed * tick * dt * u
            # same relative motion, solved in the wall frame so the packed
            # wall geometry is reused
            try:
                ws = solve_contact(Pose2D(-shift, 0.0), wall, params, hint)
            except UnresolvableContactError as exc:
                rec.failure = f"tick {tick}: {exc}"
                break
            hint = ws.curvature if ws.curvature > 0 else None
            kinds[ws.contact_kind] += 1
            z = measurement_from_curvature(ws.curvature, params, rng).z
            holding = False
            raw = filt_w = None
            try:
                tip = tip_from_measurement(cm, z)
            except LocalizationError:
                tip = None
            if tip is not None and abs(z - params.static_offset) >= cfg.collision_threshold:
                holding = True
                raw = tip.position
                if filt is None:
                    filt = init_filter(tip, cfg.prior_variance, cfg.process_variance)
                window.push(tip)
                if window.full:
                    R = estimate_R(window)
                    prior = predict(filt)
                    filt = update(prior, tip, R)
                    filt_w = filt.x
                    rec.filter_rows.append((tick, *prior.x, *prior.P, *filt.x, *filt.P,
                                            *filt.K, *R))
                    offsets.append(shift)
            rec.rows.append((tick, tick * dt, 0.0, 0.0, 0.0, z, ws.curvature,
                             ws.contact_kind.value, holding,
                             None if raw is None else float(raw[0]),
                             None if raw is None else float(raw[1]),
                             None if filt_w is None else float(filt_w[0]),
                             None if filt_w is None else float(filt_w[1]),
                             False, 0.0, 0.0, 0.0))
        off = np.array(offsets).reshape(-1, 2)
        # wall slides along itself, so distances in the moving frame equal
        # distances to the shifted wall at each tick
        m = compute_metrics(rec, wall, None, params.static_offset,
                            with_coverage=False, offsets=off)
        pts = rec.reconstructed - off if len(off) else np.zeros((0, 2))
        errs = np.abs(signed_distance(wall, pts)) if len(pts) else np.zeros(0)
        trials.append(SweepTrial(float(d), m, kinds[ContactKind.TANGENTIAL] > 0,
                                 kinds[ContactKind.TIP], kinds[ContactKind.TANGENTIAL],
                                 errs, rec))
    return trials


# ---------------------------------------------------------------------------
# Export


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def write_csv(path, columns, rows):
    """Write rows with a fixed float format so re-runs are byte-identical."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def record_to_csv(record: TrialRecord, path):
    write_csv(path, RECORD_COLUMNS, record.rows)


def filter_trace_to_csv(record: TrialRecord, path):
    write_csv(path, FILTER_COLUMNS, record.filter_rows)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return _clean(v.item())
    return v


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def summary_dict(sc: ScenarioConfig, m: Metrics) -> dict:
    return {
        "scenario": sc.name,
        "seed": sc.seed,
        "contour": contour_to_dict(sc.contour),
        "tick_rate": sc.tick_rate,
        "metrics": m.to_dict(),
        "target_deflection": sc.control.target_deflection,
        "perimeter": perimeter(sc.contour),
    }


PRESETS = {
    "cylinder": lambda: Circle(80.0),
    "rounded_rectangle": lambda: RoundedRectangle(160.0, 160.0, 40.0),
    "octagon": lambda: RoundedPolygon(8, 70.0, 30.0),
    # open wall, listed against the travel direction: flat run, gentle rise,
    # plateau, a slanted drop and a sharp corner into a vertical face
    "wall": lambda: OpenPolyline(((210.0, -150.0), (210.0, -15.0), (170.0, 15.0),
                                  (120.0, 15.0), (60.0, 0.0), (-60.0, 0.0)), 12.0),
}
