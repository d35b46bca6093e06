"""Run configuration: embedded defaults, strict validation, object builders.

A config is one JSON document with the sections whisker, calibration,
control, scenario and output. Missing keys take defaults; unknown keys are
errors.
"""

from __future__ import annotations

import copy
import json
import math
from typing import Any

from .control import ControlConfig
from .geometry import GeometryError, Pose2D, contour_from_dict
from .harness import PRESETS, ScenarioConfig, SweepConfig
from .localization import TraceConfig
from .whisker import WhiskerParams


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "whisker": {
        "shaft_length": 75.0,
        "measurement_gain": 2.0e5,
        "static_offset": -8300.0,
        "curvature_max": 0.02,
        "arc_samples": 200,
        "noise_std": 3.0,
        "mount_angle": math.pi / 2 - 1.1,
    },
    "calibration": {
        "region": [10.0, 76.0, 3.0, 45.0],
        "step": 3.0,
        "domain_margin": 3.0,
        "order": 5,
        "seed": 0,
        "trace": {"step_size": 1e-3, "relaxation_length": 4.75},
        "characterized": {"n_samples": 20, "degree": 5},
    },
    "control": {
        "collision_threshold": 300.0,
        "target_deflection": -8760.0,
        "total_velocity": 10.0,
        "keypoint_count": 5,
        "keypoint_stride": 10,
        "keypoint_min_spacing": 2.0,
        "spline_degree": 3,
        "kp": 0.02,
        "ki": 0.002,
        "kd": 0.001,
        "integral_clamp": None,
        "max_turn_rate": 1.0,
        "filter_window": 10,
        "prior_variance": 10.0,
        "process_variance": 1e-5,
        "variance_floor": 1e-6,
        "release_fraction": 0.5,
        "pivot_on_tip": True,
    },
    "scenario": {
        "object": "cylinder",
        "contour": None,
        "start_pose": None,
        "tick_rate": 30.0,
        "duration": 80.0,
        "standoff": 10.0,
        "completion_turn": 2.0 * math.pi + 0.3,
        "seed": 0,
        "sweep": {
            "distances": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0],
            "attack_angle": 1.3,
            "travel": 80.0,
            "speed": 10.0,
            "tick_rate": 300.0,
        },
    },
    "output": {
        "dir": "whiskersim-out",
        "models_dir": None,
        "svg": True,
    },
}

# keys whose default is null, with the types they accept otherwise
_NULLABLE = {
    ("control", "integral_clamp"): (int, float),
    ("scenario", "contour"): (dict,),
    ("scenario", "start_pose"): (list,),
    ("output", "models_dir"): (str,),
}


def defaults() -> dict:
    return copy.deepcopy(DEFAULTS)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check(user: Any, ref: Any, path: tuple):
    where = ".".join(path) or "<root>"
    if isinstance(ref, dict):
        if not isinstance(user, dict):
            raise ConfigError(f"{where}: expected an object")
        for k, v in user.items():
            if k not in ref:
                raise ConfigError(f"{where}: unknown key {k!r}")
            _check(v, ref[k], path + (k,))
        return
    if ref is None:
        allowed = _NULLABLE.get(path, ())
        if user is not None and not isinstance(user, allowed):
            raise ConfigError(f"{where}: bad type {type(user).__name__}")
        if path == ("control", "integral_clamp") and isinstance(user, bool):
            raise ConfigError(f"{where}: expected a number")
        return
    if isinstance(ref, bool):
        if not isinstance(user, bool):
            raise ConfigError(f"{where}: expected true/false")
    elif isinstance(ref, int):
        if not (isinstance(user, int) and not isinstance(user, bool)):
            raise ConfigError(f"{where}: expected an integer")
    elif isinstance(ref, float):
        if not _is_number(user) or not math.isfinite(user):
            raise ConfigError(f"{where}: expected a finite number")
    elif isinstance(ref, str):
        if not isinstance(user, str):
            raise ConfigError(f"{where}: expected a string")
    elif isinstance(ref, list):
        if not isinstance(user, list) or not all(_is_number(v) for v in user):
            raise ConfigError(f"{where}: expected a list of numbers")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(user: dict) -> dict:
    """Check a user config against the schema and fill in defaults."""
    _check(user, DEFAULTS, ())
    cfg = _merge(DEFAULTS, user)
    cal = cfg["calibration"]
    if len(cal["region"]) != 4:
        raise ConfigError("calibration.region: expected [x0, x1, y0, y1]")
    sc = cfg["scenario"]
    if sc["contour"] is None and sc["object"] not in PRESETS:
        raise ConfigError(f"scenario.object: unknown object {sc['object']!r} "
                          f"(choose from {sorted(PRESETS)} or give scenario.contour)")
    if sc["start_pose"] is not None and len(sc["start_pose"]) != 3:
        raise ConfigError("scenario.start_pose: expected [x, y, heading]")
    # build everything once so bad values fail before any computation
    build_whisker(cfg)
    build_control(cfg)
    build_trace(cfg)
    build_scenario(cfg)
    build_sweep(cfg)
    return cfg


def load(path=None) -> dict:
    """Read and validate a config file; None gives the defaults."""
    if path is None:
        return validate({})
    with open(path) as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate(user)


def _wrap(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def build_whisker(cfg: dict) -> WhiskerParams:
    return _wrap(WhiskerParams, **cfg["whisker"])


def build_control(cfg: dict) -> ControlConfig:
    return _wrap(ControlConfig, **cfg["control"])


def build_trace(cfg: dict) -> TraceConfig:
    return _wrap(TraceConfig, **cfg["calibration"]["trace"])


def build_contour(cfg: dict):
    sc = cfg["scenario"]
    if sc["contour"] is not None:
        try:
            return contour_from_dict(sc["contour"])
        except GeometryError as exc:
            raise ConfigError(f"scenario.contour: {exc}") from None
    return PRESETS[sc["object"]]()


def build_scenario(cfg: dict) -> ScenarioConfig:
    sc = cfg["scenario"]
    start = None
    if sc["start_pose"] is not None:
        start = _wrap(Pose2D.from_xyh, *sc["start_pose"])
    name = sc["object"] if sc["contour"] is None else "custom"
    return _wrap(ScenarioConfig, name, build_contour(cfg), start, float(sc["tick_rate"]),
                 float(sc["duration"]), build_whisker(cfg), build_control(cfg),
                 int(sc["seed"]), float(sc["standoff"]), float(sc["completion_turn"]))


def build_sweep(cfg: dict) -> SweepConfig:
    sw = cfg["scenario"]["sweep"]
    out = SweepConfig(tuple(float(d) for d in sw["distances"]), float(sw["attack_angle"]),
                      float(sw["travel"]), float(sw["speed"]), float(sw["tick_rate"]),
                      int(cfg["scenario"]["seed"]))
    if not out.distances or min(out.distances) <= 0:
        raise ConfigError("scenario.sweep.distances must be positive")
    if min(out.travel, out.speed, out.tick_rate) <= 0:
        raise ConfigError("scenario.sweep travel, speed and tick_rate must be positive")
    return out
