"""Command-line entry point.

    whiskersim calibrate [--config PATH] [--seed N] [--out DIR] [--noiseless]
    whiskersim sweep     [...] [--models DIR]
    whiskersim follow    [...] [--models DIR]
    whiskersim report    RUN_DIR [RUN_DIR ...] [--out DIR]
    whiskersim defaults

Exit codes: 0 ok, 2 config or fit error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .calibration import (CalibrationError, default_domain, fit_poly, grid_to_dict, PolyModel,
                          sample_grid)
from .control import ControlError
from .geometry import GeometryError
from .harness import (dump_json, filter_trace_to_csv, record_to_csv, run_flat_sweep,
                      run_follow, summary_dict, write_csv)
from .localization import (CharacterizedModel, LocalizationError, build_characterized_model,
                           trace_path)
from .whisker import WhiskerError

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
POLY_FILE = "poly_model.json"
CM_FILE = "characterized_model.json"


class CliIOError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    seed: int
    out_dir: str
    artifacts: dict = field(default_factory=dict)

    def add(self, path: str):
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        self.artifacts[os.path.basename(path)] = digest

    def write(self) -> str:
        path = os.path.join(self.out_dir, f"manifest_{self.command}.json")
        doc = {"command": self.command, "config_path": self.config_path, "seed": self.seed,
               "output_dir": self.out_dir, "artifacts": dict(sorted(self.artifacts.items()))}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _prepare(args):
    """Load config, apply flag overrides, create the output directory."""
    cfg = cfgmod.load(args.config)
    over = {}
    if args.seed is not None:
        over = {"calibration": {"seed": args.seed}, "scenario": {"seed": args.seed}}
    if args.noiseless:
        over.setdefault("whisker", {})["noise_std"] = 0.0
    if over:
        cfg = cfgmod.validate(cfgmod._merge(cfg, over))
    out = args.out or cfg["output"]["dir"]
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise CliIOError(f"cannot create output directory {out}: {exc}") from None
    return cfg, out


def _load_models(args, cfg, out):
    mdir = args.models or cfg["output"]["models_dir"] or out
    try:
        with open(os.path.join(mdir, CM_FILE)) as fh:
            cm = CharacterizedModel.from_dict(json.load(fh))
    except FileNotFoundError:
        raise CliIOError(f"no {CM_FILE} in {mdir}; run 'whiskersim calibrate' first") from None
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise CliIOError(f"cannot read models from {mdir}: {exc}") from None
    return cm


def cmd_calibrate(args) -> int:
    cfg, out = _prepare(args)
    params = cfgmod.build_whisker(cfg)
    cal = cfg["calibration"]
    seed = int(cal["seed"])
    grid = sample_grid(params, tuple(cal["region"]), float(cal["step"]), seed=seed)
    domain = default_domain(grid.region, float(cal["domain_margin"]))
    model, report = fit_poly(grid, domain, int(cal["order"]))
    tcfg = cfgmod.build_trace(cfg)
    cm = build_characterized_model(model, params.shaft_length,
                                   int(cal["characterized"]["n_samples"]),
                                   int(cal["characterized"]["degree"]), tcfg,
                                   z_range=params.z_range)
    man = RunManifest("calibrate", args.config, seed, out)
    files = []
    p = os.path.join(out, "calibration_grid.csv")
    write_csv(p, ["x", "y", "z"], grid.samples.tolist())
    files.append(p)
    p = os.path.join(out, "calibration_grid.json")
    dump_json(grid_to_dict(grid), p)
    files.append(p)
    p = os.path.join(out, POLY_FILE)
    dump_json(model.to_dict(), p)
    files.append(p)
    p = os.path.join(out, CM_FILE)
    dump_json(cm.to_dict(), p)
    files.append(p)
    p = os.path.join(out, "fit_report.json")
    dump_json({"n_samples": report.n_samples, "rmse_uT": report.rmse,
               "r_squared": report.r_squared, "noise_std": grid.noise_std, "seed": seed,
               "characterized": [{"axis": a, "rmse_mm": r.rmse, "r_squared": r.r_squared}
                                 for a, r in zip("xy", cm.reports)]}, p)
    files.append(p)
    if cfg["output"]["svg"]:
        from .plotting import calibration_figure
        profiles = []
        for z in np.linspace(*params.z_range, 6)[:-1]:
            line, _ = trace_path(model, z, params.shaft_length, tcfg)
            profiles.append((z, line[::250]))
        p = os.path.join(out, "calibration.svg")
        calibration_figure(grid, profiles, p)
        files.append(p)
    for f in files:
        man.add(f)
    man.write()
    print(f"calibration: {len(grid)} samples, R^2 = {report.r_squared:.6f}, "
          f"RMSE = {report.rmse:.3f} uT")
    print(f"characterized model: R^2 x = {cm.reports[0].r_squared:.6f}, "
          f"y = {cm.reports[1].r_squared:.6f}")
    return EXIT_OK


SWEEP_COLUMNS = ["distance", "mean_abs_error", "std_error", "max_error", "slip",
                 "tip_ticks", "tangential_ticks", "n_points"]


def cmd_sweep(args) -> int:
    cfg, out = _prepare(args)
    cm = _load_models(args, cfg, out)
    params = cfgmod.build_whisker(cfg)
    sw = cfgmod.build_sweep(cfg)
    trials = run_flat_sweep(sw, params, cm, cfgmod.build_control(cfg))
    man = RunManifest("sweep", args.config, sw.seed, out)
    rows = [(t.distance, t.metrics.mean_abs_error, t.metrics.std_error, t.metrics.max_error,
             t.slip, t.tip_ticks, t.tangential_ticks, t.metrics.n_points) for t in trials]
    p = os.path.join(out, f"sweep_seed{sw.seed}.csv")
    write_csv(p, SWEEP_COLUMNS, rows)
    man.add(p)
    p = os.path.join(out, f"sweep_seed{sw.seed}_metrics.json")
    dump_json({"scenario": "flat-sweep", "seed": sw.seed, "attack_angle": sw.attack_angle,
               "trials": [{"distance": t.distance, "slip": t.slip,
                           "metrics": t.metrics.to_dict()} for t in trials]}, p)
    man.add(p)
    if cfg["output"]["svg"]:
        from .plotting import sweep_figure
        p = os.path.join(out, f"sweep_seed{sw.seed}.svg")
        sweep_figure(trials, p)
        man.add(p)
    man.write()
    for t in trials:
        flag = "  slip" if t.slip else ""
        print(f"d={t.distance:5.1f} mm  mean={t.metrics.mean_abs_error:.4f}  "
              f"max={t.metrics.max_error:.4f}{flag}")
    return EXIT_OK


def cmd_follow(args) -> int:
    cfg, out = _prepare(args)
    cm = _load_models(args, cfg, out)
    sc = cfgmod.build_scenario(cfg)
    rec, m = run_follow(sc, cm)
    stem = os.path.join(out, f"{sc.name}_seed{sc.seed}")
    man = RunManifest("follow", args.config, sc.seed, out)
    record_to_csv(rec, stem + ".csv")
    filter_trace_to_csv(rec, stem + "_filter.csv")
    dump_json(summary_dict(sc, m), stem + "_metrics.json")
    files = [stem + ".csv", stem + "_filter.csv", stem + "_metrics.json"]
    if cfg["output"]["svg"]:
        from .plotting import overlay_figure
        overlay_figure(sc.contour, rec, stem + "_overlay.svg", title=sc.name)
        files.append(stem + "_overlay.svg")
    for f in files:
        man.add(f)
    man.write()
    status = "ok" if m.valid else f"FAILED ({m.failure})"
    print(f"{sc.name}: {status}; mean error {m.mean_abs_error:.4f} mm, "
          f"coverage {m.coverage_fraction:.3f}, deflection {m.mean_deflection:.1f} uT")
    return EXIT_OK


REPORT_COLUMNS = ["run", "scenario", "seed", "mean_abs_error", "std_error", "max_error",
                  "coverage_fraction", "mean_deflection", "deflection_deviation_pct",
                  "slip_count", "contact_losses", "valid"]


def _verify(run_dir: str) -> list:
    warnings = []
    for mpath in sorted(glob.glob(os.path.join(run_dir, "manifest_*.json"))):
        with open(mpath) as fh:
            man = json.load(fh)
        for name, digest in man.get("artifacts", {}).items():
            f = os.path.join(run_dir, name)
            if not os.path.exists(f):
                warnings.append(f"{f}: listed in {os.path.basename(mpath)} but missing")
                continue
            with open(f, "rb") as fh:
                if hashlib.sha256(fh.read()).hexdigest() != digest:
                    warnings.append(f"{f}: checksum mismatch")
    return warnings


def cmd_report(args) -> int:
    rows = []
    for run in args.runs:
        if not os.path.isdir(run):
            raise CliIOError(f"run directory {run} not found")
        for w in _verify(run):
            print(f"warning: {w}", file=sys.stderr)
        paths = sorted(glob.glob(os.path.join(run, "*_metrics.json")))
        if not paths:
            raise CliIOError(f"{run}: no metrics files")
        for path in paths:
            try:
                with open(path) as fh:
                    doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CliIOError(f"{path}: corrupt metrics ({exc})") from None
            items = ([(f"{doc['scenario']}@{t['distance']:g}", t["metrics"])
                      for t in doc["trials"]] if "trials" in doc
                     else [(doc["scenario"], doc["metrics"])])
            for name, m in items:
                rows.append((os.path.basename(os.path.normpath(run)), name, doc["seed"],
                             *(m[k] for k in REPORT_COLUMNS[3:])))
    out = args.out or "."
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise CliIOError(str(exc)) from None
    write_csv(os.path.join(out, "report.csv"), REPORT_COLUMNS, rows)
    text = _table(rows)
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK


def _table(rows) -> str:
    head = ["run", "scenario", "seed", "mean mm", "std mm", "max mm", "coverage",
            "mean z uT", "dev %", "slips", "losses", "valid"]

    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, bool):
            return "yes" if v else "no"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    cells = [head] + [[cell(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(head))]
    lines = ["  ".join(c[i].ljust(widths[i]) for i in range(len(head))).rstrip()
             for c in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cmd_defaults(args) -> int:
    print(json.dumps(cfgmod.defaults(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, metavar="N", help="override all seeds")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--noiseless", action="store_true", help="disable reading noise")
    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("--models", metavar="DIR",
                        help="directory with calibration models (default: --out)")

    ap = argparse.ArgumentParser(prog="whiskersim", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="grid calibration and model fit")
    sub.add_parser("sweep", parents=[common, models], help="flat-wall distance sweep")
    sub.add_parser("follow", parents=[common, models], help="closed-loop contour following")
    rp = sub.add_parser("report", help="combine metrics from run directories")
    rp.add_argument("runs", nargs="+", metavar="RUN_DIR")
    rp.add_argument("--out", metavar="DIR", help="where report.csv/.txt go (default: .)")
    sub.add_parser("defaults", help="print the default configuration")
    return ap


COMMANDS = {"calibrate": cmd_calibrate, "sweep": cmd_sweep, "follow": cmd_follow,
            "report": cmd_report, "defaults": cmd_defaults}

FIT_ERRORS = (cfgmod.ConfigError, CalibrationError, LocalizationError, GeometryError,
              WhiskerError, ControlError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FIT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CliIOError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
