"""Command-line front end.

Subcommands: synth, gyro-field, estimate, fuse, eval.  All numeric
configuration lives in JSON files referenced by flags; the few flags that
duplicate config values override them, so a finished run can always be
reproduced from its artifacts alone.

Exit codes: 0 success, 2 usage, 3 validation (bad inputs or missing files),
4 parse/format, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data_io import load_image, parse_gyro_log, read_flo, write_flo
from .errors import FormatError, NumericError, ParseError, ValidationError
from .estimator import EstimatorConfig, estimate_pyramid
from .field import FlowField
from .flow_ops import endpoint_error
from .fusion import FusionConfig, estimate_fused_flow
from .gyro_field import (
    DEFAULT_READOUT_NS,
    CameraIntrinsics,
    FrameTiming,
    build_homography_array,
    rasterize_gyro_field,
    smooth_homography_array,
)
from .synthetic import generate_synthetic_scene, save_bundle, spec_from_dict, with_seed

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_PARSE = 4
EXIT_NUMERIC = 5

EVAL_CATEGORIES = ("RE", "Dark", "Fog", "Rain")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_json(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: {exc}") from None


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{what} not found: {p}")
    return p


def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise ValidationError(f"size must look like 640x480, got {text!r}") from None


def _load_intrinsics(path: str | None, width: int, height: int) -> tuple[CameraIntrinsics, str]:
    if path is None:
        return CameraIntrinsics.default_for_size(width, height), "default_synthetic"
    d = _load_json(path)
    try:
        k = CameraIntrinsics(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            skew=float(d.get("skew", 0.0)),
        )
    except KeyError as exc:
        raise ValidationError(f"intrinsics file {path} is missing {exc}") from None
    return k, "file"


def _load_timing(path: str) -> tuple[FrameTiming, bool]:
    d = _load_json(path)
    defaulted = "readout_ns" not in d
    try:
        timing = FrameTiming(
            start_a_ns=int(d["start_a_ns"]),
            start_b_ns=int(d["start_b_ns"]),
            readout_ns=int(d.get("readout_ns", DEFAULT_READOUT_NS)),
        )
    except KeyError as exc:
        raise ValidationError(f"timing file {path} is missing {exc}") from None
    return timing, defaulted


def _load_run_config(path: str | None, args) -> tuple[EstimatorConfig, FusionConfig, dict]:
    est_kwargs: dict = {}
    fus_kwargs: dict = {}
    if path is not None:
        d = _load_json(path)
        est_kwargs.update(d.get("estimator", {}))
        fus_kwargs.update(d.get("fusion", {}))
    if getattr(args, "levels", None) is not None:
        est_kwargs["levels"] = args.levels
    if getattr(args, "iterations", None) is not None:
        est_kwargs["iterations"] = args.iterations
    if "levels" in fus_kwargs and fus_kwargs["levels"] is not None:
        fus_kwargs["levels"] = tuple(fus_kwargs["levels"])
    try:
        est = EstimatorConfig(**est_kwargs)
        fus = FusionConfig(**fus_kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}") from None
    resolved = {"estimator": asdict(est), "fusion": asdict(fus)}
    if resolved["fusion"]["levels"] is not None:
        resolved["fusion"]["levels"] = list(resolved["fusion"]["levels"])
    return est, fus, resolved


def _compute_gyro_field(log_path, timing_path, intrinsics_path, width, height, patches):
    log = parse_gyro_log(_require_file(log_path, "gyro log"))
    timing, readout_defaulted = _load_timing(_require_file(timing_path, "timing file"))
    intrinsics, intr_source = _load_intrinsics(intrinsics_path, width, height)
    array = build_homography_array(
        log.samples, timing, intrinsics, width, height, patch_count=patches
    )
    smoothed = smooth_homography_array(array)
    field = rasterize_gyro_field(smoothed)
    sidecar = {
        "size": [width, height],
        "patch_count": array.patch_count,
        "readout_ns": timing.readout_ns,
        "readout_defaulted": readout_defaulted,
        "intrinsics_source": intr_source,
        "intrinsics": {
            "fx": intrinsics.fx,
            "fy": intrinsics.fy,
            "cx": intrinsics.cx,
            "cy": intrinsics.cy,
            "skew": intrinsics.skew,
        },
        "homographies": [p.tolist() for p in array.patches],
        "rotations": [[q.w, q.x, q.y, q.z] for q in (array.rotations or [])],
    }
    return field, sidecar


def cmd_synth(args) -> int:
    spec = spec_from_dict(_load_json(_require_file(args.spec, "scene spec")))
    if args.seed is not None:
        spec = with_seed(spec, args.seed)
    bundle = generate_synthetic_scene(spec)
    save_bundle(bundle, args.out)
    print(f"wrote scene ({bundle.category}) to {args.out}")
    return EXIT_OK


def cmd_gyro_field(args) -> int:
    width, height = _parse_size(args.size)
    field, sidecar = _compute_gyro_field(
        args.log, args.timing, args.intrinsics, width, height, args.patches
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_flo(field, out)
    _dump_json(sidecar, out.with_suffix(".json"))
    print(f"wrote gyro field {width}x{height} to {out}")
    return EXIT_OK


def _write_flow_result(flow: FlowField, out_path: Path, sidecar: dict) -> None:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_flo(flow, out_path)
    _dump_json(sidecar, out_path.with_suffix(".json"))


def cmd_estimate(args) -> int:
    frame_a = load_image(_require_file(args.frame_a, "frame a"))
    frame_b = load_image(_require_file(args.frame_b, "frame b"))
    if frame_a.shape[:2] != frame_b.shape[:2]:
        raise ValidationError(
            f"frame sizes differ: {frame_a.shape[:2]} vs {frame_b.shape[:2]}"
        )
    est, _fus, resolved = _load_run_config(args.config, args)
    start = time.perf_counter()
    flow = estimate_pyramid(frame_a, frame_b, est)
    runtime = time.perf_counter() - start
    sidecar = {
        "mode": "estimate",
        "config": resolved["estimator"],
        "config_hash": _config_hash(resolved["estimator"]),
        "inputs": [str(args.frame_a), str(args.frame_b)],
        "runtime_seconds": runtime,
    }
    _write_flow_result(flow, Path(args.out), sidecar)
    print(f"wrote flow to {args.out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    frame_a = load_image(_require_file(args.frame_a, "frame a"))
    frame_b = load_image(_require_file(args.frame_b, "frame b"))
    if frame_a.shape[:2] != frame_b.shape[:2]:
        raise ValidationError(
            f"frame sizes differ: {frame_a.shape[:2]} vs {frame_b.shape[:2]}"
        )
    height, width = frame_a.shape[:2]
    gyro_field, gyro_sidecar = _compute_gyro_field(
        args.log, args.timing, args.intrinsics, width, height, args.patches
    )
    est, fus, resolved = _load_run_config(args.config, args)
    start = time.perf_counter()
    flow = estimate_fused_flow(frame_a, frame_b, gyro_field, est, fus)
    runtime = time.perf_counter() - start
    sidecar = {
        "mode": "fuse",
        "config": resolved,
        "config_hash": _config_hash(resolved),
        "inputs": [str(args.frame_a), str(args.frame_b), str(args.log)],
        "gyro_field": {k: gyro_sidecar[k] for k in ("patch_count", "readout_ns", "readout_defaulted", "intrinsics_source")},
        "runtime_seconds": runtime,
    }
    _write_flow_result(flow, Path(args.out), sidecar)
    print(f"wrote fused flow to {args.out}")
    return EXIT_OK


def _load_manifest(path: Path) -> dict[str, str]:
    raw = _load_json(path)
    if isinstance(raw, dict):
        entries = raw.items()
    elif isinstance(raw, list):
        try:
            entries = [(e["name"], e["category"]) for e in raw]
        except (TypeError, KeyError):
            raise ValidationError(f"manifest {path} entries need name and category") from None
    else:
        raise ValidationError(f"manifest {path} must be an object or a list")
    return {str(n): str(c) for n, c in entries}


def cmd_eval(args) -> int:
    pred_dir = _require_file(args.pred, "prediction directory")
    gt_dir = _require_file(args.gt, "ground-truth directory")
    manifest = _load_manifest(_require_file(args.manifest, "manifest"))

    problems = []
    pairs = []
    for name in sorted(manifest):
        pred_path = Path(pred_dir) / f"{name}.flo"
        gt_path = Path(gt_dir) / f"{name}.flo"
        if not pred_path.exists():
            problems.append(f"missing prediction: {pred_path}")
        if not gt_path.exists():
            problems.append(f"missing ground truth: {gt_path}")
        if pred_path.exists() and gt_path.exists():
            pairs.append((name, manifest[name], pred_path, gt_path))
    if problems:
        raise ValidationError("unmatched evaluation pairs:\n  " + "\n  ".join(problems))
    if not pairs:
        raise ValidationError("manifest lists no evaluation pairs")

    rows = []
    for name, category, pred_path, gt_path in pairs:
        pred = read_flo(pred_path)
        gt = read_flo(gt_path)
        mean_epe, _ = endpoint_error(pred, gt)
        rows.append((name, category, mean_epe))

    by_category: dict[str, list[float]] = {}
    for _, category, epe in rows:
        by_category.setdefault(category, []).append(epe)

    columns = [c for c in EVAL_CATEGORIES if c in by_category]
    columns += sorted(set(by_category) - set(EVAL_CATEGORIES))
    header = columns + ["Avg"]
    means = {c: float(np.mean(by_category[c])) for c in columns}
    overall = float(np.mean([epe for _, _, epe in rows]))

    widths = [max(len(h), 7) for h in header]
    line1 = "  ".join(h.rjust(w) for h, w in zip(header, widths))
    line2 = "  ".join(
        (f"{means[c]:.3f}" if c != "Avg" else f"{overall:.3f}").rjust(w)
        for c, w in zip(header, widths)
    )
    print(line1)
    print(line2)

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        lines = ["name,category,epe"]
        lines += [f"{n},{c},{e:.6f}" for n, c, e in rows]
        lines.append("")
        lines.append("category,mean_epe,count")
        lines += [f"{c},{means[c]:.6f},{len(by_category[c])}" for c in columns]
        lines.append(f"Avg,{overall:.6f},{len(rows)}")
        out.write_text("\n".join(lines) + "\n")
        print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gyrofuse",
        description="Gyro motion fields, image flow, and their fusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene bundle")
    p.add_argument("--spec", required=True, help="scene spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gyro-field", help="rasterize a gyro log into a flow field")
    p.add_argument("--log", required=True, help="gyro log text file")
    p.add_argument("--timing", required=True, help="frame timing JSON")
    p.add_argument("--intrinsics", default=None, help="camera intrinsics JSON")
    p.add_argument("--size", required=True, help="frame size WxH, e.g. 800x600")
    p.add_argument("--patches", type=int, default=14, help="row patches (default 14)")
    p.add_argument("--out", required=True, help="output .flo path")
    p.set_defaults(func=cmd_gyro_field)

    p = sub.add_parser("estimate", help="image-only pyramid flow")
    p.add_argument("--frame-a", required=True)
    p.add_argument("--frame-b", required=True)
    p.add_argument("--config", default=None, help="estimator/fusion config JSON")
    p.add_argument("--levels", type=int, default=None, help="override pyramid levels")
    p.add_argument("--iterations", type=int, default=None, help="override iterations per level")
    p.add_argument("--out", required=True, help="output .flo path")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fuse", help="gyro-seeded fused flow")
    p.add_argument("--frame-a", required=True)
    p.add_argument("--frame-b", required=True)
    p.add_argument("--log", required=True, help="gyro log text file")
    p.add_argument("--timing", required=True, help="frame timing JSON")
    p.add_argument("--intrinsics", default=None, help="camera intrinsics JSON")
    p.add_argument("--patches", type=int, default=14)
    p.add_argument("--config", default=None, help="estimator/fusion config JSON")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", required=True, help="output .flo path")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="endpoint-error table over matched .flo pairs")
    p.add_argument("--pred", required=True, help="directory of predicted .flo files")
    p.add_argument("--gt", required=True, help="directory of ground-truth .flo files")
    p.add_argument("--manifest", required=True, help="JSON mapping name -> category")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (ParseError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
