import json

import numpy as np
import pytest

import gyrofuse as gf
from gyrofuse.cli import main
from gyrofuse.synthetic import spec_to_dict

from conftest import pipeline_gyro_field, suite_scene_spec


def write_json(path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def base_scene_files(tmp_path, spec=None):
    """Render a scene via the CLI and return its directory."""
    if spec is None:
        spec = suite_scene_spec(1, "none", 0.0)
    spec_path = tmp_path / "spec.json"
    write_json(spec_path, spec_to_dict(spec))
    out = tmp_path / "scene"
    assert main(["synth", "--spec", str(spec_path), "--out", str(out)]) == 0
    return out, spec


def timing_json(tmp_path, bundle_dir):
    meta = json.loads((bundle_dir / "scene.json").read_text())
    path = tmp_path / "timing.json"
    write_json(path, meta["timing"])
    intr = tmp_path / "intrinsics.json"
    write_json(intr, meta["intrinsics"])
    return path, intr


class TestSynth:
    def test_writes_complete_bundle(self, tmp_path):
        out, _ = base_scene_files(tmp_path)
        for name in ("frame_a.png", "frame_b.png", "gyro.txt", "gt.flo", "valid_mask.png", "scene.json"):
            assert (out / name).exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        out, spec = base_scene_files(tmp_path)
        spec_path = tmp_path / "spec.json"
        out2 = tmp_path / "scene2"
        assert main(["synth", "--spec", str(spec_path), "--out", str(out2)]) == 0
        for name in ("frame_a.png", "frame_b.png", "gyro.txt", "gt.flo", "valid_mask.png", "scene.json"):
            assert (out / name).read_bytes() == (out2 / name).read_bytes()

    def test_off_frame_rectangle_is_validation_error(self, tmp_path):
        spec = gf.SceneSpec(
            width=64,
            height=64,
            rect=gf.RectSpec(x=500, y=500, width=8, height=8, motion=(0.0, 0.0)),
        )
        spec_path = tmp_path / "bad.json"
        write_json(spec_path, spec_to_dict(spec))
        assert main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "x")]) == 3

    def test_seed_override(self, tmp_path):
        out, spec = base_scene_files(tmp_path)
        out2 = tmp_path / "reseeded"
        assert (
            main(["synth", "--spec", str(tmp_path / "spec.json"), "--out", str(out2), "--seed", "77"]) == 0
        )
        assert (out / "frame_a.png").read_bytes() != (out2 / "frame_a.png").read_bytes()


class TestGyroField:
    def test_zero_log_gives_zero_field(self, tmp_path):
        log = tmp_path / "gyro.txt"
        log.write_text("".join(f"{i * 5_000_000} 0 0 0\n" for i in range(16)))
        write_json(tmp_path / "timing.json", {"start_a_ns": 10_000_000, "start_b_ns": 43_000_000, "readout_ns": 25_000_000})
        out = tmp_path / "field.flo"
        code = main([
            "gyro-field", "--log", str(log), "--timing", str(tmp_path / "timing.json"),
            "--size", "64x48", "--out", str(out),
        ])
        assert code == 0
        field = gf.read_flo(out)
        assert (field.width, field.height) == (64, 48)
        assert not np.any(field.vectors)
        sidecar = json.loads(out.with_suffix(".json").read_text())
        assert sidecar["patch_count"] == 14
        assert sidecar["intrinsics_source"] == "default_synthetic"
        assert len(sidecar["homographies"]) == 14
        assert len(sidecar["rotations"]) == 14

    def test_missing_log_reports_path(self, tmp_path, capsys):
        write_json(tmp_path / "timing.json", {"start_a_ns": 0, "start_b_ns": 1, "readout_ns": 0})
        code = main([
            "gyro-field", "--log", str(tmp_path / "absent.txt"),
            "--timing", str(tmp_path / "timing.json"), "--size", "64x48",
            "--out", str(tmp_path / "f.flo"),
        ])
        assert code == 3
        assert "absent.txt" in capsys.readouterr().err

    def test_cli_matches_library(self, tmp_path):
        out, spec = base_scene_files(tmp_path)
        timing, intr = timing_json(tmp_path, out)
        flo = tmp_path / "field.flo"
        code = main([
            "gyro-field", "--log", str(out / "gyro.txt"), "--timing", str(timing),
            "--intrinsics", str(intr), "--size", "128x128", "--out", str(flo),
        ])
        assert code == 0
        bundle = gf.load_bundle(out)
        expected = pipeline_gyro_field(bundle)
        got = gf.read_flo(flo)
        assert np.max(np.abs(got.vectors - expected.vectors)) < 1e-6

    def test_defaulted_readout_is_flagged(self, tmp_path):
        log = tmp_path / "gyro.txt"
        log.write_text("".join(f"{i * 5_000_000} 0 0 0\n" for i in range(16)))
        write_json(tmp_path / "timing.json", {"start_a_ns": 10_000_000, "start_b_ns": 43_000_000})
        out = tmp_path / "field.flo"
        assert main([
            "gyro-field", "--log", str(log), "--timing", str(tmp_path / "timing.json"),
            "--size", "64x48", "--out", str(out),
        ]) == 0
        sidecar = json.loads(out.with_suffix(".json").read_text())
        assert sidecar["readout_defaulted"] is True
        assert sidecar["readout_ns"] == 25_000_000


class TestEstimateAndFuse:
    def test_identical_frames_near_zero_flow(self, tmp_path):
        img = (np.arange(64 * 64).reshape(64, 64) % 17) / 17.0 * 0.8
        gf.save_image(img, tmp_path / "a.png")
        out = tmp_path / "flow.flo"
        code = main([
            "estimate", "--frame-a", str(tmp_path / "a.png"), "--frame-b", str(tmp_path / "a.png"),
            "--levels", "3", "--out", str(out),
        ])
        assert code == 0
        flow = gf.read_flo(out)
        assert np.abs(flow.vectors).max() < 0.05
        sidecar = json.loads(out.with_suffix(".json").read_text())
        assert sidecar["mode"] == "estimate"
        assert "config_hash" in sidecar and "runtime_seconds" in sidecar

    def test_fuse_beats_image_only_on_bundle(self, tmp_path):
        out, spec = base_scene_files(tmp_path)
        timing, intr = timing_json(tmp_path, out)
        est_out = tmp_path / "est.flo"
        fuse_out = tmp_path / "fused.flo"
        common = ["--frame-a", str(out / "frame_a.png"), "--frame-b", str(out / "frame_b.png"), "--levels", "4"]
        assert main(["estimate", *common, "--out", str(est_out)]) == 0
        assert main([
            "fuse", *common, "--log", str(out / "gyro.txt"), "--timing", str(timing),
            "--intrinsics", str(intr), "--out", str(fuse_out),
        ]) == 0
        gt = gf.read_flo(out / "gt.flo")
        epe_est, _ = gf.endpoint_error(gf.read_flo(est_out), gt)
        epe_fused, _ = gf.endpoint_error(gf.read_flo(fuse_out), gt)
        assert epe_fused < epe_est

    def test_fuse_without_gyro_inputs_is_usage_error(self, tmp_path):
        code = main(["fuse", "--frame-a", "a.png", "--frame-b", "b.png", "--out", "x.flo"])
        assert code == 2

    def test_size_mismatch_is_validation_error(self, tmp_path):
        gf.save_image(np.zeros((16, 16)), tmp_path / "a.png")
        gf.save_image(np.zeros((16, 24)), tmp_path / "b.png")
        code = main([
            "estimate", "--frame-a", str(tmp_path / "a.png"), "--frame-b", str(tmp_path / "b.png"),
            "--out", str(tmp_path / "x.flo"),
        ])
        assert code == 3

    def test_config_file_with_flag_override(self, tmp_path):
        img = (np.arange(48 * 48).reshape(48, 48) % 13) / 13.0 * 0.8
        gf.save_image(img, tmp_path / "a.png")
        write_json(tmp_path / "cfg.json", {"estimator": {"levels": 2, "iterations": 2}})
        out = tmp_path / "flow.flo"
        code = main([
            "estimate", "--frame-a", str(tmp_path / "a.png"), "--frame-b", str(tmp_path / "a.png"),
            "--config", str(tmp_path / "cfg.json"), "--levels", "1", "--out", str(out),
        ])
        assert code == 0
        sidecar = json.loads(out.with_suffix(".json").read_text())
        assert sidecar["config"]["levels"] == 1  # flag wins
        assert sidecar["config"]["iterations"] == 2  # file value kept


class TestEval:
    def make_pair(self, tmp_path, name, pred_vec, gt_vec):
        (tmp_path / "pred").mkdir(exist_ok=True)
        (tmp_path / "gt").mkdir(exist_ok=True)
        gf.write_flo(gf.FlowField.constant(8, 8, pred_vec), tmp_path / "pred" / f"{name}.flo")
        gf.write_flo(gf.FlowField.constant(8, 8, gt_vec), tmp_path / "gt" / f"{name}.flo")

    def run_eval(self, tmp_path, manifest):
        write_json(tmp_path / "manifest.json", manifest)
        return main([
            "eval", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
            "--manifest", str(tmp_path / "manifest.json"), "--out", str(tmp_path / "table.csv"),
        ])

    def test_perfect_predictions_zero_table(self, tmp_path, capsys):
        self.make_pair(tmp_path, "s0", (1.0, 2.0), (1.0, 2.0))
        self.make_pair(tmp_path, "s1", (0.5, 0.0), (0.5, 0.0))
        assert self.run_eval(tmp_path, {"s0": "RE", "s1": "Dark"}) == 0
        out = capsys.readouterr().out
        assert "0.000" in out
        csv = (tmp_path / "table.csv").read_text()
        assert "Avg,0.000000,2" in csv

    def test_offset_three_four_gives_five(self, tmp_path, capsys):
        self.make_pair(tmp_path, "s0", (3.0, 4.0), (0.0, 0.0))
        assert self.run_eval(tmp_path, {"s0": "Rain"}) == 0
        assert "5.000" in capsys.readouterr().out

    def test_weighted_average_over_categories(self, tmp_path, capsys):
        # two RE pairs at EPE 1.0, one Fog pair at EPE 4.0 -> Avg = 2.0
        self.make_pair(tmp_path, "a", (1.0, 0.0), (0.0, 0.0))
        self.make_pair(tmp_path, "b", (0.0, 1.0), (0.0, 0.0))
        self.make_pair(tmp_path, "c", (0.0, 4.0), (0.0, 0.0))
        assert self.run_eval(tmp_path, {"a": "RE", "b": "RE", "c": "Fog"}) == 0
        csv = (tmp_path / "table.csv").read_text()
        assert "RE,1.000000,2" in csv
        assert "Fog,4.000000,1" in csv
        assert "Avg,2.000000,3" in csv

    def test_unmatched_pairs_listed(self, tmp_path, capsys):
        self.make_pair(tmp_path, "a", (0.0, 0.0), (0.0, 0.0))
        assert self.run_eval(tmp_path, {"a": "RE", "missing": "RE"}) == 3
        err = capsys.readouterr().err
        assert "missing.flo" in err

    def test_corrupt_flo_is_parse_error(self, tmp_path):
        self.make_pair(tmp_path, "a", (0.0, 0.0), (0.0, 0.0))
        (tmp_path / "pred" / "a.flo").write_bytes(b"garbage here" + b"\0" * 8)
        assert self.run_eval(tmp_path, {"a": "RE"}) == 4


class TestExitCodes:
    def test_unknown_subcommand_is_usage(self):
        assert main(["frobnicate"]) == 2

    def test_bad_size_string(self, tmp_path):
        log = tmp_path / "gyro.txt"
        log.write_text("0 0 0 0\n1000 0 0 0\n")
        write_json(tmp_path / "timing.json", {"start_a_ns": 0, "start_b_ns": 1000, "readout_ns": 0})
        code = main([
            "gyro-field", "--log", str(log), "--timing", str(tmp_path / "timing.json"),
            "--size", "64by48", "--out", str(tmp_path / "f.flo"),
        ])
        assert code == 3

    def test_bad_json_is_parse_error(self, tmp_path):
        (tmp_path / "spec.json").write_text("{not json")
        assert main(["synth", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "o")]) == 4
