import json

import numpy as np
import pytest

from radiomamba.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main
from radiomamba.data import load_dataset, read_f32grid, read_manifest


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--seed", "3", "--grid", "32", "--count", "4", "--val", "2", "--test", "2",
                 "--out", str(root)]) == EXIT_OK
    return root


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--data", str(dataset), "--out", str(out), "--base-channels", "4", "--state-dim", "2",
                 "--steps", "4", "--batch-size", "2", "--val-every", "2", "--seed", "1"])
    assert code == EXIT_OK
    return out


class TestSynth:
    def test_layout_and_manifest(self, dataset):
        m = read_manifest(dataset)
        assert (m["mode"], m["grid"], m["train"], m["val"], m["test"]) == ("SRM", 32, 4, 2, 2)
        assert len(load_dataset(dataset, "train")) == 4
        assert not list(dataset.rglob("vehicles.png"))

    def test_deterministic(self, dataset, tmp_path):
        main(["synth", "--seed", "3", "--grid", "32", "--count", "4", "--val", "2", "--test", "2",
              "--out", str(tmp_path / "again")])
        assert tree_bytes(dataset) == tree_bytes(tmp_path / "again")

    def test_drm_writes_vehicles(self, tmp_path):
        assert main(["synth", "--grid", "32", "--mode", "drm", "--count", "2", "--out", str(tmp_path)]) == EXIT_OK
        assert len(list(tmp_path.rglob("vehicles.png"))) == 2

    def test_grid_16_rejected(self, tmp_path, capsys):
        assert main(["synth", "--grid", "16", "--count", "1", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "at least 32" in capsys.readouterr().err

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["synth", "--grid", "32", "--count", "1", "--out", str(blocker / "sub")]) == EXIT_DATA


class TestTrain:
    def test_outputs(self, trained):
        for name in ("config.txt", "train.csv", "val.csv", "last.ckpt", "best.ckpt", "summary.json"):
            assert (trained / name).is_file()
        assert (trained / "train.csv").read_text().splitlines()[0] == "step,lr,loss,l1,mse,ssim_loss,grad_loss"

    def test_resolved_config_defaults(self, trained):
        text = (trained / "config.txt").read_text()
        assert "train.loss_weights=0.4,0.1,0.2,0.3\n" in text
        assert "model.conv_variant=depthwise_separable\n" in text
        assert "model.base_channels=4\n" in text

    def test_flag_beats_config_file(self, dataset, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# overlay\nmodel.base_channels=6\nmodel.state_dim=3\ntrain.steps=1\ntrain.batch_size=2\n")
        out = tmp_path / "run"
        assert main(["train", "--data", str(dataset), "--out", str(out), "--config", str(cfg),
                     "--base-channels", "4", "--conv-variant", "standard", "--loss-weights", "0.5,0.5,0,0"]) == EXIT_OK
        text = (out / "config.txt").read_text()
        assert "model.base_channels=4\n" in text and "model.state_dim=3\n" in text
        assert "model.conv_variant=standard\n" in text and "train.loss_weights=0.5,0.5,0.0,0.0\n" in text

    def test_echoed_config_reproduces_run(self, dataset, trained, tmp_path):
        out = tmp_path / "replay"
        assert main(["train", "--data", str(dataset), "--out", str(out),
                     "--config", str(trained / "config.txt")]) == EXIT_OK
        assert (out / "last.ckpt").read_bytes() == (trained / "last.ckpt").read_bytes()

    @pytest.mark.parametrize("flags", [["--grid", "64"], ["--mode", "DRM"], ["--loss-weights", "1,2"],
                                       ["--conv-variant", "standard", "--steps", "0"]])
    def test_config_errors(self, dataset, tmp_path, flags):
        assert main(["train", "--data", str(dataset), "--out", str(tmp_path)] + flags) == EXIT_CONFIG

    def test_unknown_config_key(self, dataset, tmp_path):
        (tmp_path / "c.cfg").write_text("model.width=3\n")
        assert main(["train", "--data", str(dataset), "--out", str(tmp_path), "--config",
                     str(tmp_path / "c.cfg")]) == EXIT_CONFIG

    def test_missing_data(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == EXIT_DATA


class TestInferEval:
    def test_infer_shapes_and_timing(self, dataset, trained, tmp_path):
        assert main(["infer", "--ckpt", str(trained / "best.ckpt"), "--input-dir", str(dataset / "test"),
                     "--out", str(tmp_path)]) == EXIT_OK
        preds = sorted(tmp_path.rglob("pred_0.f32grid"))
        assert len(preds) == 2
        assert all(read_f32grid(p).shape == (32, 32) for p in preds)
        rows = (tmp_path / "timing.csv").read_text().splitlines()
        assert rows[0] == "sample,seconds" and len(rows) == 3

    def test_eval_report(self, dataset, trained, tmp_path):
        stem = tmp_path / "report"
        assert main(["eval", "--ckpt", str(trained / "best.ckpt"), "--data", str(dataset), "--split", "test",
                     "--report", str(stem)]) == EXIT_OK
        report = json.loads(stem.with_suffix(".json").read_text())
        assert set(report["metrics"]) == {"nmse", "rmse", "ssim", "psnr"}
        assert set(report["baselines"]) == {"free-space", "mean-target"}
        lat = report["latency"]
        assert lat["runs"] >= 20 and lat["warmup"] == 3
        assert lat["mean_s"] > 0 and lat["median_s"] <= lat["p95_s"]
        assert "p95" in stem.with_suffix(".txt").read_text()

    def test_ground_truth_self_comparison(self, dataset, tmp_path):
        stem = tmp_path / "gt"
        assert main(["eval", "--data", str(dataset), "--predictor", "ground-truth", "--report", str(stem)]) == EXIT_OK
        m = json.loads(stem.with_suffix(".json").read_text())["metrics"]
        assert m["nmse"] == 0.0 and m["ssim"] == pytest.approx(1.0, abs=1e-12)

    def test_model_predictor_needs_checkpoint(self, dataset, tmp_path):
        assert main(["eval", "--data", str(dataset), "--report", str(tmp_path / "r")]) == EXIT_CONFIG

    def test_corrupt_checkpoint(self, dataset, tmp_path):
        (tmp_path / "bad.ckpt").write_bytes(b"NOPE" + bytes(20))
        assert main(["eval", "--ckpt", str(tmp_path / "bad.ckpt"), "--data", str(dataset),
                     "--report", str(tmp_path / "r")]) == EXIT_DATA


class TestGradcheckBench:
    def test_ops_scope_passes(self, capsys):
        assert main(["gradcheck", "--scope", "ops", "--tol", "1e-4"]) == EXIT_OK
        assert "passed at tol 0.0001" in capsys.readouterr().out

    def test_negative_control_fails(self):
        assert main(["gradcheck", "--scope", "ops", "--corrupt-backward"]) == EXIT_NUMERIC

    def test_bench_report(self, tmp_path):
        stem = tmp_path / "bench"
        assert main(["bench", "--scan-lengths", "64,128,256", "--channels", "4", "--repeats", "1",
                     "--report", str(stem)]) == EXIT_OK
        report = json.loads(stem.with_suffix(".json").read_text())
        assert set(report["modes"]) == {"sequential", "parallel"}
        assert all(np.isfinite(m["slope"]) for m in report["modes"].values())

    def test_bench_needs_two_lengths(self):
        assert main(["bench", "--scan-lengths", "256"]) == EXIT_CONFIG


class TestThreads:
    def test_warning_above_one(self, capsys):
        assert main(["--threads", "2", "gradcheck", "--scope", "block"]) == EXIT_OK
        assert "bit-reproducible only with --threads 1" in capsys.readouterr().err

    def test_non_positive_rejected(self):
        assert main(["--threads", "0", "gradcheck"]) == EXIT_CONFIG

    def test_module_entry_point(self):
        import subprocess
        import sys
        res = subprocess.run([sys.executable, "-m", "radiomamba.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "gradcheck" in res.stdout
