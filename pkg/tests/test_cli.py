import json
import subprocess
import sys

import pytest

from skdistill.cli import main
from skdistill.config import RunConfig, TrainConfig, save_run_config
from skdistill.data import CorpusSpec
from skdistill.models import ModelConfig


@pytest.fixture()
def tiny_run(tmp_path):
    run = RunConfig(
        model=ModelConfig([1, 1], base_channels=6, unified_dim=4, input_channels=1),
        student_model=ModelConfig([1, 1], base_channels=4, unified_dim=4, input_channels=1),
        train=TrainConfig(epochs=2, batch_size=4, eval_interval=50, seed=3),
        data=CorpusSpec(count=8, patch_size=16, task="denoise", noise_sigma=0.1, base_seed=3),
    )
    path = tmp_path / "run.json"
    save_run_config(run, path)
    return run, path


def write_model_config(tmp_path, name, layers, channels):
    run = RunConfig(model=ModelConfig(layers, channels, channels, 1))
    path = tmp_path / name
    save_run_config(run, path)
    return path


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["count", "--config", "x.json", "--bogus"])
        assert exc.value.code == 2

    def test_runtime_error_exits_1(self, tmp_path, capsys):
        code = main(["count", "--config", str(tmp_path / "missing.json")])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestCount:
    def test_reference_reduction(self, tmp_path, capsys):
        teacher = write_model_config(tmp_path, "teacher.json", [4, 6, 6, 8], 48)
        student = write_model_config(tmp_path, "student.json", [1, 2, 2, 4], 32)
        assert main(["count", "--config", str(teacher), "--baseline", str(student)]) == 0
        out = capsys.readouterr().out
        reduction_line = [l for l in out.splitlines() if l.startswith("reduction")][0]
        numbers = [float(tok.split("=")[1].rstrip("%"))
                   for tok in reduction_line.split()[1:]]
        assert all(80.0 <= n <= 90.0 for n in numbers)

    def test_count_without_baseline(self, tmp_path, capsys):
        teacher = write_model_config(tmp_path, "teacher.json", [1, 1], 8)
        assert main(["count", "--config", str(teacher), "--size", "16"]) == 0
        assert "params=" in capsys.readouterr().out


class TestSynthEval:
    def test_synth_writes_pairs_and_manifest(self, tiny_run, tmp_path, capsys):
        _, cfg_path = tiny_run
        out_dir = tmp_path / "data"
        assert main(["synth", "--task", "denoise", "--spec", str(cfg_path),
                     "--out", str(out_dir)]) == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["task"] == "denoise"
        assert (out_dir / "00000_clean.pgm").exists()
        assert (out_dir / "00007_degraded.pgm").exists()

    def test_full_pipeline_and_eval_determinism(self, tiny_run, tmp_path, capsys):
        _, cfg_path = tiny_run
        data_dir = tmp_path / "data"
        teacher_path = tmp_path / "teacher.skdc"
        student_path = tmp_path / "student.skdc"
        assert main(["synth", "--spec", str(cfg_path), "--out", str(data_dir)]) == 0
        assert main(["train-teacher", "--config", str(cfg_path),
                     "--out", str(teacher_path)]) == 0
        assert teacher_path.exists()
        assert main(["distill", "--config", str(cfg_path), "--teacher", str(teacher_path),
                     "--out", str(student_path)]) == 0
        assert student_path.exists()
        rep1, rep2 = tmp_path / "r1.json", tmp_path / "r2.json"
        assert main(["eval", "--ckpt", str(student_path), "--data", str(data_dir),
                     "--report", str(rep1)]) == 0
        assert main(["eval", "--ckpt", str(student_path), "--data", str(data_dir),
                     "--report", str(rep2)]) == 0
        assert rep1.read_bytes() == rep2.read_bytes()
        report = json.loads(rep1.read_text())
        assert set(report) == {"task", "psnr", "ssim", "params", "flops",
                               "steps", "config_hash"}
        assert report["task"] == "denoise"

    def test_seed_flag_changes_outputs(self, tiny_run, tmp_path):
        _, cfg_path = tiny_run
        a, b = tmp_path / "a", tmp_path / "b"
        main(["synth", "--spec", str(cfg_path), "--out", str(a), "--seed", "1"])
        main(["synth", "--spec", str(cfg_path), "--out", str(b), "--seed", "2"])
        assert (a / "00000_clean.pgm").read_bytes() != (b / "00000_clean.pgm").read_bytes()

    def test_synth_threads_deterministic(self, tiny_run, tmp_path):
        _, cfg_path = tiny_run
        a, b = tmp_path / "a", tmp_path / "b"
        main(["synth", "--spec", str(cfg_path), "--out", str(a)])
        main(["synth", "--spec", str(cfg_path), "--out", str(b), "--threads", "4"])
        assert (a / "00003_degraded.pgm").read_bytes() == (b / "00003_degraded.pgm").read_bytes()


def test_gradcheck_command_exit_zero(capsys):
    assert main(["gradcheck", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "trials" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "skdistill", "--help"],
                          capture_output=True, text=True, cwd="/root/pkg")
    assert proc.returncode == 0
    assert "synth" in proc.stdout
