import shutil
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from sparsepush.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main

ROOT = Path(__file__).resolve().parents[1]


def _write(tmp_path, **train):
    doc = {
        "version": 1,
        "output_dir": str(tmp_path / "out"),
        "dataset": {"num_classes": 2, "per_class": 20, "test_per_class": 10, "d_in": 2},
        "train": {"epochs": 1, "sgd": {"batch_size": 4}, **train},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path))]) == EXIT_OK
    assert "1 cell" in capsys.readouterr().out


def test_validate_bad_eta(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, eta=1.5))]) == EXIT_INVALID
    assert "train.eta" in capsys.readouterr().err


def test_run_with_overrides(tmp_path, capsys):
    cfg = _write(tmp_path)
    out = tmp_path / "elsewhere"
    assert main(["run", str(cfg), "--output", str(out), "--epochs", "2", "--seed", "3"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == str(out / "sweep.csv")
    assert "seed3" in (out / "sweep.csv").read_text()
    runlog = next(out.glob("*/runlog.csv")).read_text().splitlines()
    assert len(runlog) == 3


def test_run_numerical_failure_exit(tmp_path, monkeypatch, capsys):
    import sparsepush.harness as h
    from sparsepush.errors import NumericalFailure

    def broken(*args, **kwargs):
        raise NumericalFailure("weights collapsed")

    monkeypatch.setattr(h, "scsp_train", broken)
    assert main(["run", str(_write(tmp_path))]) == EXIT_NUMERICAL
    assert "weights collapsed" in capsys.readouterr().err


def test_plot_data(tmp_path, capsys):
    cfg = _write(tmp_path)
    main(["run", str(cfg)])
    capsys.readouterr()
    assert main(["plot-data", str(tmp_path / "out" / "sweep.csv")]) == EXIT_OK
    assert (tmp_path / "out" / "plot_data.csv").exists()
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["plot-data", str(bad)]) == EXIT_INVALID


def test_consensus_demo_converges(capsys):
    assert main(["consensus-demo", "--nodes", "5", "--rounds", "300"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "round,max_error,min_u,max_u"
    assert len(lines) == 301
    assert float(lines[-1].split(",")[1]) < 1e-8


def test_consensus_demo_rotating(capsys):
    assert main(["consensus-demo", "--rotating", "--rounds", "400", "--eta", "0.9"]) == EXIT_OK
    last = capsys.readouterr().out.strip().splitlines()[-1].split(",")
    assert float(last[1]) < 1e-8
    assert main(["consensus-demo", "--nodes", "3", "--rotating"]) == EXIT_INVALID
    assert main(["consensus-demo", "--eta", "0"]) == EXIT_INVALID


def test_demo_config_validates():
    assert main(["validate", str(ROOT / "configs" / "demo.yaml")]) == EXIT_OK


@pytest.mark.skipif(shutil.which("sparsepush") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["sparsepush", "consensus-demo", "--rounds", "2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.count("\n") == 3


def test_module_entry():
    proc = subprocess.run([sys.executable, "-m", "sparsepush.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sparsepush" in proc.stdout
