import json
import subprocess
import sys

import numpy as np
import pytest

from lpbf_twin import __version__
from lpbf_twin.cli import main
from lpbf_twin.container import FORMAT_VERSION

TINY_TRAIN = ["--layers", "1", "--width", "4", "--modes", "4", "--proj-width", "8",
              "--epochs", "2", "--batch-size", "4"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 and out.strip() else None), err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthetic corpus plus tiny models trained through the command line."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth-data", "--out", str(d), "--n-train", "12", "--n-val", "4"]) == 0
    assert main(["train", "--out", str(d), "--data", str(d / "synthetic.lpbf"), "--seed", "7",
                 *TINY_TRAIN]) == 0
    return d


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and out == {"lpbf_twin": __version__, "container_format": FORMAT_VERSION}


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "lpbf_twin", "--version"], capture_output=True,
                       text=True, check=True)
    assert json.loads(r.stdout)["lpbf_twin"] == __version__


@pytest.mark.parametrize("argv", [["bogus"], [], ["window", "--grid", "40by25"],
                                  ["train", "--out", "x"]])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and json.loads(err)["error"] == "usage"


def test_missing_model_is_json_error(capsys, tmp_path):
    code, _, err = run(capsys, "predict", "--out", tmp_path)
    assert code == 1 and json.loads(err)["error"] == "FileNotFoundError"


def test_out_directory_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("LPBF_TWIN_OUT", str(tmp_path / "env"))
    code, _, _ = run(capsys, "synth-data", "--n-train", "3", "--n-val", "1")
    assert code == 0 and (tmp_path / "env" / "synthetic.lpbf").exists()


def test_training_is_reproducible(workdir, tmp_path):
    again = tmp_path / "again"
    assert main(["train", "--out", str(again), "--data", str(workdir / "synthetic.lpbf"),
                 "--seed", "7", *TINY_TRAIN]) == 0
    for name in ("xy.lpbf", "xz.lpbf"):
        assert (again / "models" / name).read_bytes() == (workdir / "models" / name).read_bytes()


def test_predict(capsys, workdir):
    code, out, _ = run(capsys, "predict", "--out", workdir, "--P", "250", "--alpha", "0.4")
    assert code == 0 and "T_peak" in json.dumps(out)


def test_window_csv(capsys, workdir):
    code, _, _ = run(capsys, "window", "--out", workdir, "--T-sub", "420", "--grid", "40x25")
    assert code == 0
    csvs = list(workdir.glob("window_T420*.csv"))
    assert len(csvs) == 1 and np.loadtxt(csvs[0], delimiter=",").shape == (40, 25)


def test_config_file_defaults_and_override(capsys, workdir, tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[window]\ngrid = 6x5  # small\nT-sub = 360\n")
    code, _, _ = run(capsys, "window", "--out", workdir, "--config", ini, "--T-sub=480")
    assert code == 0
    assert np.loadtxt(next(workdir.glob("window_T480*.csv")), delimiter=",").shape == (6, 5)
    ini.write_text("[window]\ncolour = red\n")
    code, _, err = run(capsys, "window", "--out", workdir, "--config", ini)
    assert code == 2 and "colour" in json.loads(err)["message"]


def test_optimize(capsys, workdir):
    code, out, _ = run(capsys, "optimize", "--out", workdir, "--max-iter", "3")
    assert code == 0 and 100.0 <= out["P"] <= 500.0


def test_cold_models_report_json_error(capsys, workdir):
    # two epochs are far from melting anything
    code, _, err = run(capsys, "uq", "--out", workdir, "--samples", "20")
    assert code == 1 and json.loads(err)["error"] == "ColdPoolError"


def test_calibrate_and_uq_with_trained_models(capsys, trained, tmp_path):
    models = ["--model-xy", trained["paths"]["xy"], "--model-xz", trained["paths"]["xz"]]
    code, out, _ = run(capsys, "calibrate", "--out", tmp_path, *models, "--target-mu", "430",
                       "--target-sigma", "28", "--epochs", "10")
    assert code == 0 and 0.02 <= out["alpha"]["mu"] <= 0.95
    code, _, _ = run(capsys, "uq", "--out", tmp_path, *models, "--samples", "50")
    uq = json.loads((tmp_path / "uq.json").read_text())
    assert code == 0 and uq["meta"]["samples"] == 50
    assert (tmp_path / "uq_histograms.csv").exists()


def test_demo_branches(capsys, workdir):
    code, out, _ = run(capsys, "demo", "--out", workdir, "--height", "600", "--max-iter", "2",
                       "--control", "off", "--control", "on")
    assert code == 0
    demo = workdir / "demo"
    assert (demo / "trace_controlled.csv").exists() and (demo / "trace_uncontrolled.csv").exists()
    summary = json.loads((demo / "comparison.json").read_text())
    assert summary["controlled"] == [True, False] and summary["steps"] == 2
