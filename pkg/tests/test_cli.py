import json
import subprocess
import sys

import numpy as np
import pytest
from typer.testing import CliRunner

from occ_barrier.cli import app
from occ_barrier.data import load_csv
from occ_barrier.io import read_table
from occ_barrier.metrics import trapezoid_auc

runner = CliRunner()

EXPERIMENT = """
[data]
synthetic = true
n_targets = 60
n_outliers = 60

[loss]
kind = lblsig

[train]
epochs = 3
batch_size = 16
hidden_dim = 8
output_dim = 4

[output]
dir = {out}
"""


def test_cli_help():
    # just verify module loads and prints help
    cmd = [sys.executable, "-m", "occ_barrier.cli", "--help"]
    res = subprocess.run(cmd, capture_output=True, text=True)
    assert res.returncode == 0
    assert "gridsearch" in res.stdout


@pytest.fixture
def experiment(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(EXPERIMENT.format(out=tmp_path / "run"))
    return path


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        args = ["synth", "--seed", "3", "--n-targets", "25", "--n-outliers", "15"]
        res = runner.invoke(app, [*args, "--out", str(out)])
        assert res.exit_code == 0, res.output
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# config: ")
    ds = load_csv(a)
    assert (ds.labels == "0").sum() == 25 and (ds.labels == "1").sum() == 15


def test_train_writes_artifacts_reproducibly(experiment, tmp_path):
    res = runner.invoke(app, ["train", "--config", str(experiment)])
    assert res.exit_code == 0, res.output
    run = tmp_path / "run"
    for name in ("model.npz", "loss_trace.csv", "report.json"):
        assert (run / name).is_file()
    first = (run / "report.json").read_bytes()
    report = json.loads(first)
    counts = report["report"]
    assert counts["true_positives"] + counts["false_negatives"] == counts["n_targets"]
    assert counts["true_negatives"] + counts["false_positives"] == counts["n_outliers"]
    assert report["seed"] == 0 and report["config"]["loss"]["theta"] == 1.0

    res = runner.invoke(app, ["train", "--config", str(experiment)])
    assert res.exit_code == 0
    assert (run / "report.json").read_bytes() == first


def test_seed_and_out_flags(experiment, tmp_path):
    other = tmp_path / "other"
    args = ["train", "--config", str(experiment), "--seed", "4", "--out", str(other)]
    res = runner.invoke(app, args)
    assert res.exit_code == 0, res.output
    report = json.loads((other / "report.json").read_text())
    assert report["seed"] == 4


def test_missing_dataset_exits_2(tmp_path):
    missing = tmp_path / "nowhere" / "data.csv"
    path = tmp_path / "exp.ini"
    path.write_text(f"[data]\npath = {missing}\n")
    res = runner.invoke(app, ["train", "--config", str(path)])
    assert res.exit_code == 2
    assert "error: FileNotFoundError" in res.output
    assert str(missing) in res.output


def test_bad_config_key_exits_2(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[data]\nsynthetic = true\n[loss]\nthetaa = 1\n")
    res = runner.invoke(app, ["train", "--config", str(path)])
    assert res.exit_code == 2
    assert "loss.thetaa" in res.output


def test_eval_and_plotdata_from_saved_model(experiment, tmp_path):
    assert runner.invoke(app, ["train", "--config", str(experiment)]).exit_code == 0
    run = tmp_path / "run"
    model = str(run / "model.npz")
    res = runner.invoke(app, ["eval", "--model", model, "--config", str(experiment)])
    assert res.exit_code == 0, res.output
    evaluated = json.loads((run / "eval_report.json").read_text())["report"]
    trained = json.loads((run / "report.json").read_text())["report"]
    assert evaluated == trained

    roc = tmp_path / "roc.csv"
    res = runner.invoke(
        app,
        ["plotdata", "rocPoints", "--model", model, "--config", str(experiment), "--out", str(roc)],
    )
    assert res.exit_code == 0, res.output
    assert trapezoid_auc(read_table(roc)) == pytest.approx(trained["auc"], abs=1e-9)

    trace = tmp_path / "trace.csv"
    args = ["plotdata", "lossTrace", "--trace", str(run / "loss_trace.csv"), "--out", str(trace)]
    res = runner.invoke(app, args)
    assert res.exit_code == 0, res.output
    assert len(read_table(trace)) == 3


def test_plotdata_barrier_curve(tmp_path):
    out = tmp_path / "barrier.csv"
    args = ["plotdata", "barrierCurve", "--theta", "0.5,1,2", "--u-max", "1", "--out", str(out)]
    res = runner.invoke(app, args)
    assert res.exit_code == 0, res.output
    frame = read_table(out)
    assert len(frame) == 3000
    assert sorted(frame["theta"].unique()) == [0.5, 1.0, 2.0]
    assert ((frame["u"] > -1.0) & (frame["u"] < -0.01)).all()
    expected = -np.log(-frame["u"]) / frame["theta"]
    np.testing.assert_allclose(frame["value"], expected, rtol=0, atol=1e-12)


def test_plotdata_rejects_unknown_kind_and_bad_grid(tmp_path):
    assert runner.invoke(app, ["plotdata", "histogram"]).exit_code == 2
    res = runner.invoke(app, ["plotdata", "barrierCurve", "--u-min", "2", "--u-max", "1"])
    assert res.exit_code == 2


@pytest.mark.parametrize(
    "args",
    [
        ["--loss", "mse-ocl", "--seed", "1"],
        ["--loss", "lblsig", "--truncate-sample"],
        ["--loss", "lbl", "--lambda", "0.5", "--regularizer-only"],
        ["--loss", "hrn", "--activation", "tanh"],
    ],
)
def test_gradcheck_reports_json(args):
    res = runner.invoke(app, ["gradcheck", *args])
    assert res.exit_code == 0, res.output
    report = json.loads(res.stdout)
    assert report["passed"] is True
    assert report["max_rel_error"] <= report["tolerance"]


def test_gridsearch_table(tmp_path):
    path = tmp_path / "grid.ini"
    path.write_text(
        EXPERIMENT.format(out=tmp_path / "grid")
        + "\n[grid]\nlearning_rate = 0.1, 0.01, 0.003\nlambda = 1e-3, 1, 1e3\n"
    )
    res = runner.invoke(app, ["gridsearch", "--config", str(path)])
    assert res.exit_code == 0, res.output
    table = read_table(tmp_path / "grid" / "grid_results.csv")
    assert len(table) == 9
    assert table["best"].sum() == 1
    assert (tmp_path / "grid" / "model.npz").is_file()
    assert len(list((tmp_path / "grid" / "runs").iterdir())) == 9
    rows = json.loads((tmp_path / "grid" / "grid_results.json").read_text())["rows"]
    assert len(rows) == 9
