from __future__ import annotations

import dataclasses
import functools
import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import typer

from .config import ExperimentConfig, LossKind, apply_cli_overrides, load_experiment
from .data import (
    OccSplit,
    load_csv,
    make_occ_split,
    normalize,
    synth_gaussian_ring,
    write_csv,
)
from .exceptions import OCCError, ValidationError
from .gradcheck import DEFAULT_STEP, check_loss_gradient
from .io import load_model, read_table, save_json, save_model, save_table
from .log import configure_logging
from .losses import barrier_curve
from .metrics import roc_points
from .nn import Activation
from .trainer import anomaly_errors, evaluate, grid_search, train

logger = logging.getLogger(__name__)

app = typer.Typer(help="One-class classification with logarithmic barrier losses.")

PLOT_KINDS = ("barrierCurve", "lossTrace", "rocPoints")


@app.callback()
def _setup(
    log_level: Optional[str] = typer.Option(
        None, "--log-level", help="DEBUG, INFO, WARNING or ERROR (default: $OCC_BARRIER_LOG)"
    )
):
    configure_logging(log_level)


def _user_errors(func: Callable) -> Callable:
    """Map toolkit and file errors to exit 2, anything else to exit 1."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except typer.Exit:
            raise
        except (OCCError, ValueError, FileNotFoundError) as exc:
            typer.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            raise typer.Exit(code=2)
        except Exception as exc:  # noqa: BLE001
            logger.debug("internal error", exc_info=True)
            typer.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            raise typer.Exit(code=1)

    return wrapper


def _parse_floats(text: str, name: str) -> List[float]:
    try:
        values = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ValidationError(f"--{name}: {exc}") from exc
    if not values:
        raise ValidationError(f"--{name}: no values given")
    return values


def _experiment(config: str, seed: Optional[int], out: Optional[str]) -> ExperimentConfig:
    cfg = apply_cli_overrides(load_experiment(config), seed=seed, out=out)
    if logging.getLogger("occ_barrier").getEffectiveLevel() <= logging.INFO:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, progress=True))
    return cfg


def build_split(cfg: ExperimentConfig) -> OccSplit:
    """Raw (unnormalized) one-class split described by the ``[data]`` section."""
    d = cfg.data
    if d.synthetic:
        dataset = synth_gaussian_ring(d.synth_seed, d.n_targets, d.n_outliers, d.dim, d.ring_radius)
        test = None
    else:
        dataset = load_csv(d.path, d.label_column, d.name)
        test = load_csv(d.test_path, d.label_column, d.name) if d.test_path else None
    return make_occ_split(dataset, d.target_class, d.train_fraction, d.split_seed, test=test)


def _validation_outliers(cfg: ExperimentConfig, target: str) -> Optional[np.ndarray]:
    if not cfg.data.validation_outliers_path:
        return None
    ds = load_csv(cfg.data.validation_outliers_path, cfg.data.label_column)
    return ds.features[ds.labels != target]


def _header(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {"config": cfg.resolved(), "seed": cfg.train.seed}


@app.command("train")
@_user_errors
def train_cmd(
    config: str = typer.Option(..., "--config", help="Experiment file (.ini or .json)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override train.seed"),
    out: Optional[str] = typer.Option(None, "--out", help="Override output.dir"),
):
    """Train one model, fit its threshold and evaluate it on the test split."""
    cfg = _experiment(config, seed, out)
    split = normalize(build_split(cfg))
    model = train(split, cfg.train)
    report = evaluate(model, split)
    out_dir = Path(cfg.output.dir)
    header = _header(cfg)
    save_model(model, out_dir / "model.npz", split.normalizer, cfg.resolved())
    save_table(model.trace_frame(), out_dir / "loss_trace.csv", header)
    save_json(
        {
            **header,
            "dataset": split.name,
            "radius": model.sphere.radius,
            "threshold": model.sphere.threshold,
            "final_loss": model.loss_history[-1],
            "optimizer_steps": model.optimizer_steps,
            "report": report.to_dict(),
        },
        out_dir / "report.json",
    )
    typer.echo(f"Saved {out_dir / 'report.json'}")


@app.command("eval")
@_user_errors
def eval_cmd(
    model: str = typer.Option(..., "--model", help="Model file written by train/gridsearch"),
    config: str = typer.Option(..., "--config", help="Experiment file naming the test data"),
    out: Optional[str] = typer.Option(None, "--out", help="Override output.dir"),
):
    """Evaluate a saved model on the split of an experiment file."""
    cfg = _experiment(config, None, out)
    trained, scaler, meta = load_model(model)
    split = build_split(cfg)
    if scaler is not None:
        split = dataclasses.replace(split, normalizer=scaler)
    split = normalize(split)
    report = evaluate(trained, split)
    path = Path(cfg.output.dir) / "eval_report.json"
    save_json(
        {
            "config": cfg.resolved(),
            "model": str(model),
            "model_config": meta.get("config", {}),
            "report": report.to_dict(),
        },
        path,
    )
    typer.echo(f"Saved {path}")


@app.command("gridsearch")
@_user_errors
def gridsearch_cmd(
    config: str = typer.Option(..., "--config", help="Experiment file with a [grid] section"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override train.seed"),
    jobs: int = typer.Option(1, "--jobs", help="Parallel grid points"),
    out: Optional[str] = typer.Option(None, "--out", help="Override output.dir"),
):
    """Train every grid point, rank them and keep the best model."""
    if jobs < 1:
        raise ValidationError("--jobs must be >= 1")
    cfg = _experiment(config, seed, out)
    if not cfg.grid:
        raise ValidationError(f"{config}: no [grid] section")
    split = normalize(build_split(cfg))
    result = grid_search(
        split,
        cfg.train,
        cfg.grid,
        validation_outliers=_validation_outliers(cfg, split.target_class),
        validation_fraction=cfg.data.validation_fraction,
        jobs=jobs,
    )
    out_dir = Path(cfg.output.dir)
    header = _header(cfg)
    for index, trained in result.models.items():
        run_dir = out_dir / "runs" / f"point_{index:03d}"
        save_table(trained.trace_frame(), run_dir / "loss_trace.csv", header)
    if "csv" in cfg.output.formats:
        save_table(result.table, out_dir / "grid_results.csv", header)
    if "json" in cfg.output.formats:
        save_json(
            {
                **header,
                "selection_mode": result.selection_mode,
                "rows": result.table.to_dict("records"),
            },
            out_dir / "grid_results.json",
        )
    best = result.best
    report = evaluate(best, split)
    save_model(best, out_dir / "model.npz", split.normalizer, cfg.resolved())
    save_json(
        {
            **header,
            "best_point": result.best_index,
            "selection_mode": result.selection_mode,
            "threshold": best.sphere.threshold,
            "radius": best.sphere.radius,
            "report": report.to_dict(),
        },
        out_dir / "report.json",
    )
    typer.echo(f"Saved {out_dir / 'grid_results.csv'}")


@app.command("gradcheck")
@_user_errors
def gradcheck_cmd(
    loss: LossKind = typer.Option(LossKind.LBLSIG, "--loss", help="Loss kind to check"),
    seed: int = typer.Option(1, "--seed", help="Network and batch seed"),
    dims: str = typer.Option("4,6,6,2", "--dims", help="Layer widths, input first"),
    step: float = typer.Option(DEFAULT_STEP, "--step", help="Central-difference step"),
    tol: Optional[float] = typer.Option(None, "--tol", help="Relative tolerance"),
    lam: float = typer.Option(0.0, "--lambda", help="L2 weight decay"),
    truncate_sample: bool = typer.Option(
        False, "--truncate-sample", help="Push one sample past the LBLSig truncation point"
    ),
    regularizer_only: bool = typer.Option(
        False, "--regularizer-only", help="Check the L2 term alone"
    ),
    activation: Activation = typer.Option(Activation.LEAKY_RELU, "--activation"),
    out: Optional[str] = typer.Option(None, "--out", help="Also write the report JSON here"),
):
    """Compare analytic gradients with central finite differences; exit 1 on mismatch."""
    try:
        widths = [int(s) for s in dims.split(",") if s.strip()]
    except ValueError as exc:
        raise ValidationError(f"--dims: {exc}") from exc
    if len(widths) < 3 or min(widths) < 1:
        raise ValidationError("--dims needs an input width, one or two hidden widths and an output")
    report = check_loss_gradient(
        loss,
        widths,
        seed=seed,
        step=step,
        tol=tol,
        lam=lam,
        activation=activation,
        truncate_sample=truncate_sample,
        regularizer_only=regularizer_only,
    )
    payload = report.to_dict()
    if out:
        save_json(payload, out)
    typer.echo(json.dumps(payload, indent=2, sort_keys=True))
    if not report.passed:
        raise typer.Exit(code=1)


@app.command("synth")
@_user_errors
def synth_cmd(
    seed: int = typer.Option(42, "--seed", help="Generator seed"),
    n_targets: int = typer.Option(500, "--n-targets"),
    n_outliers: int = typer.Option(500, "--n-outliers"),
    dim: int = typer.Option(2, "--dim"),
    ring_radius: float = typer.Option(5.0, "--ring-radius"),
    out: str = typer.Option("outputs/ring.csv", "--out", help="Output CSV path"),
):
    """Write Gaussian targets plus ring outliers as a CSV dataset."""
    dataset = synth_gaussian_ring(seed, n_targets, n_outliers, dim, ring_radius)
    spec = {
        "seed": seed,
        "n_targets": n_targets,
        "n_outliers": n_outliers,
        "dim": dim,
        "ring_radius": ring_radius,
    }
    write_csv(dataset, out, comment="config: " + json.dumps(spec, sort_keys=True))
    typer.echo(f"Saved {out}")


@app.command("plotdata")
@_user_errors
def plotdata_cmd(
    kind: str = typer.Argument(..., help="barrierCurve, lossTrace or rocPoints"),
    theta: str = typer.Option("0.5,1,2", "--theta", help="barrierCurve: comma-separated thetas"),
    u_min: float = typer.Option(0.01, "--u-min", help="barrierCurve: grid ends short of -u_min"),
    u_max: float = typer.Option(2.0, "--u-max", help="barrierCurve: grid starts past u = -u_max"),
    points: int = typer.Option(1000, "--points", help="barrierCurve: grid size"),
    trace: Optional[str] = typer.Option(None, "--trace", help="lossTrace: loss_trace.csv"),
    model: Optional[str] = typer.Option(None, "--model", help="rocPoints: model file"),
    config: Optional[str] = typer.Option(None, "--config", help="rocPoints: experiment file"),
    out: Optional[str] = typer.Option(None, "--out", help="Output CSV path"),
):
    """Emit plot points as CSV (no rendering)."""
    if kind not in PLOT_KINDS:
        choices = ", ".join(PLOT_KINDS)
        raise ValidationError(f"unknown plot kind {kind!r}; expected one of {choices}")
    out_path = Path(out or f"outputs/{kind}.csv")
    if kind == "barrierCurve":
        if points < 2 or not 0 < u_min < u_max:
            raise ValidationError("barrierCurve needs --points >= 2 and 0 < --u-min < --u-max")
        thetas = _parse_floats(theta, "theta")
        # open interval: both ends dropped
        u = np.linspace(-u_max, -u_min, points + 2)[1:-1]
        frame = barrier_curve(thetas, u)
        header = {"kind": kind, "theta": thetas, "u_min": u_min, "u_max": u_max, "points": points}
    elif kind == "lossTrace":
        if not trace:
            raise ValidationError("lossTrace needs --trace")
        frame = read_table(trace)
        missing = {"epoch", "loss"} - set(frame.columns)
        if missing:
            raise ValidationError(f"{trace}: missing columns {sorted(missing)}")
        header = {"kind": kind, "trace": str(trace)}
    else:
        if not (model and config):
            raise ValidationError("rocPoints needs --model and --config")
        cfg = load_experiment(config)
        trained, scaler, _ = load_model(model)
        split = build_split(cfg)
        if scaler is not None:
            split = dataclasses.replace(split, normalizer=scaler)
        split = normalize(split)
        frame = roc_points(anomaly_errors(trained, split.test_features), split.test_labels)
        header = {"kind": kind, "model": str(model), "config": cfg.resolved()}
    save_table(frame, out_path, header)
    typer.echo(f"Saved {out_path}")


def main():
    app()


if __name__ == "__main__":
    main()
