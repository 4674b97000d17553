"""Training loop, threshold fitting, prediction, evaluation and grid search.

``train`` follows the barrier-loss training procedure:

1. initialize the network and the hypersphere center;
2. for every epoch and every mini-batch: compute the distances, refresh the
   radius with the scheduler of the loss kind, compute the loss plus the L2
   term and take one Adam step;
3. score every training sample with the final weights;
4. set the threshold so that ``reject_fraction`` of them fall outside.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from . import losses
from .config import LossKind, TrainConfig
from .data import OccSplit
from .exceptions import DimensionError, NonFiniteLossError, OCCError, ValidationError
from .hypersphere import (
    Decision,
    HypersphereState,
    compute_threshold,
    decide_all,
    init_center,
    radius_lbl,
    schedule_radius,
)
from .metrics import EvaluationReport, Label, auc, build_report
from .nn import (
    AdamState,
    ModelParams,
    adam_step,
    backward,
    forward,
    init_params,
    jacobian_backward,
    jacobian_forward,
    l2_penalty,
)

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    radius: float
    mean_distance: float
    truncated: int
    discarded: int


@dataclass
class TrainedModel:
    params: ModelParams
    sphere: HypersphereState
    loss_history: List[float]
    config: TrainConfig
    trace: List[EpochRecord] = field(default_factory=list)
    optimizer_steps: int = 0
    score_offset: float = 0.0  # HRN only: training minimum of -phi

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.asdict(r) for r in self.trace])


@dataclass
class Prediction:
    errors: np.ndarray
    decisions: List[Decision]


def _rngs(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(shuffle_seq)


def _hrn_step(params: ModelParams, xb: np.ndarray, cfg: TrainConfig):
    outputs, cache = forward(params, xb)
    tape = jacobian_forward(params, xb)
    result = losses.hrn_loss(outputs, tape.values, cfg.loss)
    grads = backward(params, cache, result.output_grad)
    if cfg.loss.lambda_ > 0:
        grads = grads + jacobian_backward(
            params, tape, losses.hrn_penalty_coefs(tape.values, cfg.loss)
        )
    return result, grads


def train(split: OccSplit, cfg: TrainConfig) -> TrainedModel:
    """Fit a one-class model on the (normalized) training targets of ``split``."""
    if not split.normalized:
        raise ValidationError("split must be normalized before training")
    x = split.train_targets
    n = int(x.shape[0])
    if n == 0:
        raise ValidationError("training set is empty")

    kind = cfg.loss.kind
    init_rng, shuffle_rng = _rngs(cfg.seed)
    output_dim = 1 if kind is LossKind.HRN else cfg.output_dim
    params = init_params(
        x.shape[1],
        cfg.hidden_dim,
        output_dim,
        n_hidden_layers=cfg.n_hidden_layers,
        activation=cfg.activation,
        slope=cfg.leaky_slope,
        rng=init_rng,
    )
    if kind.uses_sphere:
        center = init_center(cfg.center_policy, params, x, fixed=cfg.fixed_center)
    else:
        center = np.zeros(1)
    state = AdamState.for_params(
        params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon
    )
    logger.info(
        "training %s on %d samples: %d epochs, batch %d, lr %g",
        kind.value, n, cfg.epochs, cfg.batch_size, cfg.learning_rate,
    )

    # LBL resets over the whole training set every few epochs; everything else per batch
    epoch_resets = kind is LossKind.LBL and cfg.loss.lbl_reset_epochs > 0
    radius = 0.0
    history: List[float] = []
    trace: List[EpochRecord] = []
    batch_counter = 0
    epochs = tqdm(range(cfg.epochs), desc=kind.value, disable=not cfg.progress, leave=False)
    for epoch in epochs:
        if epoch_resets and epoch % cfg.loss.lbl_reset_epochs == 0:
            radius = radius_lbl(losses.distance(forward(params, x)[0], center))
            logger.debug("epoch %d: LBL radius reset to %.6g", epoch, radius)
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        total, dist_sum, truncated, discarded = 0.0, 0.0, 0, 0
        for batch_idx, start in enumerate(range(0, n, cfg.batch_size)):
            xb = x[order[start : start + cfg.batch_size]]
            if kind is LossKind.HRN:
                result, grads = _hrn_step(params, xb, cfg)
            else:
                outputs, cache = forward(params, xb)
                d = losses.distance(outputs, center)
                if epoch_resets:
                    if d.max() >= radius:
                        radius = radius_lbl(d)
                elif batch_counter % cfg.loss.radius_update_period == 0:
                    radius = schedule_radius(kind, d, cfg.loss)
                result = losses.batch_loss(outputs, center, radius, cfg.loss)
                grads = backward(params, cache, result.output_grad)
                dist_sum += float(result.distances.sum())
            reg_value, reg_grads = l2_penalty(params, cfg.loss.weight_decay)
            value = result.loss_value + reg_value
            if not np.isfinite(value):
                raise NonFiniteLossError(epoch, batch_idx, value)
            params, state = adam_step(params, grads + reg_grads, state)
            batch_counter += 1
            total += value * xb.shape[0]
            truncated += result.samples_truncated
            discarded += result.samples_discarded
            logger.debug(
                "epoch %d batch %d loss %.6g radius %.6g", epoch, batch_idx, value, radius
            )
        record = EpochRecord(epoch, total / n, radius, dist_sum / n, truncated, discarded)
        history.append(record.loss)
        trace.append(record)
        logger.info(
            "epoch %d loss %.6g radius %.6g truncated %d", epoch, record.loss, radius, truncated
        )

    model = TrainedModel(
        params=params,
        sphere=HypersphereState(center=center, radius=radius, center_policy=cfg.center_policy),
        loss_history=history,
        config=cfg,
        trace=trace,
        optimizer_steps=state.step,
    )
    if kind is LossKind.HRN:
        model.score_offset = float(np.min(-forward(params, x)[0][:, 0]))
    train_errors = anomaly_errors(model, x)
    model.sphere.threshold = compute_threshold(train_errors, cfg.reject_fraction)
    logger.info("threshold %.6g from %d training errors", model.sphere.threshold, n)
    return model


def anomaly_errors(model: TrainedModel, inputs: np.ndarray) -> np.ndarray:
    """Distance to the center, or for HRN ``-phi(x)`` shifted by the training minimum."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.params.input_dim:
        raise DimensionError(f"expected {model.params.input_dim} features, got {x.shape[1]}")
    outputs, _ = forward(model.params, x)
    if model.config.loss.kind is LossKind.HRN:
        return np.maximum(-outputs[:, 0] - model.score_offset, 0.0)
    return losses.distance(outputs, model.sphere.center)


def predict(model: TrainedModel, inputs: np.ndarray) -> Prediction:
    """Error and Target/Other decision for every row of already-normalized inputs."""
    errors = anomaly_errors(model, inputs)
    accepted = decide_all(errors, model.sphere.threshold)
    return Prediction(errors, [Decision.TARGET if a else Decision.OTHER for a in accepted])


def evaluate(model: TrainedModel, split: OccSplit) -> EvaluationReport:
    """Score the whole test set: AUC without a threshold, counts and G-mean at ``eta``."""
    if not split.normalized:
        raise ValidationError("split must be normalized before evaluation")
    if split.test_features.shape[0] == 0:
        raise ValidationError("test set is empty")
    errors = anomaly_errors(model, split.test_features)
    report = build_report(
        errors,
        split.test_labels,
        model.sphere.threshold,
        metadata={"loss": model.config.loss.kind.value, "seed": model.config.seed},
    )
    if not report.auc_available:
        logger.warning("test set of %s holds a single class; AUC omitted", split.name)
    return report


# grid search -------------------------------------------------------------------

SELECT_BY_LOSS = "final-training-loss"
SELECT_BY_AUC = "validation-auc (uses outlier data)"


@dataclass
class GridSearchResult:
    best: TrainedModel
    best_index: int
    table: pd.DataFrame
    selection_mode: str
    models: Dict[int, TrainedModel] = field(default_factory=dict)


def grid_points(grids: Mapping[str, Sequence[Any]]) -> List[Dict[str, Any]]:
    if any(len(v) == 0 for v in grids.values()):
        raise ValidationError("every grid needs at least one value")
    keys = list(grids)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grids[k] for k in keys))]


def _validation_split(
    split: OccSplit, outliers: np.ndarray, fraction: float, seed: int
) -> Tuple[OccSplit, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(split.train_targets.shape[0])
    n_val = max(1, int(round(fraction * order.size)))
    if n_val >= order.size:
        raise ValidationError("validation hold-out would leave no training targets")
    held, kept = order[:n_val], order[n_val:]
    val_x = np.vstack([split.train_targets[held], outliers])
    val_y = np.array(
        [Label.TARGET.value] * n_val + [Label.OUTLIER.value] * outliers.shape[0], dtype=object
    )
    return dataclasses.replace(split, train_targets=split.train_targets[kept]), val_x, val_y


def _run_point(
    index: int,
    point: Dict[str, Any],
    split: OccSplit,
    base: TrainConfig,
    val: Optional[Tuple[np.ndarray, np.ndarray]],
) -> Tuple[int, Dict[str, Any], Optional[TrainedModel]]:
    row: Dict[str, Any] = {"point": index, **point}
    try:
        cfg = base.with_overrides(point)
        model = train(split, cfg)
        row["final_loss"] = model.loss_history[-1]
        row["validation_auc"] = auc(anomaly_errors(model, val[0]), val[1]) if val else np.nan
        row["error"] = ""
        return index, row, model
    except (OCCError, ValueError, FloatingPointError) as exc:
        logger.warning("grid point %d %s failed: %s", index, point, exc)
        row.update(final_loss=np.nan, validation_auc=np.nan, error=f"{type(exc).__name__}: {exc}")
        return index, row, None


def grid_search(
    split: OccSplit,
    base: TrainConfig,
    grids: Mapping[str, Sequence[Any]],
    validation_outliers: Optional[np.ndarray] = None,
    validation_fraction: float = 0.2,
    jobs: int = 1,
) -> GridSearchResult:
    """Train one model per grid point and pick the best one.

    Without validation outliers the lowest final-epoch training loss wins. With
    them, a held-out share of the training targets plus the outliers forms a
    validation set and the highest AUC wins. Failing points are recorded, not
    raised.
    """
    points = grid_points(grids)
    val = None
    mode = SELECT_BY_LOSS
    if validation_outliers is not None and np.asarray(validation_outliers).shape[0] > 0:
        outliers = np.asarray(validation_outliers, dtype=np.float64)
        if split.normalized:
            outliers = split.normalizer.transform(outliers)
        split, val_x, val_y = _validation_split(split, outliers, validation_fraction, base.seed)
        val = (val_x, val_y)
        mode = SELECT_BY_AUC

    if jobs == 1:
        runs = [_run_point(i, p, split, base, val) for i, p in enumerate(points)]
    else:
        runs = Parallel(n_jobs=jobs)(
            delayed(_run_point)(i, p, split, base, val) for i, p in enumerate(points)
        )
    runs.sort(key=lambda r: r[0])
    table = pd.DataFrame([row for _, row, _ in runs])
    models = {i: m for i, _, m in runs if m is not None}
    if not models:
        raise OCCError(f"all {len(points)} grid points failed")

    metric = table["validation_auc"] if mode == SELECT_BY_AUC else -table["final_loss"]
    table["rank"] = metric.rank(ascending=False, method="first")
    best_index = int(table.loc[table["rank"] == 1, "point"].iloc[0])
    table["best"] = table["point"] == best_index
    table["selection_mode"] = mode
    logger.info("grid search: %d points, best %d by %s", len(points), best_index, mode)
    return GridSearchResult(models[best_index], best_index, table, mode, models)
