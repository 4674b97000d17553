import dataclasses
import math

import numpy as np
import pytest

from occ_barrier import trainer as trainer_mod
from occ_barrier.config import LossConfig, LossKind, TrainConfig
from occ_barrier.data import MinMaxScaler, OccSplit, make_occ_split, normalize, synth_gaussian_ring
from occ_barrier.exceptions import ConfigError, ValidationError
from occ_barrier.hypersphere import CenterPolicy, Decision, HypersphereState
from occ_barrier.nn import Layer, ModelParams
from occ_barrier.trainer import (
    SELECT_BY_AUC,
    SELECT_BY_LOSS,
    TrainedModel,
    anomaly_errors,
    evaluate,
    grid_search,
    predict,
    train,
)


def _ring_split(n=100, seed=42):
    ds = synth_gaussian_ring(seed, n, n)
    return normalize(make_occ_split(ds, "0", train_fraction=0.5, seed=0))


def _cfg(kind=LossKind.LBLSIG, **kw):
    base = dict(epochs=5, batch_size=16, hidden_dim=8, output_dim=4, loss=LossConfig(kind=kind))
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def ring():
    return _ring_split()


def test_epochs_must_be_positive():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def test_requires_normalized_split():
    ds = synth_gaussian_ring(0, 10, 10)
    with pytest.raises(ValidationError):
        train(make_occ_split(ds, "0"), _cfg())


def test_one_optimizer_step_per_epoch_with_full_batch(ring):
    model = train(ring, _cfg(epochs=3, batch_size=10_000))
    assert model.optimizer_steps == 3
    assert len(model.loss_history) == 3


def test_same_seed_is_bit_identical(ring):
    a = train(ring, _cfg(seed=5))
    b = train(ring, _cfg(seed=5))
    assert a.loss_history == b.loss_history
    np.testing.assert_array_equal(a.params.layers[0].weight, b.params.layers[0].weight)
    c = train(ring, _cfg(seed=6))
    assert c.loss_history != a.loss_history


def test_mse_single_sample_moves_toward_center():
    x = np.array([[0.3, 0.7]])
    split = OccSplit(
        train_targets=x,
        test_features=np.empty((0, 2)),
        test_labels=np.array([], dtype=object),
        normalizer=MinMaxScaler.fit(x),
        target_class="0",
        normalized=True,
    )
    cfg = _cfg(
        LossKind.MSE_OCL,
        epochs=50,
        output_dim=2,
        center_policy=CenterPolicy.FIXED_VECTOR,
        fixed_center=(1.0, -1.0),
        loss=LossConfig(kind=LossKind.MSE_OCL, lambda_=0.0),
    )
    model = train(split, cfg)
    assert model.loss_history[-1] < model.loss_history[0]


@pytest.mark.parametrize("kind", list(LossKind))
def test_every_kind_trains_and_calibrates(ring, kind):
    model = train(ring, _cfg(kind))
    assert all(np.isfinite(model.loss_history))
    errors = anomaly_errors(model, ring.train_targets)
    assert np.all(errors >= 0)
    n = ring.train_targets.shape[0]
    rejected = np.mean(errors > model.sphere.threshold)
    assert rejected <= model.config.reject_fraction + 1.0 / n
    if kind is LossKind.HRN:
        assert model.params.output_dim == 1


def test_predict_is_stateless(ring):
    model = train(ring, _cfg())
    batch = predict(model, ring.test_features)
    singles = [predict(model, row) for row in ring.test_features[:10]]
    np.testing.assert_allclose(
        batch.errors[:10], [p.errors[0] for p in singles], rtol=1e-12, atol=1e-15
    )
    first = predict(model, ring.test_features[:1]).errors[0]
    at_threshold = dataclasses.replace(model.sphere, threshold=float(first))
    edge = dataclasses.replace(model, sphere=at_threshold)
    assert predict(edge, ring.test_features[:1]).decisions == [Decision.TARGET]


def test_evaluate_count_identities(ring):
    model = train(ring, _cfg())
    report = evaluate(model, ring)
    assert report.true_positives + report.false_negatives == report.n_targets
    assert report.true_negatives + report.false_positives == report.n_outliers
    assert report.n_targets + report.n_outliers == ring.test_features.shape[0]
    assert report.auc_available


def test_lbl_shrinks_training_distances(ring):
    model = train(ring, _cfg(LossKind.LBL, epochs=30, batch_size=10_000))
    assert model.trace[-1].mean_distance < model.trace[0].mean_distance


def test_radius_recorded_each_epoch(ring):
    model = train(ring, _cfg(LossKind.LBL))
    frame = model.trace_frame()
    assert list(frame.columns) == [
        "epoch", "loss", "radius", "mean_distance", "truncated", "discarded"
    ]
    assert (frame["radius"] > 0).all()


def test_grid_search_cardinality_and_ranking(ring):
    grids = {"learning_rate": [0.1, 0.01, 0.003], "lambda": [1e-3, 1.0, 1e3]}
    result = grid_search(ring, _cfg(epochs=2), grids)
    table = result.table
    assert len(table) == 9
    assert table["best"].sum() == 1
    assert result.selection_mode == SELECT_BY_LOSS
    best_row = table.loc[table["best"]].iloc[0]
    assert best_row["final_loss"] == table["final_loss"].min()
    assert best_row["rank"] == 1


def test_grid_search_singleton_and_failures(ring):
    single = grid_search(ring, _cfg(epochs=1), {"theta": [2.0]})
    assert len(single.table) == 1 and single.best_index == 0

    mixed = grid_search(ring, _cfg(epochs=1), {"learning_rate": [-1.0, 0.01]})
    assert mixed.table.loc[0, "error"].startswith("ConfigError")
    assert mixed.best_index == 1


def test_grid_search_validation_auc(ring):
    outliers = synth_gaussian_ring(7, 0, 30).features
    result = grid_search(
        ring, _cfg(epochs=2), {"learning_rate": [0.01, 0.003]}, validation_outliers=outliers
    )
    assert result.selection_mode == SELECT_BY_AUC
    assert result.table["validation_auc"].between(0, 1).all()


def test_radius_update_period_counts_batches(ring, monkeypatch):
    calls = []
    real = trainer_mod.schedule_radius

    def counting(kind, distances, loss_cfg):
        calls.append(distances.size)
        return real(kind, distances, loss_cfg)

    monkeypatch.setattr(trainer_mod, "schedule_radius", counting)
    loss = LossConfig(kind=LossKind.LBLSIG, radius_update_period=3)
    train(ring, _cfg(epochs=3, batch_size=16, loss=loss))
    n_batches = 3 * math.ceil(ring.train_targets.shape[0] / 16)
    assert len(calls) == math.ceil(n_batches / 3)


def test_lbl_radius_reset_every_few_epochs(ring, monkeypatch):
    full_set = []
    real = trainer_mod.radius_lbl

    def counting(distances):
        if distances.size == ring.train_targets.shape[0]:
            full_set.append(float(distances.max()))
        return real(distances)

    monkeypatch.setattr(trainer_mod, "radius_lbl", counting)
    loss = LossConfig(kind=LossKind.LBL, lbl_reset_epochs=5)
    model = train(ring, _cfg(LossKind.LBL, epochs=10, batch_size=16, loss=loss))
    assert len(full_set) == 2
    assert all(rec.radius >= 2 * full_set[0] for rec in model.trace[:5])


def test_lbl_per_batch_reset_when_disabled(ring, monkeypatch):
    calls = []
    real = trainer_mod.schedule_radius

    def counting(kind, distances, loss_cfg):
        calls.append(kind)
        return real(kind, distances, loss_cfg)

    monkeypatch.setattr(trainer_mod, "schedule_radius", counting)
    loss = LossConfig(kind=LossKind.LBL, lbl_reset_epochs=0)
    train(ring, _cfg(LossKind.LBL, epochs=2, batch_size=16, loss=loss))
    assert len(calls) == 2 * math.ceil(ring.train_targets.shape[0] / 16)


def test_mean_of_inputs_center(ring):
    cfg = _cfg(LossKind.MSE_OCL, output_dim=2, center_policy=CenterPolicy.MEAN_OF_INPUTS)
    model = train(ring, cfg)
    np.testing.assert_allclose(model.sphere.center, ring.train_targets.mean(axis=0))
    assert model.sphere.center_policy is CenterPolicy.MEAN_OF_INPUTS


def test_hrn_error_falls_as_target_score_rises():
    # Sig(phi) is the target probability: the largest phi gets the smallest error
    params = ModelParams([Layer(np.array([[1.0], [0.0]]), np.array([0.0]))])
    cfg = TrainConfig(output_dim=1, loss=LossConfig(kind=LossKind.HRN))
    model = TrainedModel(
        params=params,
        sphere=HypersphereState(center=np.zeros(1)),
        loss_history=[],
        config=cfg,
        score_offset=-3.0,
    )
    x = np.array([[-2.0, 0.0], [0.0, 5.0], [1.5, 0.0], [4.0, 0.0]])
    np.testing.assert_allclose(anomaly_errors(model, x), [5.0, 3.0, 1.5, 0.0])


def test_grid_search_parallel_matches_serial(ring):
    grids = {"learning_rate": [0.01, 0.003], "lambda": [1e-3, 1.0]}
    serial = grid_search(ring, _cfg(epochs=2), grids, jobs=1)
    parallel = grid_search(ring, _cfg(epochs=2), grids, jobs=2)
    assert parallel.best_index == serial.best_index
    np.testing.assert_allclose(
        parallel.table["final_loss"], serial.table["final_loss"], rtol=1e-12
    )
    assert sorted(parallel.models) == [0, 1, 2, 3]


@pytest.mark.slow
@pytest.mark.parametrize(
    "kind,min_auc,min_gmean",
    [(LossKind.LBL, 0.95, 0.85), (LossKind.LBLSIG, 0.95, 0.85), (LossKind.MSE_OCL, 0.90, None)],
)
def test_desk_scale_ring(kind, min_auc, min_gmean):
    split = _ring_split(n=500, seed=42)
    cfg = TrainConfig(epochs=200, hidden_dim=32, n_hidden_layers=2, loss=LossConfig(kind=kind))
    report = evaluate(train(split, cfg), split)
    assert report.auc >= min_auc
    if min_gmean is not None:
        assert report.gmean >= min_gmean
