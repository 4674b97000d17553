import dataclasses
import logging

import numpy as np
import pytest

from occ_barrier.data import (
    DATASET_SPECS,
    Dataset,
    MinMaxScaler,
    load_csv,
    make_occ_split,
    normalize,
    synth_gaussian_ring,
    write_csv,
)
from occ_barrier.exceptions import IngestionError, ValidationError
from occ_barrier.metrics import Label


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text("1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n")
    return path


def test_load_csv_last_column_labels(small_csv):
    ds = load_csv(small_csv)
    assert ds.features.shape == (3, 2)
    assert list(ds.labels) == ["0", "1", "0"]
    assert ds.name == "small"


def test_load_csv_header_and_label_column(tmp_path):
    path = tmp_path / "with_header.csv"
    path.write_text("class,a,b\n1,0.5,0.25\n2,1.5,2.25\n")
    ds = load_csv(path, label_column=0)
    np.testing.assert_array_equal(ds.features, [[0.5, 0.25], [1.5, 2.25]])
    assert list(ds.labels) == ["1", "2"]


def test_load_csv_names_bad_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.0,2.0,0\n3.0,abc,1\n")
    with pytest.raises(IngestionError) as info:
        load_csv(path)
    assert info.value.row == 2 and info.value.column == 2
    assert "row 2" in str(info.value)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")


def test_write_csv_round_trip(tmp_path):
    ds = synth_gaussian_ring(3, 20, 10)
    path = write_csv(ds, tmp_path / "ring.csv", comment="generated")
    back = load_csv(path)
    np.testing.assert_array_equal(back.features, ds.features)
    assert list(back.labels) == list(ds.labels)


def test_scaler_affine_map_constant_and_clamp():
    train = np.array([[0.0, 3.0], [10.0, 3.0], [5.0, 3.0]])
    scaler = MinMaxScaler.fit(train)
    np.testing.assert_allclose(scaler.transform(train), [[-1, 0], [1, 0], [0, 0]])
    outside = np.array([[20.0, 7.0], [-4.0, 3.0]])
    np.testing.assert_allclose(scaler.transform(outside), [[1, 0], [-1, 0]])


def _two_class_dataset(n=40, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((n, 3)), np.arange(n) % 2, name="toy")


def test_occ_split_trains_on_target_only():
    ds = _two_class_dataset()
    split = make_occ_split(ds, 0, train_fraction=0.5, seed=1)
    assert split.train_targets.shape[0] == 10
    assert split.train_targets.shape[0] + split.test_features.shape[0] == ds.n_rows
    assert set(split.test_labels) <= {Label.TARGET.value, Label.OUTLIER.value}
    assert np.sum(split.test_labels == Label.OUTLIER.value) == 20
    even_rows = ds.features[ds.labels == "0"]
    for row in split.train_targets:
        assert any(np.array_equal(row, r) for r in even_rows)


def test_occ_split_explicit_files():
    train = _two_class_dataset(seed=1)
    test = _two_class_dataset(n=10, seed=2)
    split = make_occ_split(train, "1", test=test)
    assert split.train_targets.shape[0] == 20
    np.testing.assert_array_equal(split.test_features, test.features)


def test_occ_split_explicit_indices_partition():
    ds = _two_class_dataset(n=10)
    split = make_occ_split(ds, 0, train_indices=[0, 2, 4])
    assert split.train_targets.shape[0] == 3
    assert split.test_features.shape[0] == 7


def test_occ_split_missing_target():
    with pytest.raises(ValidationError):
        make_occ_split(_two_class_dataset(), 7)


def test_published_size_mismatch_is_logged(caplog):
    train = dataclasses.replace(_two_class_dataset(), name="ecoli")
    with caplog.at_level(logging.WARNING, logger="occ_barrier"):
        make_occ_split(train, 0, test=_two_class_dataset(n=10))
    assert "ecoli" in caplog.text
    assert DATASET_SPECS["abalone"].train_rows == 2088
    assert DATASET_SPECS["abalone"].train_targets == 703


def test_normalize_has_no_test_leakage():
    ds = _two_class_dataset(n=60, seed=3)
    split = make_occ_split(ds, 0, seed=2)
    shifted = dataclasses.replace(split, test_features=split.test_features * 100.0 + 7.0)
    a, b = normalize(split), normalize(shifted)
    np.testing.assert_array_equal(a.normalizer.mins, b.normalizer.mins)
    np.testing.assert_array_equal(a.normalizer.maxs, b.normalizer.maxs)
    np.testing.assert_array_equal(a.train_targets, b.train_targets)
    assert a.train_targets.min() >= -1 and a.train_targets.max() <= 1
    assert np.all(np.abs(b.test_features) <= 1)


def test_synth_ring():
    a = synth_gaussian_ring(42, 30, 50, dim=2, ring_radius=5.0)
    b = synth_gaussian_ring(42, 30, 50, dim=2, ring_radius=5.0)
    np.testing.assert_array_equal(a.features, b.features)
    assert np.sum(a.labels == "0") == 30 and np.sum(a.labels == "1") == 50
    norms = np.linalg.norm(a.features[a.labels == "1"], axis=1)
    assert np.all((norms >= 4.5) & (norms <= 5.5))
    with pytest.raises(ValidationError):
        synth_gaussian_ring(0, 1, 1, dim=1)
