"""Datasets: CSV ingestion, one-class splits, [-1, 1] scaling and a synthetic ring.

A one-class split trains on the target class only; every remaining row goes to
the test set relabelled Target / Outlier. Scaling statistics come from the
training targets alone and test rows are clamped to the training range.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import IngestionError, ValidationError
from .metrics import Label

logger = logging.getLogger(__name__)


class DatasetSpec(NamedTuple):
    train_rows: int
    train_targets: int
    test_rows: int
    test_targets: int
    n_features: int


# Published sizes of the non-image benchmark splits (train rows / targets, test rows / targets).
DATASET_SPECS: Dict[str, DatasetSpec] = {
    "abalone": DatasetSpec(2088, 703, 2089, 704, 8),
    "arrhythmia": DatasetSpec(225, 122, 227, 123, 274),
    "basehock": DatasetSpec(1195, 596, 798, 398, 4862),
    "diabetes": DatasetSpec(383, 252, 385, 253, 8),
    "diabetic": DatasetSpec(806, 378, 345, 162, 19),
    "ecoli": DatasetSpec(168, 26, 168, 26, 7),
    "heart": DatasetSpec(100, 54, 170, 96, 13),
    "leukemia": DatasetSpec(38, 27, 34, 20, 7129),
    "liver": DatasetSpec(172, 72, 173, 73, 6),
    "magic": DatasetSpec(10000, 6430, 9020, 5902, 10),
    "online-news": DatasetSpec(27751, 12943, 11893, 5547, 59),
    "rcv1-4class": DatasetSpec(5775, 1213, 3850, 809, 29992),
    "sonar": DatasetSpec(103, 55, 105, 56, 60),
}


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray  # canonical class-id strings
    name: str = "dataset"

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray([canonical_label(v) for v in self.labels], dtype=object)
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise ValidationError(f"features must be a 2-D matrix, got shape {self.features.shape}")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValidationError("one label per row is required")

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])


def canonical_label(value) -> str:
    """Class ids as strings; integral numbers lose their decimal part (``1.0 -> "1"``)."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return str(int(value)) if float(value).is_integer() else repr(float(value))
    text = str(value).strip()
    try:
        number = float(text)
    except ValueError:
        return text
    return canonical_label(number) if np.isfinite(number) else text


@dataclass
class MinMaxScaler:
    """Per-feature affine map onto ``[-1, 1]``; constant features map to 0."""

    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "MinMaxScaler":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValidationError("scaler needs a non-empty matrix")
        return cls(x.min(axis=0), x.max(axis=0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        span = self.maxs - self.mins
        constant = span == 0
        scaled = 2.0 * (x - self.mins) / np.where(constant, 1.0, span) - 1.0
        scaled[:, constant] = 0.0
        return np.clip(scaled, -1.0, 1.0)


@dataclass
class OccSplit:
    train_targets: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray  # Label values
    normalizer: MinMaxScaler
    target_class: str
    name: str = "dataset"
    normalized: bool = False

    @property
    def n_features(self) -> int:
        return int(self.train_targets.shape[1])


# ingestion -------------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(
    path: Union[str, Path], label_column: Union[int, str] = "last", name: Optional[str] = None
) -> Dataset:
    """Read a comma-separated file of numeric features plus one label column.

    A first row whose feature cells are not all numeric is taken as a header.
    Rows and columns in error messages are 1-based file positions.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    try:
        frame = pd.read_csv(
            path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=True,
            comment="#",
        )
    except pd.errors.EmptyDataError as exc:
        raise IngestionError(f"{path}: file is empty") from exc
    except pd.errors.ParserError as exc:
        raise IngestionError(f"{path}: ragged rows: {str(exc).strip()}") from exc

    n_cols = frame.shape[1]
    if n_cols < 2:
        raise IngestionError(f"{path}: need at least one feature column and a label column")
    if str(label_column).lower() == "last":
        label_idx = n_cols - 1
    else:
        try:
            label_idx = int(label_column)
        except ValueError as exc:
            raise IngestionError(f"{path}: label column {label_column!r} is not an index") from exc
        if label_idx < 0:
            label_idx += n_cols
        if not 0 <= label_idx < n_cols:
            raise IngestionError(f"{path}: label column {label_column} out of range")
    feature_idx = [j for j in range(n_cols) if j != label_idx]

    first_row = 1
    if not all(_is_number(frame.iat[0, j]) for j in feature_idx):
        frame = frame.iloc[1:]
        first_row = 2
    if frame.shape[0] == 0:
        raise IngestionError(f"{path}: no data rows")

    cells = frame.to_numpy()
    features = np.empty((cells.shape[0], len(feature_idx)), dtype=np.float64)
    for i in range(cells.shape[0]):
        for k, j in enumerate(feature_idx):
            cell = cells[i, j]
            # short rows come back padded with NaN
            if not isinstance(cell, str) or not cell.strip():
                raise IngestionError(f"{path}: missing cell", row=first_row + i, column=j + 1)
            cell = cell.strip()
            try:
                features[i, k] = float(cell)
            except ValueError:
                raise IngestionError(
                    f"{path}: non-numeric cell {cell!r}", row=first_row + i, column=j + 1
                ) from None
        label_cell = cells[i, label_idx]
        if not isinstance(label_cell, str) or not label_cell.strip():
            raise IngestionError(f"{path}: missing label", row=first_row + i, column=label_idx + 1)
    if not np.all(np.isfinite(features)):
        bad = np.argwhere(~np.isfinite(features))[0]
        raise IngestionError(
            f"{path}: non-finite value", row=first_row + int(bad[0]), column=feature_idx[bad[1]] + 1
        )
    dataset = Dataset(features, cells[:, label_idx], name=name or path.stem)
    logger.info("loaded %s: %d rows, %d features", path, dataset.n_rows, features.shape[1])
    return dataset


def write_csv(dataset: Dataset, path: Union[str, Path], comment: Optional[str] = None) -> Path:
    """Write features and labels with a header row, floats at 17 significant digits.

    ``comment`` becomes a leading ``# ...`` line, which ``load_csv`` skips.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        dataset.features, columns=[f"x{j}" for j in range(dataset.features.shape[1])]
    )
    frame["label"] = dataset.labels
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        frame.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    return path


# splits ----------------------------------------------------------------------


def make_occ_split(
    dataset: Dataset,
    target_class,
    train_fraction: float = 0.5,
    seed: int = 0,
    test: Optional[Dataset] = None,
    train_indices: Optional[Sequence[int]] = None,
) -> OccSplit:
    """Build a one-class split with ``target_class`` as the only training class.

    Three ways to choose the training rows, in order of precedence:

    * ``test`` given: ``dataset`` is the training file; its target rows train,
      all of ``test`` is evaluated (published split files).
    * ``train_indices`` given: those rows of ``dataset`` that are targets train;
      every row not listed is tested.
    * otherwise a seeded ``train_fraction`` of the target rows trains and the
      rest of the dataset is tested.
    """
    target = canonical_label(target_class)
    is_target = dataset.labels == target
    if not np.any(is_target):
        raise ValidationError(f"target class {target!r} not present in {dataset.name}")

    if test is not None:
        if test.features.shape[1] != dataset.features.shape[1]:
            raise ValidationError("train and test files have different feature counts")
        train = dataset.features[is_target]
        test_x, test_y = test.features, test.labels
        _check_published_sizes(dataset, test, target)
    elif train_indices is not None:
        chosen = np.zeros(dataset.n_rows, dtype=bool)
        chosen[np.asarray(train_indices, dtype=int)] = True
        dropped = int(np.sum(chosen & ~is_target))
        if dropped:
            logger.warning("%d non-target rows in the training indices are discarded", dropped)
        train = dataset.features[chosen & is_target]
        test_x, test_y = dataset.features[~chosen], dataset.labels[~chosen]
    else:
        if not 0.0 < train_fraction <= 1.0:
            raise ValidationError("train_fraction must lie in (0, 1]")
        rng = np.random.default_rng(seed)
        target_rows = rng.permutation(np.flatnonzero(is_target))
        n_train = max(1, int(round(train_fraction * target_rows.size)))
        chosen = np.zeros(dataset.n_rows, dtype=bool)
        chosen[target_rows[:n_train]] = True
        train = dataset.features[chosen]
        test_x, test_y = dataset.features[~chosen], dataset.labels[~chosen]

    if train.shape[0] == 0:
        raise ValidationError("no target rows selected for training")
    test_labels = np.array(
        [Label.TARGET.value if y == target else Label.OUTLIER.value for y in test_y], dtype=object
    )
    return OccSplit(
        train_targets=train,
        test_features=test_x,
        test_labels=test_labels,
        normalizer=MinMaxScaler.fit(train),
        target_class=target,
        name=dataset.name,
    )


def _check_published_sizes(train: Dataset, test: Dataset, target: str) -> None:
    spec = DATASET_SPECS.get(train.name.lower())
    if spec is None:
        return
    observed = DatasetSpec(
        train.n_rows,
        int(np.sum(train.labels == target)),
        test.n_rows,
        int(np.sum(test.labels == target)),
        int(train.features.shape[1]),
    )
    if observed != spec:
        logger.warning("%s split sizes %s differ from the published %s", train.name, observed, spec)


def normalize(split: OccSplit) -> OccSplit:
    """Map features onto ``[-1, 1]`` with the statistics fitted on the training targets."""
    if split.normalized:
        return split
    return replace(
        split,
        train_targets=split.normalizer.transform(split.train_targets),
        test_features=split.normalizer.transform(split.test_features)
        if split.test_features.shape[0]
        else split.test_features,
        normalized=True,
    )


# synthetic data --------------------------------------------------------------


def synth_gaussian_ring(
    seed: int,
    n_targets: int,
    n_outliers: int,
    dim: int = 2,
    ring_radius: float = 5.0,
    jitter: float = 0.1,
) -> Dataset:
    """Standard-normal targets (label 0) and outliers on a sphere of ``ring_radius`` (label 1).

    Outlier norms are ``ring_radius * (1 + U(-jitter, jitter))``.
    """
    if dim < 2:
        raise ValidationError("dim must be >= 2")
    if not ring_radius > 0:
        raise ValidationError("ring_radius must be > 0")
    if n_targets < 0 or n_outliers < 0:
        raise ValidationError("class counts must be >= 0")
    rng = np.random.default_rng(seed)
    targets = rng.standard_normal((n_targets, dim))
    directions = rng.standard_normal((n_outliers, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = ring_radius * (1.0 + rng.uniform(-jitter, jitter, size=(n_outliers, 1)))
    features = np.vstack([targets, directions * radii])
    labels = np.array(["0"] * n_targets + ["1"] * n_outliers, dtype=object)
    return Dataset(features, labels, name=f"ring-{seed}")
