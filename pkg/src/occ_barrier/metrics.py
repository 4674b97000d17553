"""Evaluation metrics: rank-based AUC, confusion counts at a threshold, G-mean.

Errors are anomaly scores (larger = more outlying). Target is the positive
class for TPR, so ``TPR`` is the target acceptance rate and ``TNR`` the outlier
rejection rate.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn.metrics import auc as sk_trapezoid_auc
from sklearn.metrics import roc_curve

from .exceptions import ValidationError
from .hypersphere import decide_all


class Label(str, Enum):
    TARGET = "target"
    OUTLIER = "outlier"


@dataclass
class ScoredSample:
    error: float
    label: Label

    def __post_init__(self) -> None:
        self.label = Label(self.label)
        if not np.isfinite(self.error) or self.error < 0:
            raise ValidationError(f"error must be finite and >= 0, got {self.error}")


def split_samples(samples: Iterable[ScoredSample]) -> Tuple[np.ndarray, np.ndarray]:
    """``(errors, labels)`` arrays from a list of ``ScoredSample``."""
    rows = list(samples)
    return (
        np.array([s.error for s in rows], dtype=np.float64),
        np.array([s.label.value for s in rows], dtype=object),
    )


def outlier_mask(labels: Sequence[Any]) -> np.ndarray:
    """Boolean mask of outlier rows; accepts ``Label`` members or their string values."""
    values = [getattr(v, "value", v) for v in labels]
    unknown = set(values) - {Label.TARGET.value, Label.OUTLIER.value}
    if unknown:
        raise ValidationError(f"unknown labels {sorted(map(str, unknown))}")
    return np.array([v == Label.OUTLIER.value for v in values], dtype=bool)


def auc(errors: np.ndarray, labels: Sequence[Any]) -> float:
    """Mann-Whitney AUC: P(outlier error > target error) + 0.5 P(tie)."""
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    is_out = outlier_mask(labels)
    if is_out.shape[0] != e.shape[0]:
        raise ValidationError("errors and labels differ in length")
    n_out = int(is_out.sum())
    n_tgt = int(e.shape[0] - n_out)
    if n_out == 0 or n_tgt == 0:
        raise ValidationError("AUC needs at least one target and one outlier")
    ranks = rankdata(e, method="average")
    u_stat = float(ranks[is_out].sum()) - n_out * (n_out + 1) / 2.0
    return u_stat / (n_out * n_tgt)


@dataclass
class Confusion:
    true_positives: int = 0
    false_positives: int = 0
    true_negatives: int = 0
    false_negatives: int = 0

    @property
    def n_targets(self) -> int:
        return self.true_positives + self.false_negatives

    @property
    def n_outliers(self) -> int:
        return self.true_negatives + self.false_positives


def confusion(errors: np.ndarray, labels: Sequence[Any], eta: float) -> Confusion:
    """Tally the decision rule ``error <= eta -> Target`` against the labels."""
    accepted = decide_all(errors, eta)
    is_out = outlier_mask(labels)
    return Confusion(
        true_positives=int(np.sum(accepted & ~is_out)),
        false_positives=int(np.sum(accepted & is_out)),
        true_negatives=int(np.sum(~accepted & is_out)),
        false_negatives=int(np.sum(~accepted & ~is_out)),
    )


def gmean(counts: Confusion) -> float:
    """``sqrt(TPR * TNR)``."""
    if counts.n_targets == 0 or counts.n_outliers == 0:
        raise ValidationError("G-mean needs at least one target and one outlier")
    tpr = counts.true_positives / counts.n_targets
    tnr = counts.true_negatives / counts.n_outliers
    return float(np.sqrt(tpr * tnr))


def roc_points(errors: np.ndarray, labels: Sequence[Any]) -> pd.DataFrame:
    """(FPR, TPR) swept over every threshold, outliers as the detected class."""
    is_out = outlier_mask(labels)
    fpr, tpr, thresholds = roc_curve(
        is_out.astype(int), np.asarray(errors, dtype=np.float64), drop_intermediate=False
    )
    return pd.DataFrame({"fpr": fpr, "tpr": tpr, "threshold": thresholds})


def trapezoid_auc(points: pd.DataFrame) -> float:
    return float(sk_trapezoid_auc(points["fpr"].to_numpy(), points["tpr"].to_numpy()))


@dataclass
class EvaluationReport:
    auc: Optional[float]
    gmean: Optional[float]
    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int
    threshold: float
    n_targets: int
    n_outliers: int
    auc_available: bool = True
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def build_report(
    errors: np.ndarray, labels: Sequence[Any], eta: float, metadata: Optional[Dict[str, Any]] = None
) -> EvaluationReport:
    """Score a labelled set: AUC when both classes are present, counts at ``eta`` always."""
    counts = confusion(errors, labels, eta)
    both = counts.n_targets > 0 and counts.n_outliers > 0
    return EvaluationReport(
        auc=auc(errors, labels) if both else None,
        gmean=gmean(counts) if both else None,
        true_positives=counts.true_positives,
        false_positives=counts.false_positives,
        true_negatives=counts.true_negatives,
        false_negatives=counts.false_negatives,
        threshold=float(eta),
        n_targets=counts.n_targets,
        n_outliers=counts.n_outliers,
        auc_available=both,
        metadata=dict(metadata or {}),
    )
