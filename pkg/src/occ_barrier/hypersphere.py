"""Hypersphere state: center policies, radius schedulers, threshold and decision rule.

All quantiles in this module share one definition, linear interpolation between
closest ranks: for sorted ``x_0 <= ... <= x_{n-1}`` and ``h = q (n - 1)``,
``Q(q) = x_floor(h) + (h - floor(h)) (x_ceil(h) - x_floor(h))``. This is numpy's
``method="linear"``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .exceptions import DimensionError, ValidationError
from .nn import ModelParams, forward

if TYPE_CHECKING:
    from .config import LossConfig, LossKind

logger = logging.getLogger(__name__)

RADIUS_FLOOR = 1e-6


class CenterPolicy(str, Enum):
    MEAN_OF_INITIAL_OUTPUTS = "mean-of-initial-outputs"
    FIXED_VECTOR = "fixed-vector"
    MEAN_OF_INPUTS = "mean-of-inputs"


class Decision(str, Enum):
    TARGET = "target"
    OTHER = "other"


@dataclass
class HypersphereState:
    center: np.ndarray
    radius: float = 0.0
    threshold: float = 0.0
    center_policy: CenterPolicy = CenterPolicy.MEAN_OF_INITIAL_OUTPUTS

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if self.radius < 0 or self.threshold < 0:
            raise ValidationError("radius and threshold must be >= 0")


def init_center(
    policy: CenterPolicy,
    params: ModelParams,
    train_inputs: np.ndarray,
    fixed: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Hypersphere center ``c`` for the given policy."""
    policy = CenterPolicy(policy)
    if policy is CenterPolicy.FIXED_VECTOR:
        if fixed is None:
            raise ValidationError("fixed-vector policy needs a center vector")
        center = np.asarray(fixed, dtype=np.float64).reshape(-1)
        if center.shape[0] != params.output_dim:
            raise ValidationError(
                f"fixed center has {center.shape[0]} entries, network outputs {params.output_dim}"
            )
        return center

    x = np.asarray(train_inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError("center initialization needs a non-empty training matrix")
    if policy is CenterPolicy.MEAN_OF_INPUTS:
        if params.output_dim != x.shape[1]:
            raise ValidationError("mean-of-inputs center requires output_dim == input_dim")
        return x.mean(axis=0)
    outputs, _ = forward(params, x)
    return outputs.mean(axis=0)


def quantile(values: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile, ``q`` in ``[0, 1]``."""
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValidationError("quantile of an empty sequence")
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"quantile level {q} outside [0, 1]")
    return float(np.quantile(x, q, method="linear"))


def radius_lbl(distances: np.ndarray) -> float:
    """Barrier radius reset: twice the largest distance, floored at ``RADIUS_FLOOR``."""
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    if d.size == 0:
        raise ValidationError("radius needs at least one distance")
    top = float(d.max())
    return 2.0 * top if top > 0.0 else RADIUS_FLOOR


def radius_quantile_slack(distances: np.ndarray, q: float) -> float:
    """Slack radius: the ``q``-quantile of the distances (not squared)."""
    if not 0.0 < q <= 1.0:
        raise ValidationError(f"radius quantile {q} outside (0, 1]")
    return quantile(distances, q)


def radius_sbl_quantile(squared_distances: np.ndarray, nu: float) -> float:
    """Soft-boundary update; returns ``R^2`` as the ``(1 - nu)``-quantile of ``D^2``."""
    if not 0.0 < nu < 1.0:
        raise ValidationError(f"nu {nu} outside (0, 1)")
    return quantile(squared_distances, 1.0 - nu)


def compute_threshold(train_errors: np.ndarray, reject_fraction: float) -> float:
    """Threshold ``eta`` rejecting ``reject_fraction`` of the training errors."""
    if not 0.0 <= reject_fraction < 1.0:
        raise ValidationError(f"reject fraction {reject_fraction} outside [0, 1)")
    return quantile(train_errors, 1.0 - reject_fraction)


def decide(error: float, eta: float) -> Decision:
    return Decision.TARGET if error <= eta else Decision.OTHER


def decide_all(errors: np.ndarray, eta: float) -> np.ndarray:
    """Vectorized ``decide``; True marks Target."""
    return np.asarray(errors, dtype=np.float64) <= eta


def schedule_radius(kind: LossKind, distances: np.ndarray, loss_cfg: LossConfig) -> float:
    """Radius ``R`` for one batch under the scheduler that belongs to ``kind``."""
    name = kind.value
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    if name == "lbl":
        return radius_lbl(d)
    if name == "lblsig":
        return radius_quantile_slack(d, loss_cfg.radius_quantile)
    if name == "lbl-slack":
        return max(radius_quantile_slack(d, loss_cfg.radius_quantile), RADIUS_FLOOR)
    if name == "sbl":
        return float(np.sqrt(radius_sbl_quantile(d * d, loss_cfg.nu)))
    if name in ("mse-ocl", "hrn"):
        return 0.0
    raise ValidationError(f"no radius scheduler for loss kind {name!r}")


def check_center(center: np.ndarray, output_dim: int) -> None:
    if np.asarray(center).reshape(-1).shape[0] != output_dim:
        raise DimensionError(
            f"center has {np.asarray(center).size} entries, outputs have {output_dim}"
        )
