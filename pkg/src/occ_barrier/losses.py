"""One-class losses: value and per-sample gradient scale on ``D_i^2``.

Hypersphere losses are functions of the distances ``D_i = ||phi(x_i) - c||``
and the margins ``u_i = D_i^2 - R^2``. Each returns a ``BatchLossResult`` whose
``scales[i]`` is ``dL/dD_i^2``; ``batch_loss`` turns the scales into the
output-side gradient ``2 * scales[i] * (phi(x_i) - c)`` that ``nn.backward``
consumes. ``R`` never receives a gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from .config import LossConfig, LossKind
from .exceptions import DimensionError, UnsupportedConfigurationError, ValidationError


@dataclass
class BatchLossResult:
    loss_value: float
    scales: np.ndarray
    distances: Optional[np.ndarray] = None
    margins: Optional[np.ndarray] = None
    probs: Optional[np.ndarray] = None
    output_grad: Optional[np.ndarray] = None
    samples_truncated: int = 0
    samples_discarded: int = 0


def softplus(u: np.ndarray) -> np.ndarray:
    """``log(1 + e^u)`` without overflow."""
    return np.logaddexp(0.0, u)


def distance(outputs: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Row-wise Frobenius (Euclidean) distance to the center."""
    out = np.asarray(outputs, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64).reshape(-1)
    if out.ndim != 2 or out.shape[1] != c.shape[0]:
        raise DimensionError(f"outputs {out.shape} do not match center of length {c.shape[0]}")
    return np.linalg.norm(out - c, axis=1)


def _as_distances(distances: np.ndarray) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    if d.size == 0:
        raise ValidationError("empty batch")
    if np.any(d < 0):
        raise ValidationError("distances must be >= 0")
    return d


def lbl_loss(distances: np.ndarray, radius: float, cfg: LossConfig) -> BatchLossResult:
    """Logarithmic barrier ``-(1/(N theta)) sum log(-u_i)`` with ``-u`` floored at ``eps_log``."""
    if not radius > 0:
        raise ValidationError(f"barrier radius must be > 0, got {radius}")
    d = _as_distances(distances)
    n = d.shape[0]
    margins = d * d - radius * radius
    slack = np.maximum(-margins, cfg.eps_log)
    loss = -float(np.sum(np.log(slack))) / (n * cfg.theta)
    scales = 1.0 / (n * cfg.theta * slack)
    return BatchLossResult(loss, scales, distances=d, margins=margins)


def lbl_slack_loss(distances: np.ndarray, radius: float, cfg: LossConfig) -> BatchLossResult:
    """Barrier over the samples inside the slack radius; the rest are discarded.

    Samples with ``D_i >= R`` drop out of the sum (a sample sitting on the
    boundary would make the barrier infinite). ``N`` stays the batch size.
    """
    if not radius > 0:
        raise ValidationError(f"barrier radius must be > 0, got {radius}")
    d = _as_distances(distances)
    n = d.shape[0]
    margins = d * d - radius * radius
    keep = d < radius
    slack = np.maximum(-margins, cfg.eps_log)
    loss = -float(np.sum(np.log(slack[keep]))) / (n * cfg.theta)
    scales = np.where(keep, 1.0 / (n * cfg.theta * slack), 0.0)
    return BatchLossResult(
        loss, scales, distances=d, margins=margins, samples_discarded=int(n - keep.sum())
    )


def lblsig_loss(distances: np.ndarray, radius: float, cfg: LossConfig) -> BatchLossResult:
    """Barrier relaxed by a unilateral Sigmoid, truncated at ``u > Q``.

    Per sample ``-(1/(N theta)) log Sig(-min(u_i, Q)) = softplus(min(u_i, Q)) / (N theta)``;
    the gradient scale is ``(1 - v_i) / (N theta)`` with ``v_i = Sig(-u_i)``, and exactly
    zero for truncated samples.
    """
    if radius < 0:
        raise ValidationError(f"radius must be >= 0, got {radius}")
    d = _as_distances(distances)
    n = d.shape[0]
    margins = d * d - radius * radius
    truncated = margins > cfg.q_trunc
    clipped = np.minimum(margins, cfg.q_trunc)
    probs = expit(-margins)
    active = ~truncated
    discarded = 0
    if cfg.discard_outside:
        outside = d > radius
        discarded = int(np.sum(outside))
        active &= ~outside
    per_sample = softplus(clipped) / (n * cfg.theta)
    if cfg.discard_outside:
        per_sample = np.where(d > radius, 0.0, per_sample)
    # 1 - Sig(-u) == Sig(u)
    scales = np.where(active, expit(clipped) / (n * cfg.theta), 0.0)
    return BatchLossResult(
        float(np.sum(per_sample)),
        scales,
        distances=d,
        margins=margins,
        probs=probs,
        samples_truncated=int(np.sum(truncated)),
        samples_discarded=discarded,
    )


def mse_ocl_loss(distances: np.ndarray) -> BatchLossResult:
    """Mean squared distance to the center."""
    d = _as_distances(distances)
    n = d.shape[0]
    return BatchLossResult(float(np.mean(d * d)), np.full(n, 1.0 / n), distances=d, margins=d * d)


def sbl_loss(distances: np.ndarray, radius: float, cfg: LossConfig) -> BatchLossResult:
    """Soft-boundary loss ``R^2 + (lambda1/N) sum max(0, D_i^2 - R^2)``; ties are inactive."""
    if radius < 0:
        raise ValidationError(f"radius must be >= 0, got {radius}")
    d = _as_distances(distances)
    n = d.shape[0]
    margins = d * d - radius * radius
    active = margins > 0
    loss = radius * radius + cfg.lambda1 / n * float(np.sum(np.where(active, margins, 0.0)))
    scales = np.where(active, cfg.lambda1 / n, 0.0)
    return BatchLossResult(loss, scales, distances=d, margins=margins)


def hrn_penalty(jacobian_norms_sq: np.ndarray, cfg: LossConfig) -> np.ndarray:
    """Per-sample H-regularization ``||grad_x phi||_F^q`` from the squared norms."""
    v = np.asarray(jacobian_norms_sq, dtype=np.float64)
    return np.power(v, cfg.hrn_exponent / 2.0)


def hrn_penalty_coefs(jacobian_norms_sq: np.ndarray, cfg: LossConfig) -> np.ndarray:
    """``d(lambda * penalty_i) / d(||grad_x phi||^2)`` for ``nn.jacobian_backward``."""
    v = np.asarray(jacobian_norms_sq, dtype=np.float64)
    half_q = cfg.hrn_exponent / 2.0
    if half_q == 1.0:
        return np.full_like(v, cfg.lambda_)
    with np.errstate(divide="ignore"):
        coefs = cfg.lambda_ * half_q * np.power(v, half_q - 1.0)
    return np.where(v > 0, coefs, 0.0)


def hrn_loss(
    outputs: np.ndarray, jacobian_penalties: np.ndarray, cfg: LossConfig
) -> BatchLossResult:
    """Negative log-likelihood of ``Sig(phi)`` plus ``lambda * sum ||grad_x phi||_F^q``.

    ``jacobian_penalties`` are the squared norms from ``nn.jacobian_forward``.
    ``output_grad`` carries only the NLL part; the regularizer gradient comes
    from ``nn.jacobian_backward`` with ``hrn_penalty_coefs``.
    """
    phi = np.asarray(outputs, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[1] != 1:
        raise UnsupportedConfigurationError(f"HRN needs a scalar output, got shape {phi.shape}")
    penalties = np.asarray(jacobian_penalties, dtype=np.float64).reshape(-1)
    if penalties.shape[0] != phi.shape[0]:
        raise DimensionError("one Jacobian penalty per row is required")
    nll = float(np.sum(softplus(-phi[:, 0])))
    reg = cfg.lambda_ * float(np.sum(hrn_penalty(penalties, cfg)))
    grad = -expit(-phi)
    return BatchLossResult(
        nll + reg, -grad[:, 0], probs=expit(phi[:, 0]), output_grad=grad
    )


def batch_loss(
    outputs: np.ndarray, center: np.ndarray, radius: float, cfg: LossConfig
) -> BatchLossResult:
    """Dispatch on ``cfg.kind`` for the hypersphere losses and fill ``output_grad``."""
    residuals = np.asarray(outputs, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    d = distance(outputs, center)
    kind = cfg.kind
    if kind is LossKind.LBL:
        result = lbl_loss(d, radius, cfg)
    elif kind is LossKind.LBLSIG:
        result = lblsig_loss(d, radius, cfg)
    elif kind is LossKind.LBL_SLACK:
        result = lbl_slack_loss(d, radius, cfg)
    elif kind is LossKind.MSE_OCL:
        result = mse_ocl_loss(d)
    elif kind is LossKind.SBL:
        result = sbl_loss(d, radius, cfg)
    else:
        raise UnsupportedConfigurationError(f"{kind.value} is not a hypersphere loss")
    result.output_grad = 2.0 * result.scales[:, None] * residuals
    return result


def barrier_curve(theta_values: Sequence[float], u_grid: np.ndarray) -> pd.DataFrame:
    """Points ``(theta, u, -(1/theta) log(-u))`` of the barrier for every theta."""
    u = np.asarray(u_grid, dtype=np.float64).reshape(-1)
    if u.size == 0 or np.any(u >= 0):
        raise ValidationError("barrier curve needs u < 0 everywhere")
    frames = []
    for theta in theta_values:
        if not theta > 0:
            raise ValidationError(f"theta must be > 0, got {theta}")
        frames.append(pd.DataFrame({"theta": float(theta), "u": u, "value": -np.log(-u) / theta}))
    return pd.concat(frames, ignore_index=True)
