"""Central finite-difference oracle for every analytic gradient in the package.

For each weight and bias entry ``w`` the numeric derivative is
``(L(w + h) - L(w - h)) / (2 h)`` with the center and the radius frozen at
their values for the unperturbed network. An entry passes when its relative
error ``|a - n| / max(|a|, |n|, 1e-8)`` is within tolerance or its absolute
error is below ``abs_tol``; ``max_rel_error`` is taken over the entries that
are not absolutely negligible.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from . import losses
from .config import LossConfig, LossKind
from .hypersphere import schedule_radius
from .nn import (
    Activation,
    ModelParams,
    backward,
    forward,
    jacobian_backward,
    jacobian_forward,
    l2_penalty,
    layers_from_dims,
)

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-5
HRN_TOL = 1e-4
ABS_TOL = 1e-8


@dataclass
class GradCheckReport:
    loss_kind: str
    max_rel_error: float
    max_abs_error: float
    worst_location: Tuple[int, str, int, int]
    passed: bool
    step: float
    tolerance: float
    n_params: int
    seed: int
    failure: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


Objective = Callable[[ModelParams], Tuple[float, ModelParams]]


def compare_gradients(
    objective: Objective,
    params: ModelParams,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOL,
    abs_tol: float = ABS_TOL,
    loss_kind: str = "custom",
    seed: int = 0,
) -> GradCheckReport:
    """Check ``objective``'s analytic gradient against central differences."""
    value, analytic = objective(params)
    if not np.isfinite(value):
        cause = f"loss {value!r} at the base point"
        return _failed(loss_kind, params, step, tolerance, seed, cause)
    shifted = params.copy()
    max_rel, max_abs = 0.0, 0.0
    worst: Tuple[int, str, int, int] = (0, "weight", 0, 0)
    analytic_arrays = {(i, name): arr for i, name, arr in analytic.arrays()}
    for layer_idx, name, arr in shifted.arrays():
        grad = analytic_arrays[(layer_idx, name)]
        for flat in range(arr.size):
            pos = np.unravel_index(flat, arr.shape)
            saved = arr[pos]
            arr[pos] = saved + step
            plus, _ = objective(shifted)
            arr[pos] = saved - step
            minus, _ = objective(shifted)
            arr[pos] = saved
            if not (np.isfinite(plus) and np.isfinite(minus)):
                return _failed(
                    loss_kind, params, step, tolerance, seed,
                    f"loss not finite when perturbing layer {layer_idx} {name} {pos}",
                )
            numeric = (plus - minus) / (2.0 * step)
            a = float(grad[pos])
            abs_err = abs(a - numeric)
            rel_err = abs_err / max(abs(a), abs(numeric), 1e-8)
            if abs_err > max_abs:
                max_abs = abs_err
            if abs_err > abs_tol and rel_err > max_rel:
                max_rel = rel_err
                row, col = (0, pos[0]) if len(pos) == 1 else pos
                worst = (layer_idx, name, int(row), int(col))
    return GradCheckReport(
        loss_kind=loss_kind,
        max_rel_error=max_rel,
        max_abs_error=max_abs,
        worst_location=worst,
        passed=max_rel <= tolerance,
        step=step,
        tolerance=tolerance,
        n_params=params.n_params,
        seed=seed,
    )


def _failed(kind, params, step, tolerance, seed, cause) -> GradCheckReport:
    return GradCheckReport(
        loss_kind=kind,
        max_rel_error=float("inf"),
        max_abs_error=float("inf"),
        worst_location=(0, "weight", 0, 0),
        passed=False,
        step=step,
        tolerance=tolerance,
        n_params=params.n_params,
        seed=seed,
        failure=cause,
    )


@dataclass
class LossProblem:
    """A network, a batch and the frozen hypersphere for one loss kind."""

    params: ModelParams
    inputs: np.ndarray
    center: np.ndarray
    radius: float
    cfg: LossConfig
    include_data: bool = True

    def objective(self, params: ModelParams) -> Tuple[float, ModelParams]:
        reg_value, grads = l2_penalty(params, self.cfg.weight_decay)
        value = reg_value
        if not self.include_data:
            return value, grads
        outputs, cache = forward(params, self.inputs)
        if self.cfg.kind is LossKind.HRN:
            tape = jacobian_forward(params, self.inputs)
            result = losses.hrn_loss(outputs, tape.values, self.cfg)
            grads = grads + backward(params, cache, result.output_grad)
            grads = grads + jacobian_backward(
                params, tape, losses.hrn_penalty_coefs(tape.values, self.cfg)
            )
        else:
            result = losses.batch_loss(outputs, self.center, self.radius, self.cfg)
            grads = grads + backward(params, cache, result.output_grad)
        return value + result.loss_value, grads


def build_problem(
    kind: LossKind,
    dims: Sequence[int] = (4, 6, 6, 2),
    seed: int = 1,
    batch: int = 8,
    lam: float = 0.0,
    activation: Activation = Activation.LEAKY_RELU,
    truncate_sample: bool = False,
    include_data: bool = True,
    loss_overrides: Optional[Dict[str, Any]] = None,
    hrn_lambda: float = 1.0,
) -> LossProblem:
    """Random seed-controlled problem; the radius comes from the loss kind's own scheduler.

    With ``truncate_sample`` the first input row is pushed far out so that its
    LBLSig margin exceeds ``Q``.
    """
    kind = LossKind(kind)
    dims = list(dims)
    if kind is LossKind.HRN:
        dims[-1] = 1
    # for HRN lambda_ weights the H-regularization and lambda2 the L2 term
    data_lambda = hrn_lambda if kind is LossKind.HRN else lam
    cfg_kw: Dict[str, Any] = {"kind": kind, "lambda_": data_lambda, "lambda2": lam}
    cfg_kw.update(loss_overrides or {})
    cfg = LossConfig(**cfg_kw)
    params = layers_from_dims(dims, activation=activation, seed=seed)
    rng = np.random.default_rng(seed + 10_000)
    inputs = rng.uniform(-1.0, 1.0, size=(batch, dims[0]))
    outputs, _ = forward(params, inputs)
    center = outputs.mean(axis=0)
    if truncate_sample:
        direction = rng.standard_normal(dims[0])
        for scale in (10.0, 100.0, 1000.0, 10_000.0):
            inputs[0] = scale * direction / np.linalg.norm(direction)
            outputs, _ = forward(params, inputs)
            d = losses.distance(outputs, center)
            radius = schedule_radius(kind, d, cfg)
            if d[0] ** 2 - radius**2 > cfg.q_trunc:
                break
    outputs, _ = forward(params, inputs)
    radius = schedule_radius(kind, losses.distance(outputs, center), cfg)
    return LossProblem(params, inputs, center, radius, cfg, include_data)


def check_loss_gradient(
    kind: LossKind,
    dims: Sequence[int] = (4, 6, 6, 2),
    seed: int = 1,
    step: float = DEFAULT_STEP,
    tol: Optional[float] = None,
    lam: float = 0.0,
    activation: Activation = Activation.LEAKY_RELU,
    truncate_sample: bool = False,
    regularizer_only: bool = False,
    batch: int = 8,
    hrn_lambda: float = 1.0,
) -> GradCheckReport:
    """Finite-difference check of one loss kind on a random small network."""
    kind = LossKind(kind)
    if tol is None:
        tol = HRN_TOL if kind is LossKind.HRN else DEFAULT_TOL
    problem = build_problem(
        kind, dims, seed, batch, lam, activation, truncate_sample, not regularizer_only,
        hrn_lambda=hrn_lambda,
    )
    if problem.params.n_params > 10_000:
        logger.warning("gradient check over %d parameters will be slow", problem.params.n_params)
    report = compare_gradients(
        problem.objective, problem.params, step, tol, loss_kind=kind.value, seed=seed
    )
    report.details = {
        "dims": [problem.params.input_dim]
        + [l.fan_out for l in problem.params.layers],
        "radius": problem.radius,
        "lambda": lam,
        "regularizer_only": regularizer_only,
        "truncate_sample": truncate_sample,
        "activation": problem.params.activation.value,
    }
    logger.info(
        "gradcheck %s seed %d: max rel %.3g, passed %s", kind.value, seed, report.max_rel_error,
        report.passed,
    )
    return report
