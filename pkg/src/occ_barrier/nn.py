"""Dense MLP with hand-derived forward/backward passes and an Adam optimizer.

Every array is float64. A network is a list of ``Layer`` objects; hidden layers
apply the configured activation and the last layer is linear, so the output of
the network is ``z_L = a_{L-1} @ W_L + b_L``.

Gradients are returned as ``ModelParams`` with the same layout as the
parameters they refer to, which keeps the optimizer and the finite-difference
oracle free of any flattening logic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DimensionError, UnsupportedConfigurationError, ValidationError


class Activation(str, Enum):
    RELU = "relu"
    LEAKY_RELU = "leaky-relu"
    TANH = "tanh"


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)

    @property
    def fan_in(self) -> int:
        return int(self.weight.shape[0])

    @property
    def fan_out(self) -> int:
        return int(self.weight.shape[1])


@dataclass
class ModelParams:
    layers: List[Layer]
    activation: Activation = Activation.LEAKY_RELU
    slope: float = 0.01

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValidationError("a network needs at least one layer")
        for idx, layer in enumerate(self.layers):
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.fan_out,):
                raise DimensionError(
                    f"layer {idx}: weight {layer.weight.shape} and bias {layer.bias.shape} disagree"
                )
        for idx in range(1, len(self.layers)):
            if self.layers[idx].fan_in != self.layers[idx - 1].fan_out:
                raise DimensionError(
                    f"layer {idx} expects {self.layers[idx].fan_in} inputs, "
                    f"layer {idx - 1} produces {self.layers[idx - 1].fan_out}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def hidden_dim(self) -> int:
        return self.layers[0].fan_out if len(self.layers) > 1 else 0

    @property
    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def arrays(self) -> Iterator[Tuple[int, str, np.ndarray]]:
        """Yield ``(layer_index, "weight" | "bias", array)`` in a fixed order."""
        for idx, layer in enumerate(self.layers):
            yield idx, "weight", layer.weight
            yield idx, "bias", layer.bias

    def copy(self) -> "ModelParams":
        return ModelParams(
            [Layer(l.weight.copy(), l.bias.copy()) for l in self.layers],
            self.activation,
            self.slope,
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            [Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in self.layers],
            self.activation,
            self.slope,
        )

    def token(self) -> Tuple[int, ...]:
        """Identity of the underlying buffers, used to detect stale tapes."""
        return tuple(id(a) for _, _, a in self.arrays())

    def __add__(self, other: "ModelParams") -> "ModelParams":
        _check_same_layout(self, other)
        return ModelParams(
            [
                Layer(a.weight + b.weight, a.bias + b.bias)
                for a, b in zip(self.layers, other.layers)
            ],
            self.activation,
            self.slope,
        )

    def scaled(self, factor: float) -> "ModelParams":
        return ModelParams(
            [Layer(l.weight * factor, l.bias * factor) for l in self.layers],
            self.activation,
            self.slope,
        )


@dataclass
class TapeCache:
    """Pre- and post-activations of one forward pass, batch-major."""

    inputs: np.ndarray
    pre: List[np.ndarray]
    post: List[np.ndarray]
    token: Tuple[int, ...] = field(default=())


def _check_same_layout(a: ModelParams, b: ModelParams) -> None:
    if len(a.layers) != len(b.layers):
        raise DimensionError(f"{len(a.layers)} layers vs {len(b.layers)} layers")
    for idx, (la, lb) in enumerate(zip(a.layers, b.layers)):
        if la.weight.shape != lb.weight.shape or la.bias.shape != lb.bias.shape:
            raise DimensionError(f"layer {idx}: shapes {la.weight.shape} vs {lb.weight.shape}")


def init_params(
    input_dim: int,
    hidden_dim: int,
    output_dim: int,
    n_hidden_layers: int = 2,
    activation: Activation = Activation.LEAKY_RELU,
    slope: float = 0.01,
    seed: Optional[int] = 0,
    rng: Optional[np.random.Generator] = None,
) -> ModelParams:
    """Glorot-uniform weights, ``a = sqrt(6 / (fan_in + fan_out))``, and zero biases."""
    if min(input_dim, output_dim) < 1 or (n_hidden_layers > 0 and hidden_dim < 1):
        raise ValidationError("layer widths must be positive")
    if n_hidden_layers < 0:
        raise ValidationError("n_hidden_layers must be >= 0")
    rng = rng if rng is not None else np.random.default_rng(seed)
    widths = [input_dim] + [hidden_dim] * n_hidden_layers + [output_dim]
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return ModelParams(layers, Activation(activation), float(slope))


def layers_from_dims(
    dims: Sequence[int],
    activation: Activation = Activation.LEAKY_RELU,
    slope: float = 0.01,
    seed: Optional[int] = 0,
) -> ModelParams:
    """Build a network from explicit widths, e.g. ``(4, 6, 6, 2)``.

    Biases are drawn small and non-zero so gradient checks exercise them.
    """
    if len(dims) < 2:
        raise ValidationError("dims needs an input and an output width")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(
            Layer(
                rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                rng.uniform(-0.1, 0.1, fan_out),
            )
        )
    return ModelParams(layers, Activation(activation), float(slope))


# activation and its first two derivatives ---------------------------------


def _act(z: np.ndarray, params: ModelParams) -> np.ndarray:
    if params.activation is Activation.TANH:
        return np.tanh(z)
    if params.activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.where(z > 0, z, params.slope * z)


def _act_d1(z: np.ndarray, params: ModelParams) -> np.ndarray:
    if params.activation is Activation.TANH:
        return 1.0 - np.tanh(z) ** 2
    if params.activation is Activation.RELU:
        return (z > 0).astype(np.float64)
    return np.where(z > 0, 1.0, params.slope)


def _act_d2(z: np.ndarray, params: ModelParams) -> np.ndarray:
    if params.activation is Activation.TANH:
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)
    # piecewise linear: zero almost everywhere
    return np.zeros_like(z)


def _as_batch(inputs: np.ndarray, params: ModelParams) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionError(f"expected inputs of width {params.input_dim}, got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValidationError("batch must contain at least one row")
    if not np.all(np.isfinite(x)):
        raise ValidationError("inputs contain NaN or Inf")
    return x


def forward(params: ModelParams, inputs: np.ndarray) -> Tuple[np.ndarray, TapeCache]:
    """Evaluate the network on a batch and keep the tape needed by ``backward``."""
    a = _as_batch(inputs, params)
    pre: List[np.ndarray] = []
    post: List[np.ndarray] = [a]
    last = len(params.layers) - 1
    for idx, layer in enumerate(params.layers):
        z = a @ layer.weight + layer.bias
        pre.append(z)
        a = z if idx == last else _act(z, params)
        post.append(a)
    return a, TapeCache(inputs=post[0], pre=pre, post=post, token=params.token())


def predict_outputs(params: ModelParams, inputs: np.ndarray) -> np.ndarray:
    return forward(params, inputs)[0]


def backward(params: ModelParams, cache: TapeCache, output_grad: np.ndarray) -> ModelParams:
    """Jacobian-transpose product of the network at the cached point."""
    if cache.token != params.token() or len(cache.pre) != len(params.layers):
        raise ValidationError("tape was not produced by these parameters")
    delta = np.asarray(output_grad, dtype=np.float64)
    batch = cache.inputs.shape[0]
    if delta.shape != (batch, params.output_dim):
        raise DimensionError(
            f"output gradient must have shape {(batch, params.output_dim)}, got {delta.shape}"
        )
    grads: List[Layer] = [None] * len(params.layers)  # type: ignore[list-item]
    last = len(params.layers) - 1
    for idx in range(last, -1, -1):
        if idx != last:
            delta = delta * _act_d1(cache.pre[idx], params)
        grads[idx] = Layer(cache.post[idx].T @ delta, delta.sum(axis=0))
        delta = delta @ params.layers[idx].weight.T
    return ModelParams(grads, params.activation, params.slope)


# input-Jacobian penalty ----------------------------------------------------


@dataclass
class JacobianTape:
    values: np.ndarray  # ||d phi / d x||^2 per row
    jac: np.ndarray  # (batch, input_dim)
    gs: List[np.ndarray]  # gs[l] = d phi / d z_l, one per layer
    cache: TapeCache


def jacobian_forward(params: ModelParams, inputs: np.ndarray) -> JacobianTape:
    """Squared Frobenius norm of the input gradient for every row of a scalar network."""
    if params.output_dim != 1:
        raise UnsupportedConfigurationError(
            f"input-Jacobian penalty needs a scalar output, network has {params.output_dim}"
        )
    _, cache = forward(params, inputs)
    n = len(params.layers)
    batch = cache.inputs.shape[0]
    gs: List[np.ndarray] = [None] * n  # type: ignore[list-item]
    gs[n - 1] = np.ones((batch, 1))
    for idx in range(n - 1, 0, -1):
        r = gs[idx] @ params.layers[idx].weight.T
        gs[idx - 1] = r * _act_d1(cache.pre[idx - 1], params)
    jac = gs[0] @ params.layers[0].weight.T
    return JacobianTape(values=np.sum(jac * jac, axis=1), jac=jac, gs=gs, cache=cache)


def jacobian_backward(params: ModelParams, tape: JacobianTape, coefs: np.ndarray) -> ModelParams:
    """Gradient of ``sum_i coefs[i] * values[i]`` with respect to every weight and bias."""
    coefs = np.asarray(coefs, dtype=np.float64).reshape(-1)
    if coefs.shape[0] != tape.values.shape[0]:
        raise DimensionError("one coefficient per row is required")
    n = len(params.layers)
    cache = tape.cache
    w_bar = [np.zeros_like(l.weight) for l in params.layers]
    b_bar = [np.zeros_like(l.bias) for l in params.layers]
    z_bar: List[Optional[np.ndarray]] = [None] * n

    # reverse through the Jacobian recursion
    j_bar = 2.0 * coefs[:, None] * tape.jac
    w_bar[0] += j_bar.T @ tape.gs[0]
    g_bar = j_bar @ params.layers[0].weight
    for idx in range(0, n - 1):
        r = tape.gs[idx + 1] @ params.layers[idx + 1].weight.T
        d1 = _act_d1(cache.pre[idx], params)
        z_bar[idx] = g_bar * r * _act_d2(cache.pre[idx], params)
        r_bar = g_bar * d1
        w_bar[idx + 1] += r_bar.T @ tape.gs[idx + 1]
        g_bar = r_bar @ params.layers[idx + 1].weight

    # reverse through the forward pass; the scalar output itself does not enter the penalty
    carry = np.zeros_like(cache.pre[n - 1])
    for idx in range(n - 1, -1, -1):
        zb = carry if z_bar[idx] is None else z_bar[idx] + carry
        w_bar[idx] += cache.post[idx].T @ zb
        b_bar[idx] += zb.sum(axis=0)
        if idx > 0:
            carry = (zb @ params.layers[idx].weight.T) * _act_d1(cache.pre[idx - 1], params)
    return ModelParams(
        [Layer(w, b) for w, b in zip(w_bar, b_bar)], params.activation, params.slope
    )


def input_jacobian_norm_sq(params: ModelParams, x: np.ndarray) -> Tuple[float, ModelParams]:
    """``||d phi / d x||_F^2`` at a single input, and its gradient w.r.t. all parameters."""
    tape = jacobian_forward(params, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return float(tape.values[0]), jacobian_backward(params, tape, np.ones(1))


# regularization and optimizer -----------------------------------------------


def l2_penalty(params: ModelParams, lam: float) -> Tuple[float, ModelParams]:
    """``(lam / 2) * sum ||W||_F^2`` over weights only, with gradient ``lam * W``."""
    value = 0.5 * lam * sum(float(np.sum(l.weight * l.weight)) for l in params.layers)
    grads = ModelParams(
        [Layer(lam * l.weight, np.zeros_like(l.bias)) for l in params.layers],
        params.activation,
        params.slope,
    )
    return value, grads


@dataclass
class AdamState:
    first_moment: ModelParams
    second_moment: ModelParams
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValidationError("Adam betas must lie in (0, 1)")
        if self.epsilon <= 0.0 or self.learning_rate <= 0.0:
            raise ValidationError("Adam epsilon and learning rate must be positive")
        if self.step < 0:
            raise ValidationError("Adam step count must be >= 0")

    @classmethod
    def for_params(
        cls,
        params: ModelParams,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> "AdamState":
        zeros = params.zeros_like
        return cls(zeros(), zeros(), 0, learning_rate, beta1, beta2, epsilon)


def adam_step(
    params: ModelParams, grads: ModelParams, state: AdamState
) -> Tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    _check_same_layout(params, grads)
    _check_same_layout(params, state.first_moment)
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t

    new_layers, m_layers, v_layers = [], [], []
    for p, g, m, v in zip(
        params.layers, grads.layers, state.first_moment.layers, state.second_moment.layers
    ):
        updated = []
        for p_arr, g_arr, m_arr, v_arr in (
            (p.weight, g.weight, m.weight, v.weight),
            (p.bias, g.bias, m.bias, v.bias),
        ):
            m_new = state.beta1 * m_arr + (1.0 - state.beta1) * g_arr
            v_new = state.beta2 * v_arr + (1.0 - state.beta2) * (g_arr * g_arr)
            step = (m_new / bc1) / (np.sqrt(v_new / bc2) + state.epsilon)
            p_new = p_arr - state.learning_rate * step
            updated.append((p_new, m_new, v_new))
        (pw, mw, vw), (pb, mb, vb) = updated
        new_layers.append(Layer(pw, pb))
        m_layers.append(Layer(mw, mb))
        v_layers.append(Layer(vw, vb))

    new_state = AdamState(
        ModelParams(m_layers, params.activation, params.slope),
        ModelParams(v_layers, params.activation, params.slope),
        t,
        state.learning_rate,
        state.beta1,
        state.beta2,
        state.epsilon,
    )
    return ModelParams(new_layers, params.activation, params.slope), new_state
