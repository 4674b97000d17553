"""Artifact writers and readers: report JSON, CSV tables, model files."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from .config import LossConfig, LossKind, TrainConfig, _build
from .data import MinMaxScaler
from .exceptions import ValidationError
from .hypersphere import CenterPolicy, HypersphereState
from .nn import Activation, Layer, ModelParams
from .trainer import TrainedModel

MODEL_FORMAT_VERSION = 1
PathLike = Union[str, Path]


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # JSON has no NaN/Inf
        return value if np.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if hasattr(value, "value") and not isinstance(value, (str, bytes)):
        return value.value
    return value


def save_json(d: Dict[str, Any], path: PathLike) -> Path:
    """Save a dictionary to JSON with sorted keys; floats keep their exact repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_jsonable(d), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def save_table(
    frame: pd.DataFrame, path: PathLike, header: Optional[Dict[str, Any]] = None
) -> Path:
    """CSV at 17 significant digits, preceded by a ``# config: {...}`` line when given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header is not None:
            fh.write("# config: " + json.dumps(_jsonable(header), sort_keys=True) + "\n")
        frame.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_table(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"table not found: {path}")
    return pd.read_csv(path, comment="#", float_precision="round_trip")


# model files -------------------------------------------------------------------


def save_model(
    model: TrainedModel,
    path: PathLike,
    normalizer: Optional[MinMaxScaler] = None,
    resolved_config: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write a versioned ``.npz``: layer arrays, center, scaler and JSON metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    loss = {k: getattr(cfg.loss, k) for k in cfg.loss.__dataclass_fields__}
    train = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__ if k != "loss"}
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "activation": model.params.activation.value,
        "slope": model.params.slope,
        "radius": model.sphere.radius,
        "threshold": model.sphere.threshold,
        "center_policy": model.sphere.center_policy.value,
        "score_offset": model.score_offset,
        "optimizer_steps": model.optimizer_steps,
        "loss_history": model.loss_history,
        "loss": loss,
        "train": train,
        "config": resolved_config or {},
    }
    arrays: Dict[str, np.ndarray] = {"center": model.sphere.center}
    for idx, layer in enumerate(model.params.layers):
        arrays[f"W{idx}"] = layer.weight
        arrays[f"b{idx}"] = layer.bias
    if normalizer is not None:
        arrays["norm_min"] = normalizer.mins
        arrays["norm_max"] = normalizer.maxs
    arrays["meta"] = np.array(json.dumps(_jsonable(meta), sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_model(path: PathLike):
    """Read a model file; returns ``(TrainedModel, MinMaxScaler or None, metadata)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["meta"]))
        version = meta.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported model format version {version!r}")
        n_layers = sum(1 for k in npz.files if k.startswith("W"))
        layers = [Layer(npz[f"W{i}"], npz[f"b{i}"]) for i in range(n_layers)]
        center = npz["center"]
        scaler = (
            MinMaxScaler(npz["norm_min"], npz["norm_max"]) if "norm_min" in npz.files else None
        )
    params = ModelParams(layers, Activation(meta["activation"]), float(meta["slope"]))
    loss = _build(LossConfig, "loss", meta["loss"])
    train_values = {k: v for k, v in meta["train"].items() if v is not None}
    cfg = _build(TrainConfig, "train", train_values, extra={"loss": loss})
    sphere = HypersphereState(
        center=center,
        radius=float(meta["radius"]),
        threshold=float(meta["threshold"]),
        center_policy=CenterPolicy(meta["center_policy"]),
    )
    model = TrainedModel(
        params=params,
        sphere=sphere,
        loss_history=[float(v) if v is not None else float("nan") for v in meta["loss_history"]],
        config=cfg,
        optimizer_steps=int(meta["optimizer_steps"]),
        score_offset=float(meta["score_offset"]),
    )
    if cfg.loss.kind is LossKind.HRN and params.output_dim != 1:
        raise ValidationError(f"{path}: HRN model with output width {params.output_dim}")
    return model, scaler, meta
