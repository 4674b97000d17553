"""Experiment configuration: dataclasses with documented defaults plus an INI/JSON loader.

Experiment files are sectioned key/value text::

    [data]
    synthetic = true
    target_class = 0

    [loss]
    kind = lblsig
    theta = 1
    q_trunc = 10

    [train]
    epochs = 200
    hidden_dim = 32

    [grid]
    learning_rate = 0.1, 0.01, 0.003
    lambda = 0.001, 1, 1000

    [output]
    dir = outputs/lblsig

The same sections may be given as objects in a ``.json`` file.
"""
from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from .exceptions import ConfigError
from .hypersphere import CenterPolicy
from .nn import Activation


class LossKind(str, Enum):
    MSE_OCL = "mse-ocl"
    SBL = "sbl"
    HRN = "hrn"
    LBL = "lbl"
    LBLSIG = "lblsig"
    LBL_SLACK = "lbl-slack"

    @property
    def uses_sphere(self) -> bool:
        return self is not LossKind.HRN


# INI/JSON spellings that are not valid Python identifiers
_ALIASES = {"lambda": "lambda_", "lam": "lambda_", "q": "q_trunc"}


@dataclass
class LossConfig:
    kind: LossKind = LossKind.LBLSIG
    theta: float = 1.0  # barrier approximation precision
    q_trunc: float = 10.0  # LBLSig relaxation constant Q
    lambda_: float = 1e-3  # L2 weight (MSE-OCL, LBL, LBLSig) or H-regularization weight (HRN)
    lambda1: float = 1.0  # SBL hinge weight
    lambda2: float = 1e-3  # SBL / HRN L2 weight
    nu: float = 0.1  # SBL quantile fraction
    hrn_exponent: float = 2.0
    radius_quantile: float = 0.9
    radius_update_period: int = 1  # in batches
    lbl_reset_epochs: int = 20  # LBL: full-set radius reset every n epochs, 0 = per batch
    eps_log: float = 1e-12
    discard_outside: bool = False

    def __post_init__(self) -> None:
        self.kind = LossKind(self.kind)
        if not self.theta > 0:
            raise ConfigError("loss.theta", "must be > 0")
        if not self.q_trunc > 0:
            raise ConfigError("loss.q_trunc", "must be > 0")
        if not 0.0 < self.radius_quantile <= 1.0:
            raise ConfigError("loss.radius_quantile", "must lie in (0, 1]")
        if not self.eps_log > 0:
            raise ConfigError("loss.eps_log", "must be > 0")
        if not 0.0 < self.nu < 1.0:
            raise ConfigError("loss.nu", "must lie in (0, 1)")
        if self.hrn_exponent < 1.0:
            raise ConfigError("loss.hrn_exponent", "must be >= 1")
        for name in ("lambda_", "lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss.{name.rstrip('_')}", "must be >= 0")
        if self.radius_update_period < 1:
            raise ConfigError("loss.radius_update_period", "must be >= 1")
        if self.lbl_reset_epochs < 0:
            raise ConfigError("loss.lbl_reset_epochs", "must be >= 0")

    @property
    def weight_decay(self) -> float:
        """Coefficient of the ``(lambda/2) * sum ||W||^2`` term for this loss kind."""
        if self.kind in (LossKind.SBL, LossKind.HRN):
            return self.lambda2
        return self.lambda_


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    reject_fraction: float = 0.1
    shuffle: bool = True
    hidden_dim: int = 32
    n_hidden_layers: int = 2
    output_dim: int = 8
    activation: Activation = Activation.LEAKY_RELU
    leaky_slope: float = 0.01
    center_policy: CenterPolicy = CenterPolicy.MEAN_OF_INITIAL_OUTPUTS
    fixed_center: Optional[Tuple[float, ...]] = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    progress: bool = False

    def __post_init__(self) -> None:
        self.activation = Activation(self.activation)
        self.center_policy = CenterPolicy(self.center_policy)
        if self.epochs < 1:
            raise ConfigError("train.epochs", "must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", "must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("train.learning_rate", "must be > 0")
        if not 0.0 <= self.reject_fraction < 1.0:
            raise ConfigError("train.reject_fraction", "must lie in [0, 1)")
        if self.n_hidden_layers not in (1, 2):
            raise ConfigError("train.n_hidden_layers", "must be 1 or 2")
        if self.hidden_dim < 1 or self.output_dim < 1:
            raise ConfigError("train.hidden_dim", "layer widths must be >= 1")
        if self.center_policy is CenterPolicy.FIXED_VECTOR and self.fixed_center is None:
            raise ConfigError("train.fixed_center", "required by center_policy fixed-vector")

    def with_overrides(self, overrides: Dict[str, Any]) -> "TrainConfig":
        """Copy with any TrainConfig or LossConfig field replaced."""
        train_names = {f.name for f in dataclasses.fields(TrainConfig)}
        loss_names = {f.name for f in dataclasses.fields(LossConfig)}
        train_kw, loss_kw = {}, {}
        for key, value in overrides.items():
            name = _ALIASES.get(key, key)
            if name in loss_names:
                loss_kw[name] = value
            elif name in train_names and name != "loss":
                train_kw[name] = value
            else:
                raise ConfigError(f"grid.{key}", "not a train or loss field")
        loss = dataclasses.replace(self.loss, **loss_kw) if loss_kw else self.loss
        return dataclasses.replace(self, loss=loss, **train_kw)


@dataclass
class DataConfig:
    path: Optional[str] = None
    test_path: Optional[str] = None
    label_column: str = "last"
    target_class: str = "0"
    train_fraction: float = 0.5
    split_seed: int = 0
    name: Optional[str] = None
    synthetic: bool = False
    synth_seed: int = 42
    n_targets: int = 500
    n_outliers: int = 500
    dim: int = 2
    ring_radius: float = 5.0
    validation_outliers_path: Optional[str] = None
    validation_fraction: float = 0.2

    def __post_init__(self) -> None:
        if not self.synthetic and not self.path:
            raise ConfigError("data.path", "required unless data.synthetic = true")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("data.train_fraction", "must lie in (0, 1]")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("data.validation_fraction", "must lie in (0, 1)")


@dataclass
class OutputConfig:
    dir: str = "outputs"
    formats: Tuple[str, ...] = ("json", "csv")

    def __post_init__(self) -> None:
        unknown = set(self.formats) - {"json", "csv"}
        if unknown:
            raise ConfigError("output.formats", f"unknown formats {sorted(unknown)}")


@dataclass
class ExperimentConfig:
    data: DataConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: Dict[str, List[Any]] = field(default_factory=dict)
    output: OutputConfig = field(default_factory=OutputConfig)

    def resolved(self) -> Dict[str, Any]:
        """Every field after defaults, as plain JSON-ready values."""
        train = _plain(dataclasses.asdict(self.train))
        loss = train.pop("loss")
        train.pop("progress")
        return {
            "data": _plain(dataclasses.asdict(self.data)),
            "loss": loss,
            "train": train,
            "grid": _plain(self.grid),
            "output": _plain(dataclasses.asdict(self.output)),
        }


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


# loading --------------------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, default: Any, raw: Any) -> Any:
    """Convert ``raw`` (INI string or JSON value) to the type of the field default."""
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, Enum):
            return type(default)(str(raw).strip().lower())
        if isinstance(default, int):
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(f"not an integer: {raw!r}")
            return int(float(raw)) if isinstance(raw, str) and "e" in raw.lower() else int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple) or key.endswith("fixed_center"):
            items = raw if isinstance(raw, list) else [s for s in str(raw).split(",") if s.strip()]
            if key.endswith("formats"):
                return tuple(str(s).strip() for s in items)
            return tuple(float(s) for s in items)
        if raw is None:
            return None
        return str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, str(exc)) from exc


def _build(cls, section: str, values: Dict[str, Any], extra: Optional[Dict[str, Any]] = None):
    defaults = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: Dict[str, Any] = dict(extra or {})
    fallbacks = _defaults_of(cls)
    for raw_key, raw in values.items():
        name = _ALIASES.get(raw_key, raw_key)
        if name not in defaults or name in kwargs:
            raise ConfigError(f"{section}.{raw_key}", "unknown key")
        kwargs[name] = _coerce(f"{section}.{raw_key}", fallbacks.get(name), raw)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from exc


def _defaults_of(cls) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
            out[f.name] = f.default_factory()  # type: ignore[misc]
    # optional fields default to None; treat them as strings unless listed
    if cls is TrainConfig:
        out["fixed_center"] = ()
    return out


def _parse_grid_value(key: str, raw: Any) -> List[Any]:
    items = raw if isinstance(raw, list) else [s.strip() for s in str(raw).split(",") if s.strip()]
    if not items:
        raise ConfigError(f"grid.{key}", "empty grid")
    parsed = []
    for item in items:
        if isinstance(item, str):
            try:
                parsed.append(int(item) if item.lstrip("-").isdigit() else float(item))
            except ValueError:
                parsed.append(item)
        else:
            parsed.append(item)
    return parsed


_SECTIONS = ("data", "loss", "train", "grid", "output")


def _read_sections(path: Path) -> Dict[str, Dict[str, Any]]:
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    if path.suffix.lower() == ".json":
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(str(path), "top level must be an object")
        sections = raw
    else:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
        parser.optionxform = str  # keep key case
        try:
            parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(str(path), str(exc).splitlines()[0]) from exc
        sections = {name: dict(parser.items(name)) for name in parser.sections()}
    for name in sections:
        if name not in _SECTIONS:
            raise ConfigError(name, "unknown section")
    return {name: dict(sections.get(name) or {}) for name in _SECTIONS}


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """Parse an INI or JSON experiment file, resolving every default."""
    sections = _read_sections(Path(path))
    loss = _build(LossConfig, "loss", sections["loss"])
    train = _build(TrainConfig, "train", sections["train"], extra={"loss": loss})
    data = _build(DataConfig, "data", sections["data"])
    output = _build(OutputConfig, "output", sections["output"])
    grid = {key: _parse_grid_value(key, raw) for key, raw in sections["grid"].items()}
    if grid:
        # fail early on unknown grid keys
        train.with_overrides({k: v[0] for k, v in grid.items()})
    return ExperimentConfig(data=data, train=train, grid=grid, output=output)


def apply_cli_overrides(
    cfg: ExperimentConfig, seed: Optional[int] = None, out: Optional[str] = None
) -> ExperimentConfig:
    train = dataclasses.replace(cfg.train, seed=seed) if seed is not None else cfg.train
    output = dataclasses.replace(cfg.output, dir=out) if out is not None else cfg.output
    return dataclasses.replace(cfg, train=train, output=output)
