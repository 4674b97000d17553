import json

import pytest

from occ_barrier.config import (
    LossConfig,
    LossKind,
    TrainConfig,
    apply_cli_overrides,
    load_experiment,
)
from occ_barrier.exceptions import ConfigError
from occ_barrier.nn import Activation

INI = """
[data]
synthetic = true
n_targets = 40
n_outliers = 40

[loss]
kind = lbl
theta = 2
lambda = 0.01

[train]
epochs = 3
activation = tanh

[grid]
learning_rate = 0.1, 0.01, 0.003
lambda = 1e-3, 1, 1e3
"""


def test_defaults():
    loss = LossConfig()
    assert (loss.theta, loss.q_trunc, loss.radius_quantile, loss.nu) == (1.0, 10.0, 0.9, 0.1)
    train = TrainConfig()
    assert train.reject_fraction == 0.1 and train.epochs == 200 and train.hidden_dim == 32
    assert train.activation is Activation.LEAKY_RELU and train.leaky_slope == 0.01
    assert train.learning_rate == 1e-3
    assert loss.lbl_reset_epochs == 20 and loss.radius_update_period == 1


def test_weight_decay_per_kind():
    assert LossConfig(kind="lbl", lambda_=0.5).weight_decay == 0.5
    assert LossConfig(kind="sbl", lambda_=0.5, lambda2=0.2).weight_decay == 0.2
    assert LossConfig(kind="hrn", lambda_=0.5, lambda2=0.2).weight_decay == 0.2


def test_load_ini(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(INI)
    cfg = load_experiment(path)
    assert cfg.train.loss.kind is LossKind.LBL
    assert cfg.train.loss.theta == 2.0 and cfg.train.loss.lambda_ == 0.01
    assert cfg.train.activation is Activation.TANH
    assert cfg.grid["learning_rate"] == [0.1, 0.01, 0.003]
    assert cfg.grid["lambda"] == [1e-3, 1, 1e3]
    resolved = cfg.resolved()
    assert resolved["loss"]["kind"] == "lbl"
    assert resolved["loss"]["q_trunc"] == 10.0
    json.dumps(resolved)


def test_load_json(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"data": {"synthetic": True}, "loss": {"kind": "sbl", "nu": 0.2}}))
    cfg = load_experiment(path)
    assert cfg.train.loss.kind is LossKind.SBL and cfg.train.loss.nu == 0.2


@pytest.mark.parametrize(
    "text,key",
    [
        ("[data]\nsynthetic = true\n[loss]\nthetaa = 1\n", "loss.thetaa"),
        ("[data]\nsynthetic = true\n[loss]\ntheta = -1\n", "loss.theta"),
        ("[data]\nsynthetic = true\n[train]\nepochs = many\n", "train.epochs"),
        ("[data]\nsynthetic = false\n", "data.path"),
        ("[data]\nsynthetic = true\n[grid]\nwidth = 1, 2\n", "grid.width"),
    ],
)
def test_config_errors_name_the_key(tmp_path, text, key):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.key == key


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_experiment(tmp_path / "missing.ini")


def test_cli_overrides(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(INI)
    cfg = apply_cli_overrides(load_experiment(path), seed=9, out="elsewhere")
    assert cfg.train.seed == 9 and cfg.output.dir == "elsewhere"


def test_with_overrides_routes_fields():
    cfg = TrainConfig().with_overrides({"learning_rate": 0.1, "lambda": 1e3, "q": 5})
    assert cfg.learning_rate == 0.1
    assert cfg.loss.lambda_ == 1e3 and cfg.loss.q_trunc == 5
    with pytest.raises(ConfigError):
        TrainConfig().with_overrides({"unknown": 1})


def test_inline_comments(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[data]\nsynthetic = true ; ring\n[loss]\nkind = sbl ; baseline\n")
    assert load_experiment(path).train.loss.kind is LossKind.SBL


def test_lbl_reset_epochs_validation():
    assert LossConfig(kind="lbl", lbl_reset_epochs=0).lbl_reset_epochs == 0
    with pytest.raises(ConfigError) as info:
        LossConfig(kind="lbl", lbl_reset_epochs=-1)
    assert info.value.key == "loss.lbl_reset_epochs"
