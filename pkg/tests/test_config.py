import json

import pytest

from lookupvit.config import (
    ModelConfig,
    TrainConfig,
    load_config,
    model_config_to_dict,
    parse_config,
    train_config_to_dict,
)
from lookupvit.errors import ConfigurationError, SchemaError


def test_defaults_are_valid_and_round_trip():
    m, t = ModelConfig(), TrainConfig()
    assert (m.p, m.q) == (4, 2)
    assert m.lookup_grid == (8, 8) and m.N == 64 and m.M() == 16
    m2, t2 = parse_config({"model": model_config_to_dict(m), "train": train_config_to_dict(t)})
    assert (m2, t2) == (m, t)


def test_unknown_field_named(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": {"dimm": 8}}))
    with pytest.raises(SchemaError, match="model.dimm"):
        load_config(path)


@pytest.mark.parametrize("obj,field", [
    ({"model": {"dim": "8"}}, "model.dim"),
    ({"model": {"no_infuse": 1}}, "model.no_infuse"),
    ({"train": {"lr": "fast"}}, "train.lr"),
    ({"model": {"compressed_grids": [2, 2]}}, "model.compressed_grids"),
    ({"extra": {}}, "extra"),
])
def test_wrong_types_named(obj, field):
    with pytest.raises(SchemaError, match=field):
        parse_config(obj)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_config(path)


@pytest.mark.parametrize("changes", [
    {"compressed_grids": ((9, 9),)},
    {"dim": 10, "heads": 4},
    {"p": 0},
    {"depth": 0},
    {"image_size": (30, 32)},
    {"precision": "float16"},
    {"no_lookup_loss": True, "no_compressed_loss": True},
])
def test_invalid_model_configs(changes):
    with pytest.raises(ConfigurationError):
        ModelConfig(**changes)


def test_invalid_train_configs():
    with pytest.raises(ConfigurationError):
        TrainConfig(steps=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(warmup_frac=1.0)
