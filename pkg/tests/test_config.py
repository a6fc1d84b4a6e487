import pytest

from ucod.config import TrainConfig, dump_config, load_config, parse_config_text
from ucod.errors import ConfigError


def test_defaults():
    c = TrainConfig()
    assert (c.epochs, c.batch_size, c.ema_momentum, c.tau) == (25, 32, 0.99, 0.15)
    assert c.lr_student == c.lr_disc == 1e-4
    assert c.loss_weights == (1.0, 1.0, 1.0)


def test_parse_types_and_comments():
    values = parse_config_text("# note\nepochs = 3  # inline\nlook_twice = false\nmixing = 'apm'\ntau=0.2\n")
    assert values == {"epochs": 3, "look_twice": False, "mixing": "apm", "tau": 0.2}


def test_round_trip(tmp_path):
    c = TrainConfig(epochs=4, mixing="proportional").replace(**{"backbone.patch_size": 8})
    path = tmp_path / "c.txt"
    path.write_text(dump_config(c))
    assert load_config(str(path)) == c


def test_aliases():
    c = TrainConfig.from_flat({"apm.strategy": "linear_decay", "T": 5, "eta": 0.9, "look_twice.tau": 0.1})
    assert (c.mixing, c.epochs, c.ema_momentum, c.tau) == ("linear_decay", 5, 0.9, 0.1)


@pytest.mark.parametrize("values", [
    {"epochs": 0}, {"batch_size": 0}, {"ema_momentum": 1.5}, {"mixing": "cosine"},
    {"fixed_strategy": "white"}, {"unknown_key": 1}, {"backbone.depth": 3}, {"epochs": 2.5},
    {"look_twice": "maybe"}, {"backbone.name": "resnet"},
])
def test_invalid(values):
    with pytest.raises(ConfigError):
        TrainConfig.from_flat(values)


def test_malformed_lines(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("epochs 3")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.txt"))


def test_shipped_config_loads():
    import os
    path = os.path.join(os.path.dirname(__file__), "..", "configs", "synthetic.txt")
    c = load_config(path)
    assert c.image_size == 64 and c.backbone.patch_size == 8 and c.look_twice_train
