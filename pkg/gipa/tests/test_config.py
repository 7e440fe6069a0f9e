from pathlib import Path

import pytest

from gipa.config import TrainConfig, load_config, parse_config_text
from gipa.exceptions import ConfigError


def test_defaults_are_the_proteins_settings():
    config = TrainConfig()
    assert (config.node_emb, config.edge_emb, config.heads, config.hidden_units) == (80, 16, 8, 80)
    assert (config.att_mlp_depth, config.prop_mlp_depth, config.num_gipa_layers) == (2, 2, 6)
    assert (config.edge_drop, config.node_dropout, config.attention_dropout) == (0.1, 0.1, 0.1)
    assert (config.propagation_dropout, config.aggregation_dropout, config.final_dropout) == (0.25, 0.25, 0.5)
    assert (config.optimizer, config.lr, config.aggregation) == ("adamw", 0.01, "sum")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# small run\n"
        "node_emb = 16\n"
        "heads = 4   # four heads\n"
        "lr=0.005\n"
        "\n"
        "ablate_edge_propagation = true\n"
        "data_dir = data/synthetic\n",
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.node_emb == 16 and config.heads == 4 and config.lr == 0.005
    assert config.ablate_edge_propagation is True
    assert config.data_dir == Path("data/synthetic")
    assert config.edge_emb == 16


def test_text_round_trip(tmp_path):
    config = TrainConfig(node_emb=12, heads=3, aggregation="mean", data_dir="d", seed=9)
    path = tmp_path / "config.txt"
    path.write_text(config.to_text(), encoding="utf-8")
    assert load_config(path) == config


@pytest.mark.parametrize("text", [
    "node_emb 80\n",
    "lr = 0.1\nlr = 0.2\n",
    "learning_rate = 0.1\n",
    "heads = 3\n",
    "node_dropout = 1.0\n",
    "edge_drop = -0.1\n",
    "aggregation = max\n",
    "lr = fast\n",
    "optimizer = sgd\n",
    "epochs = 0\n",
])
def test_invalid_config_text(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_overrides_are_validated():
    config = TrainConfig()
    assert config.with_overrides(seed=4).seed == 4
    with pytest.raises(ConfigError):
        config.with_overrides(heads=7)
    quiet = config.without_dropout()
    assert quiet.edge_drop == 0.0 and quiet.final_dropout == 0.0


def test_comment_and_blank_lines_are_ignored():
    assert parse_config_text("# only a comment\n\n  \n") == {}
