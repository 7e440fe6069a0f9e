import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[2]))

from gipa.config import TrainConfig  # noqa: E402
from gipa.graph import build_graph  # noqa: E402
from gipa.services.dataset import generate_synthetic  # noqa: E402


@pytest.fixture
def small_config():
    """Narrow widths and no dropout."""
    return TrainConfig(
        node_emb=8, edge_emb=4, heads=2, hidden_units=6, num_gipa_layers=2,
        edge_drop=0.0, node_dropout=0.0, attention_dropout=0.0, propagation_dropout=0.0,
        aggregation_dropout=0.0, final_dropout=0.0, epochs=10, eval_every=2,
    )


@pytest.fixture
def path_graph():
    # 0 - 1 - 2
    return build_graph([(0, 1, [1.0]), (1, 2, [2.0])], np.eye(3))


@pytest.fixture
def synthetic_dir(tmp_path):
    out = tmp_path / "data"
    generate_synthetic(n=40, avg_degree=3, d_node=4, d_edge=3, num_labels=3, seed=7, out_dir=out)
    return out
