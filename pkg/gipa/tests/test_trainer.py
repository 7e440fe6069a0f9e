import numpy as np
import pytest

from gipa.config import TrainConfig
from gipa.exceptions import DatasetError, NumericError
from gipa.graph import build_graph
from gipa.services import trainer
from gipa.services.dataset import DatasetBundle, generate_synthetic, load_dataset
from gipa.services.trainer import (
    CHECKPOINT_FILE,
    CONFIG_FILE,
    METRICS_FILE,
    build_model,
    drop_undirected,
    edge_drop,
    evaluate,
    train,
    train_seeds,
)
from gipa.utils.checkpoint import load_checkpoint
from gipa.utils.report import read_metrics_csv


def test_edge_drop_rate_zero_keeps_everything(path_graph):
    assert edge_drop(path_graph, 0.0, np.random.default_rng(0)).all()


def test_edge_drop_survivor_fraction():
    keep = drop_undirected(10 ** 6, 0.25, np.random.default_rng(0))
    assert abs(keep.mean() - 0.75) < 0.002


def test_edge_drop_keeps_directions_together():
    bundle = generate_synthetic(n=80, seed=0)
    g = bundle.graph
    keep = edge_drop(g, 0.5, np.random.default_rng(1))
    per_edge = {}
    for eid, flag in zip(g.edge_ids.tolist(), keep.tolist()):
        per_edge.setdefault(eid, set()).add(flag)
    assert all(len(flags) == 1 for flags in per_edge.values())


def test_zero_learning_rate_leaves_parameters_and_loss_fixed(synthetic_dir, small_config):
    bundle = load_dataset(synthetic_dir)
    config = small_config.with_overrides(lr=0.0, epochs=6)
    initial = {k: p.value.copy() for k, p in build_model(bundle, config).named_parameters().items()}
    result = train(bundle, config)
    assert all(np.array_equal(result.best_tensors[k], initial[k]) for k in initial)
    losses = [row.train_loss for row in result.history]
    assert len(set(losses)) == 1


def test_equal_seeds_give_identical_runs(synthetic_dir, small_config, tmp_path):
    bundle = load_dataset(synthetic_dir)
    config = small_config.with_overrides(edge_drop=0.2, node_dropout=0.1, final_dropout=0.3)
    first = train(bundle, config, tmp_path / "a")
    second = train(bundle, config, tmp_path / "b")
    assert [r.train_loss for r in first.history] == [r.train_loss for r in second.history]
    assert (tmp_path / "a" / CHECKPOINT_FILE).read_bytes() == (tmp_path / "b" / CHECKPOINT_FILE).read_bytes()
    other = train(bundle, config.with_overrides(seed=1))
    assert [r.train_loss for r in other.history] != [r.train_loss for r in first.history]


def test_outputs_and_best_checkpoint(synthetic_dir, small_config, tmp_path):
    bundle = load_dataset(synthetic_dir)
    result = train(bundle, small_config, tmp_path)
    history = read_metrics_csv(tmp_path / METRICS_FILE)
    assert [row.epoch for row in history] == list(range(1, 11))
    evaluated = [row.epoch for row in history if row.valid_auc is not None]
    assert evaluated == [2, 4, 6, 8, 10]
    assert result.best_epoch in evaluated
    best = [row.valid_auc for row in history if row.epoch == result.best_epoch][0]
    assert result.valid_report.mean_auc == best
    saved = load_checkpoint(tmp_path / CHECKPOINT_FILE)
    for name, param in result.model.named_parameters().items():
        assert np.array_equal(saved[name], param.value)


def test_small_graph_overfits(small_config):
    bundle = generate_synthetic(n=20, avg_degree=3, d_node=4, d_edge=4, num_labels=2, seed=3,
                                fractions=(1.0, 0.0, 0.0))
    config = small_config.with_overrides(num_gipa_layers=3, node_emb=16, hidden_units=16,
                                        epochs=500, eval_every=500)
    result = train(bundle, config)
    assert result.history[-1].train_loss < 0.01


def test_non_finite_loss_aborts(synthetic_dir, small_config, monkeypatch):
    bundle = load_dataset(synthetic_dir)
    monkeypatch.setattr(trainer, "bce_with_logits",
                        lambda logits, labels, mask: (float("nan"), np.zeros_like(logits)))
    with pytest.raises(NumericError) as info:
        train(bundle, small_config)
    assert info.value.details["epoch"] == 1


def test_empty_train_split_is_rejected(small_config):
    g = build_graph([(0, 1, [1.0])], np.zeros((2, 1)))
    bundle = DatasetBundle(g, np.zeros((2, 1)), {"train": np.array([], dtype=np.int64),
                                                 "valid": np.array([0]), "test": np.array([1])})
    with pytest.raises(DatasetError):
        train(bundle, small_config)


def test_evaluate_empty_and_unknown_splits(small_config):
    bundle = generate_synthetic(n=10, seed=0, fractions=(1.0, 0.0, 0.0))
    model = build_model(bundle, small_config)
    report = evaluate(model, bundle, "valid")
    assert report.mean_auc is None and report.loss is None
    with pytest.raises(DatasetError):
        evaluate(model, bundle, "holdout")


def test_train_seeds_summary(synthetic_dir, small_config, tmp_path):
    bundle = load_dataset(synthetic_dir)
    summary = train_seeds(bundle, small_config.with_overrides(epochs=4), [0, 1, 2], tmp_path)
    assert summary.seeds == [0, 1, 2]
    assert len(summary.test_auc) == 3
    scored = [auc for auc in summary.test_auc if auc is not None]
    if scored:
        assert summary.test_auc_mean == pytest.approx(np.mean(scored))
    assert (tmp_path / "seed_2" / CHECKPOINT_FILE).is_file()
    assert (tmp_path / "seed_2" / CONFIG_FILE).is_file()


def test_training_lowers_the_loss_for_most_seeds():
    bundle = generate_synthetic(n=300, seed=0)
    config = TrainConfig(num_gipa_layers=3, epochs=10, eval_every=10)
    improved = 0
    for seed in range(10):
        history = train(bundle, config.with_overrides(seed=seed)).history
        improved += history[-1].train_loss < history[0].train_loss
    assert improved >= 8
