import filecmp

import numpy as np
import pytest

from gipa.exceptions import DatasetError
from gipa.services.dataset import FILES, generate_synthetic, load_dataset, split_nodes, write_dataset


def write(directory, **tables):
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in tables.items():
        (directory / f"{name}.csv").write_text(text, encoding="utf-8")
    return directory


def toy(tmp_path, **overrides):
    tables = {
        "nodes": "node_id,f1\n1,0.5\n0,-1.0\n",
        "edges": "src,dst,e1\n0,1,2.5\n",
        "labels": "node_id,y1,y2\n0,1,0\n1,0,1\n",
        "splits": "node_id,split\n0,train\n1,test\n",
    }
    tables.update(overrides)
    return write(tmp_path / "toy", **tables)


def test_toy_directory(tmp_path):
    bundle = load_dataset(toy(tmp_path))
    assert bundle.graph.num_edges == 2
    assert bundle.graph.node_features.tolist() == [[-1.0], [0.5]]
    assert bundle.labels.tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert bundle.splits["train"].tolist() == [0]
    assert bundle.splits["valid"].tolist() == []
    assert bundle.num_labels == 2
    assert bundle.metadata["edge_columns"] == ["e1"]


@pytest.mark.parametrize("overrides", [
    {"labels": "node_id,y1\n"},
    {"labels": "node_id\n0\n1\n"},
    {"labels": "node_id,y1\n0,1\n1,2\n"},
    {"nodes": "node_id,f1\n0,0.5\n2,1.0\n"},
    {"nodes": "node_id,f1\n0,0.5\n1\n"},
    {"nodes": "node_id,f1\n0,abc\n1,1.0\n"},
    {"nodes": "id,f1\n0,0.5\n1,1.0\n"},
    {"edges": "src,dst,e1\n0,5,1.0\n"},
    {"splits": "node_id,split\n0,train\n1,holdout\n"},
    {"splits": "node_id,split\n0,train\n0,test\n"},
    {"splits": "node_id,split\n0,train\n7,test\n"},
])
def test_malformed_directories(tmp_path, overrides):
    with pytest.raises(DatasetError):
        load_dataset(toy(tmp_path, **overrides))


def test_missing_file_and_directory(tmp_path):
    directory = toy(tmp_path)
    (directory / "splits.csv").unlink()
    with pytest.raises(DatasetError, match="splits.csv"):
        load_dataset(directory)
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "nowhere")


def test_split_sizes_and_determinism():
    splits = split_nodes(10, (0.6, 0.2, 0.2), seed=3)
    assert [len(splits[k]) for k in ("train", "valid", "test")] == [6, 2, 2]
    again = split_nodes(10, (0.6, 0.2, 0.2), seed=3)
    assert all(np.array_equal(splits[k], again[k]) for k in splits)


def test_splits_partition_the_nodes():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = int(rng.integers(1, 200))
        splits = split_nodes(n, seed=int(rng.integers(0, 1000)))
        everything = np.concatenate(list(splits.values()))
        assert sorted(everything.tolist()) == list(range(n))


def test_split_fractions_must_sum_to_one():
    with pytest.raises(DatasetError):
        split_nodes(10, (0.5, 0.2, 0.2))
    with pytest.raises(DatasetError):
        split_nodes(10, (0.5, 0.5))


def test_generator_is_byte_reproducible(tmp_path):
    generate_synthetic(n=60, seed=4, out_dir=tmp_path / "a")
    generate_synthetic(n=60, seed=4, out_dir=tmp_path / "b")
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", FILES, shallow=False)
    assert match == list(FILES) and not mismatch and not errors


def test_written_dataset_loads_back_identically(tmp_path):
    bundle = generate_synthetic(n=50, avg_degree=2, num_labels=3, seed=1)
    write_dataset(bundle, tmp_path / "out")
    assert load_dataset(tmp_path / "out").same_as(bundle)


def test_label_prevalence_is_balanced():
    prevalence = np.mean([generate_synthetic(n=300, seed=s).labels.mean(axis=0) for s in range(5)],
                         axis=0)
    assert np.all((prevalence > 0.2) & (prevalence < 0.8))


def test_isolated_nodes_get_label_zero():
    bundle = generate_synthetic(n=30, avg_degree=0, seed=2)
    assert bundle.graph.num_edges == 0
    assert not bundle.labels.any()


@pytest.mark.parametrize("kwargs", [{"n": 2}, {"num_labels": 0}, {"d_edge": 0}, {"n": 10, "avg_degree": 10}])
def test_degenerate_sizes(kwargs):
    with pytest.raises(DatasetError):
        generate_synthetic(**kwargs)
