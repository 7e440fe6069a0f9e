"""Full-graph multi-label training: one AdamW step per epoch, ROC-AUC model
selection on the validation split, bit-reproducible for a fixed seed."""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from gipa.config import TrainConfig
from gipa.exceptions import DatasetError, NumericError
from gipa.graph import CsrGraph
from gipa.services.dataset import DatasetBundle
from gipa.services.metrics import EvalReport, bce_with_logits, evaluation_report
from gipa.services.model import GipaModel
from gipa.services.nn import AdamW
from gipa.utils.checkpoint import save_checkpoint
from gipa.utils.report import HistoryRow, write_metrics_csv
from gipa.utils.validate import check_rate

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.bin"
METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.txt"


def drop_undirected(num_undirected: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Keep flag per undirected edge, each dropped independently with probability rate."""
    rate = check_rate(rate, "edge drop rate")
    if rate == 0.0:
        return np.ones(num_undirected, dtype=bool)
    return rng.random(num_undirected) >= rate


def edge_drop(g: CsrGraph, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Keep mask over directed entries; both directions of an edge share its fate."""
    return drop_undirected(g.num_undirected_edges, rate, rng)[g.edge_ids]


def training_streams(seed: int):
    """Independent generators for weight init and for dropout/edge drop."""
    init_seq, train_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(train_seq)


def build_model(bundle: DatasetBundle, config: TrainConfig,
                rng: Optional[np.random.Generator] = None) -> GipaModel:
    if rng is None:
        rng, _ = training_streams(config.seed)
    g = bundle.graph
    return GipaModel.from_config(config, g.node_dim, g.edge_dim, bundle.num_labels, rng)


def evaluate(model: GipaModel, bundle: DatasetBundle, split: str) -> EvalReport:
    """Eval mode: no dropout, every edge present."""
    nodes = bundle.splits.get(split)
    if nodes is None:
        raise DatasetError(f"unknown split {split!r}")
    if nodes.size == 0:
        logger.warning("split %s is empty; no loss or AUC to report", split)
        return EvalReport(split=split, mean_auc=None, per_label_auc=[],
                          excluded_labels=[], loss=None)
    logits, _ = model.forward(bundle.graph, training=False)
    return evaluation_report(split, logits, bundle.labels, nodes)


def snapshot(model: GipaModel) -> Dict[str, np.ndarray]:
    return {name: p.value.copy() for name, p in model.named_parameters().items()}


@dataclass
class TrainResult:
    model: GipaModel
    history: List[HistoryRow]
    best_epoch: int
    best_tensors: Dict[str, np.ndarray]
    valid_report: EvalReport
    test_report: EvalReport


def _is_better(auc: Optional[float], best_auc: Optional[float], have_best: bool) -> bool:
    if not have_best:
        return True
    if auc is None:
        return best_auc is None
    return best_auc is None or auc > best_auc


def train(bundle: DatasetBundle, config: TrainConfig,
          out_dir: Union[str, Path, None] = None) -> TrainResult:
    g = bundle.graph
    train_nodes = bundle.splits.get("train")
    if train_nodes is None or train_nodes.size == 0:
        raise DatasetError("the train split is empty")
    init_rng, train_rng = training_streams(config.seed)
    model = build_model(bundle, config, init_rng)
    optimizer = AdamW(model.parameters(), lr=config.lr, beta1=config.beta1,
                      beta2=config.beta2, eps=config.eps, weight_decay=config.weight_decay)

    history: List[HistoryRow] = []
    best_tensors: Dict[str, np.ndarray] = {}
    best_auc: Optional[float] = None
    best_epoch = 0
    for epoch in range(1, config.epochs + 1):
        keep = edge_drop(g, config.edge_drop, train_rng) if config.edge_drop > 0 else None
        logits, acts = model.forward(g, training=True, rng=train_rng, edge_keep=keep)
        loss, grad = bce_with_logits(logits, bundle.labels, train_nodes)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}", epoch=epoch,
                               loss=loss, max_abs_logit=float(np.nanmax(np.abs(logits))))
        model.backward(g, acts, grad)
        try:
            optimizer.step()
        except NumericError as exc:
            exc.details["epoch"] = epoch
            raise
        row = HistoryRow(epoch=epoch, train_loss=loss)
        logger.debug("epoch %d train_loss %.6f", epoch, loss)

        if epoch % config.eval_every == 0 or epoch == config.epochs:
            valid = evaluate(model, bundle, "valid")
            test = evaluate(model, bundle, "test")
            row.valid_auc, row.test_auc = valid.mean_auc, test.mean_auc
            logger.info("epoch %d train_loss %.6f valid_auc %s test_auc %s",
                        epoch, loss, valid.mean_auc, test.mean_auc)
            if _is_better(valid.mean_auc, best_auc, bool(best_tensors)):
                best_tensors, best_auc, best_epoch = snapshot(model), valid.mean_auc, epoch
        history.append(row)

    for name, param in model.named_parameters().items():
        param.value[...] = best_tensors[name]
    result = TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_tensors=best_tensors,
        valid_report=evaluate(model, bundle, "valid"),
        test_report=evaluate(model, bundle, "test"),
    )
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(out / CHECKPOINT_FILE, best_tensors)
        write_metrics_csv(out / METRICS_FILE, history)
        (out / CONFIG_FILE).write_text(config.to_text(), encoding="utf-8")
    return result


class SeedSummary(BaseModel):
    seeds: List[int]
    valid_auc: List[Optional[float]]
    test_auc: List[Optional[float]]
    test_auc_mean: Optional[float]
    test_auc_std: Optional[float]


def train_seeds(bundle: DatasetBundle, config: TrainConfig, seeds: Sequence[int],
                out_dir: Union[str, Path, None] = None) -> SeedSummary:
    """One model per seed; test AUC at best validation, mean and std over seeds."""
    valid, test = [], []
    for seed in seeds:
        run_dir = None if out_dir is None else Path(out_dir) / f"seed_{seed}"
        result = train(bundle, config.with_overrides(seed=seed), run_dir)
        valid.append(result.valid_report.mean_auc)
        test.append(result.test_report.mean_auc)
    scored = [auc for auc in test if auc is not None]
    summary = SeedSummary(
        seeds=list(seeds),
        valid_auc=valid,
        test_auc=test,
        test_auc_mean=float(np.mean(scored)) if scored else None,
        test_auc_std=float(np.std(scored)) if scored else None,
    )
    logger.info("%d seeds: test ROC-AUC %s +/- %s", len(seeds),
                summary.test_auc_mean, summary.test_auc_std)
    return summary
