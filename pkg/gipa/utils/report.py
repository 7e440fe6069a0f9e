import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

logger = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_loss", "valid_auc", "test_auc")


@dataclass
class HistoryRow:
    epoch: int
    train_loss: float
    valid_auc: Optional[float] = None
    test_auc: Optional[float] = None


def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_metrics_csv(path: Union[str, Path], history: Iterable[HistoryRow]) -> Path:
    """One row per epoch; AUC cells stay empty on epochs without evaluation."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in history:
            writer.writerow([row.epoch, _cell(row.train_loss),
                             _cell(row.valid_auc), _cell(row.test_auc)])
    logger.info("wrote metrics %s", path)
    return path


def read_metrics_csv(path: Union[str, Path]) -> list:
    with Path(path).open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        return [
            HistoryRow(
                epoch=int(r["epoch"]),
                train_loss=float(r["train_loss"]),
                valid_auc=float(r["valid_auc"]) if r["valid_auc"] else None,
                test_auc=float(r["test_auc"]) if r["test_auc"] else None,
            )
            for r in reader
        ]
