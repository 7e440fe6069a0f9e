"""Training configuration and its flat ``key = value`` file grammar.

Defaults are the ogbn-proteins settings. Weight decay, epochs and the
evaluation cadence have no fixed recipe and are plain knobs.
"""
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, PositiveInt, ValidationError, field_validator, model_validator

from gipa.exceptions import ConfigError

RATE_FIELDS = (
    "edge_drop",
    "node_dropout",
    "attention_dropout",
    "propagation_dropout",
    "aggregation_dropout",
    "final_dropout",
)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    node_emb: PositiveInt = 80
    edge_emb: PositiveInt = 16
    att_mlp_depth: PositiveInt = 2
    heads: PositiveInt = 8
    prop_mlp_depth: PositiveInt = 2
    hidden_units: PositiveInt = 80
    num_gipa_layers: PositiveInt = 6
    aggregation: Literal["sum", "mean"] = "sum"

    edge_drop: float = 0.1
    node_dropout: float = 0.1
    attention_dropout: float = 0.1
    propagation_dropout: float = 0.25
    aggregation_dropout: float = 0.25
    final_dropout: float = 0.5

    optimizer: Literal["adamw"] = "adamw"
    lr: float = 0.01
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    epochs: PositiveInt = 200
    eval_every: PositiveInt = 5
    seed: int = 0
    runs: PositiveInt = 1
    ablate_edge_propagation: bool = False

    data_dir: Optional[Path] = None
    out_dir: Path = Path("runs")

    @field_validator(*RATE_FIELDS)
    @classmethod
    def _rate_in_range(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError(f"rate must be in [0, 1), got {value}")
        return value

    @field_validator("lr", "weight_decay", "eps")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if value < 0.0:
            raise ValueError(f"must be non-negative, got {value}")
        return value

    @field_validator("beta1", "beta2")
    @classmethod
    def _beta_in_range(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {value}")
        return value

    @model_validator(mode="after")
    def _heads_divide_embedding(self) -> "TrainConfig":
        if self.node_emb % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide node_emb ({self.node_emb})")
        return self

    def with_overrides(self, **overrides) -> "TrainConfig":
        return build_config({**self.model_dump(), **overrides})

    def without_dropout(self) -> "TrainConfig":
        return self.with_overrides(**{name: 0.0 for name in RATE_FIELDS})

    def to_text(self) -> str:
        lines = []
        for key, value in self.model_dump().items():
            if value is None:
                continue
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def build_config(values: dict) -> TrainConfig:
    try:
        return TrainConfig(**values)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> dict:
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {number}: empty key")
        if key in values:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path: Union[str, Path]) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_config_text(text))
