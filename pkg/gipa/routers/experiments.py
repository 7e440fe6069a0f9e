from pathlib import Path
from typing import Optional

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel

from gipa.config import TrainConfig, load_config
from gipa.exceptions import GipaError
from gipa.services.dataset import generate_synthetic, load_dataset
from gipa.services.gradcheck import GradcheckReport, run_gradcheck
from gipa.services.metrics import EvalReport
from gipa.services.trainer import build_model, evaluate
from gipa.utils.checkpoint import apply_checkpoint, load_checkpoint

router = APIRouter(tags=["experiments"])


class DatasetRequest(BaseModel):
    out_dir: str
    n: int = 300
    degree: int = 3
    d_node: int = 8
    d_edge: int = 8
    labels: int = 8
    seed: int = 0


class GradcheckRequest(BaseModel):
    config_path: Optional[str] = None
    nodes: int = 12
    layers: int = 2
    tolerance: float = 1e-4
    samples: int = 16
    seed: int = 0


class EvalRequest(BaseModel):
    config_path: str
    checkpoint_path: str
    split: str = "test"


def _config(path: Optional[str]) -> TrainConfig:
    return load_config(path) if path else TrainConfig()


@router.post("/datasets")
def create_dataset(request: DatasetRequest):
    try:
        bundle = generate_synthetic(n=request.n, avg_degree=request.degree,
                                    d_node=request.d_node, d_edge=request.d_edge,
                                    num_labels=request.labels, seed=request.seed,
                                    out_dir=request.out_dir)
    except GipaError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return {"out_dir": str(Path(request.out_dir)), "metadata": bundle.metadata}


@router.post("/gradcheck", response_model=GradcheckReport)
def gradcheck(request: GradcheckRequest):
    try:
        return run_gradcheck(_config(request.config_path), nodes=request.nodes,
                             layers=request.layers, tolerance=request.tolerance,
                             samples_per_tensor=request.samples, seed=request.seed)
    except GipaError as exc:
        raise HTTPException(status_code=400, detail=str(exc))


@router.post("/eval", response_model=EvalReport)
def evaluate_checkpoint(request: EvalRequest):
    try:
        config = _config(request.config_path)
        if config.data_dir is None:
            raise HTTPException(status_code=400, detail="config has no data_dir")
        bundle = load_dataset(config.data_dir)
        model = build_model(bundle, config)
        apply_checkpoint(model.named_parameters(), load_checkpoint(request.checkpoint_path))
        return evaluate(model, bundle, request.split)
    except GipaError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
