"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage/config/data error,
3 numeric failure during training.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from gipa.config import TrainConfig, load_config
from gipa.exceptions import (
    CheckpointError,
    ConfigError,
    DatasetError,
    GraphConstructionError,
    NumericError,
    ShapeError,
)
from gipa.services.dataset import generate_synthetic, load_dataset
from gipa.services.gradcheck import run_gradcheck
from gipa.services.trainer import CHECKPOINT_FILE, CONFIG_FILE, build_model, evaluate, train, train_seeds
from gipa.utils.checkpoint import apply_checkpoint, load_checkpoint

logger = logging.getLogger("gipa.cli")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

USAGE_ERRORS = (ConfigError, DatasetError, CheckpointError, GraphConstructionError, ShapeError, OSError)


def _config(args) -> TrainConfig:
    config = load_config(args.config) if args.config else TrainConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = args.runs
    if getattr(args, "data_dir", None) is not None:
        overrides["data_dir"] = args.data_dir
    if getattr(args, "out_dir", None) is not None:
        overrides["out_dir"] = args.out_dir
    return config.with_overrides(**overrides) if overrides else config


def _dataset(config: TrainConfig):
    if config.data_dir is None:
        raise ConfigError("data_dir is not set (config key or --data-dir)")
    return load_dataset(config.data_dir)


def _fmt(auc: Optional[float]) -> str:
    return "n/a" if auc is None else repr(auc)


def summary_line(valid_auc: Optional[float], test_auc: Optional[float]) -> str:
    return f"valid_auc {_fmt(valid_auc)} test_auc {_fmt(test_auc)}"


def cmd_train(args) -> int:
    config = _config(args)
    bundle = _dataset(config)
    out = Path(config.out_dir)
    if config.runs > 1:
        seeds = list(range(config.seed, config.seed + config.runs))
        summary = train_seeds(bundle, config, seeds, out)
        (out / CONFIG_FILE).write_text(config.to_text(), encoding="utf-8")
        print(summary.model_dump_json(indent=2))
        return EXIT_OK
    result = train(bundle, config, out)
    print(f"best_epoch {result.best_epoch}")
    print(summary_line(result.valid_report.mean_auc, result.test_report.mean_auc))
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _config(args)
    bundle = _dataset(config)
    path = Path(args.checkpoint) if args.checkpoint else Path(config.out_dir) / CHECKPOINT_FILE
    model = build_model(bundle, config)
    apply_checkpoint(model.named_parameters(), load_checkpoint(path))
    valid, test = evaluate(model, bundle, "valid"), evaluate(model, bundle, "test")
    print(summary_line(valid.mean_auc, test.mean_auc))
    for report in (valid, test):
        print(report.model_dump_json())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = _config(args)
    report = run_gradcheck(config, nodes=args.nodes, avg_degree=args.degree, layers=args.layers,
                           tolerance=args.tolerance, samples_per_tensor=args.samples,
                           seed=args.seed)
    print(f"{'tensor':<28} {'checked':>7} {'kinks':>5} {'max_rel_err':>12} {'max_abs_err':>12}  status")
    for row in report.rows:
        status = "ok" if row.passed else "FAIL"
        print(f"{row.name:<28} {row.checked:>7} {row.skipped_kinks:>5} "
              f"{row.max_rel_error:>12.3e} {row.max_abs_error:>12.3e}  {status}")
    if report.passed:
        return EXIT_OK
    worst = report.worst()
    print(f"gradcheck failed: worst relative error {worst.max_rel_error:.3e} in {worst.name}",
          file=sys.stderr)
    return EXIT_VERIFY_FAILED


def cmd_gen(args) -> int:
    bundle = generate_synthetic(n=args.n, avg_degree=args.degree, d_node=args.d_node,
                                d_edge=args.d_edge, num_labels=args.labels, seed=args.seed,
                                out_dir=args.out)
    meta = bundle.metadata
    print(f"wrote {args.out}: {meta['num_nodes']} nodes, {meta['num_undirected_edges']} edges, "
          f"{meta['num_labels']} labels")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("gipa.main:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gipa", description="GIPA graph network trainer")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int, help="train this many consecutive seeds")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--data-dir", dest="data_dir")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--config")
    p.add_argument("--nodes", type=int, default=12)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--samples", type=int, default=16, help="entries checked per tensor")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("gen", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--d-node", dest="d_node", type=int, default=8)
    p.add_argument("--d-edge", dest="d_edge", type=int, default=8)
    p.add_argument("--labels", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except NumericError as exc:
        print(f"error: {exc} {exc.details}", file=sys.stderr)
        return EXIT_NUMERIC
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
