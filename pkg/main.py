"""
Energy-Inspired Models - Main Entry Point

Command-line interface: train, eval, sample, grid, bounds and sweep.
Every command prints its fully resolved configuration before running.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import yaml
from pythonjsonlogger import jsonlogger

from autograd import NonFiniteError
from avvi_bounds import run_bound_zoo
from checkpoint import CheckpointError, load_model
from config import config
from density_grid import export_grids
from models import TrainConfig
from stats import Rng
from targets import make_target
from trainer import TrainingDivergedError, evaluate_run, sweep, train


logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# CLI flag -> TrainConfig field (proposal fields are nested)
TRAIN_FLAGS = [
    "model", "target", "k", "t", "inner_samples", "batch_size", "lr", "lr_drop_step",
    "lr_drop_to", "steps", "eval_interval", "eval_samples", "eval_points", "clip_grad_norm", "seed",
]
PROPOSAL_FLAGS = {"proposal_mean": "mean", "proposal_std": "std", "train_proposal": "trainable"}


def configure_logging() -> None:
    """Text logs by default, JSON lines when MONITORING_LOG_FORMAT=json."""
    handler = logging.StreamHandler()
    if config.monitoring.log_format == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.basicConfig(level=getattr(logging, config.monitoring.log_level.upper()), handlers=[handler])


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--config", dest="config_file", default=s, help="YAML file of TrainConfig fields")
    parser.add_argument("--model", choices=["trs", "snis", "his"], default=s)
    parser.add_argument("--target", choices=["nine_gaussians", "checkerboard", "two_rings"], default=s)
    parser.add_argument("--k", type=int, default=s, help="SNIS candidate count")
    parser.add_argument("--t", type=int, default=s, help="HIS leapfrog steps / TRS truncation")
    parser.add_argument("--inner-samples", type=int, default=s, help="TRS inner draws")
    parser.add_argument("--steps", type=int, default=s)
    parser.add_argument("--lr", type=float, default=s)
    parser.add_argument("--lr-drop-step", type=int, default=s)
    parser.add_argument("--lr-drop-to", type=float, default=s)
    parser.add_argument("--batch-size", type=int, default=s)
    parser.add_argument("--eval-interval", type=int, default=s)
    parser.add_argument("--eval-samples", type=int, default=s, help="IWAE samples per held-out point")
    parser.add_argument("--eval-points", type=int, default=s, help="Held-out set size")
    parser.add_argument("--clip-grad-norm", type=float, default=s)
    parser.add_argument("--seed", type=int, default=s)
    parser.add_argument("--proposal-mean", type=float, default=s)
    parser.add_argument("--proposal-std", type=float, default=s, help="Proposal standard deviation")
    parser.add_argument("--train-proposal", action="store_true", default=s)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eim", description="Energy-inspired models")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="Train a model")
    _add_train_flags(p)
    p.add_argument("--out", default="out", help="Artifact directory")

    p = commands.add_parser("eval", help="Held-out IWAE bound of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--eval-samples", type=int, default=argparse.SUPPRESS)
    p.add_argument("--eval-points", type=int, default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=None)

    p = commands.add_parser("sample", help="Draw samples from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")

    p = commands.add_parser("grid", help="Export target density and model histogram heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bounds", type=float, nargs=4, default=config.grid.bounds, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--resolution", type=int, default=config.grid.resolution)
    p.add_argument("--grid-samples", type=int, default=config.grid.samples)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")

    p = commands.add_parser("bounds", help="Run the multi-sample bound zoo")
    p.add_argument("--seed", type=int, default=config.training.seed)
    p.add_argument("--n-outer", type=int, default=2000)
    p.add_argument("--critic-steps", type=int, default=300)
    p.add_argument("--out", default="out")

    p = commands.add_parser("sweep", help="Train one model per K or T setting")
    _add_train_flags(p)
    p.add_argument("--param", choices=["k", "t"], required=True)
    p.add_argument("--values", type=int, nargs="+", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out")
    return parser


def resolve_train_config(args: argparse.Namespace) -> TrainConfig:
    """Settings defaults, then the YAML file, then explicit flags."""
    values: Dict[str, Any] = {}
    config_file = getattr(args, "config_file", None)
    if config_file:
        with open(config_file) as f:
            values = yaml.safe_load(f) or {}
    proposal = dict(values.pop("proposal", {}) or {})
    for flag in TRAIN_FLAGS:
        if hasattr(args, flag):
            values[flag] = getattr(args, flag)
    for flag, key in PROPOSAL_FLAGS.items():
        if hasattr(args, flag):
            proposal[key] = getattr(args, flag)
    if proposal:
        values["proposal"] = proposal
    return TrainConfig(**values)


def print_config(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_train(args: argparse.Namespace) -> int:
    run_config = resolve_train_config(args)
    print_config({"command": "train", "out": args.out, "config": run_config.model_dump(mode="json")})
    result = train(run_config, args.out)
    final = result.final
    logger.info(f"Final held-out bound {final.eval_bound:.4f} ± {final.eval_se:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model, _, run_config = load_model(args.checkpoint)
    overrides = {k: getattr(args, k) for k in ("eval_samples", "eval_points", "seed") if hasattr(args, k)}
    run_config = run_config.model_copy(update=overrides)
    print_config({"command": "eval", "checkpoint": args.checkpoint, "config": run_config.model_dump(mode="json")})
    estimate = evaluate_run(model, run_config)
    print(estimate.model_dump_json())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(estimate.model_dump_json(indent=2))
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    model, _, run_config = load_model(args.checkpoint)
    seed = run_config.seed if args.seed is None else args.seed
    print_config({"command": "sample", "checkpoint": args.checkpoint, "n": args.n, "seed": seed, "out": args.out})
    samples = model.sample(Rng(seed, (5,)), args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(samples, columns=["x", "y"]).to_csv(out / "samples.csv", index=False, float_format="%.17g")
    logger.info(f"Wrote {args.n} samples to {out / 'samples.csv'}")
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    model, _, run_config = load_model(args.checkpoint)
    seed = run_config.seed if args.seed is None else args.seed
    print_config({
        "command": "grid",
        "checkpoint": args.checkpoint,
        "bounds": list(args.bounds),
        "resolution": args.resolution,
        "grid_samples": args.grid_samples,
        "seed": seed,
        "target": run_config.target,
        "out": args.out,
    })
    paths = export_grids(
        make_target(run_config.target),
        model,
        Rng(seed, (6,)),
        args.out,
        args.bounds,
        args.resolution,
        args.grid_samples,
    )
    for name, path in paths.items():
        logger.info(f"{name}: {path}")
    return 0


def cmd_bounds(args: argparse.Namespace) -> int:
    print_config({"command": "bounds", "seed": args.seed, "n_outer": args.n_outer, "critic_steps": args.critic_steps, "out": args.out})
    rows = run_bound_zoo(Rng(args.seed), n_outer=args.n_outer, critic_steps=args.critic_steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([row.model_dump() for row in rows])
    frame.to_csv(out / "bounds.csv", index=False, float_format="%.17g")
    print(frame.to_string(index=False))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    run_config = resolve_train_config(args)
    print_config({
        "command": "sweep",
        "param": args.param,
        "values": args.values,
        "workers": args.workers,
        "out": args.out,
        "config": run_config.model_dump(mode="json"),
    })
    rows = sweep(run_config, args.param, args.values, args.out, workers=args.workers)
    for row in rows:
        logger.info(f"{row.setting}={row.value}: {row.eval_bound:.4f} ± {row.eval_se:.4f} ({row.seconds:.1f}s)")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sample": cmd_sample,
    "grid": cmd_grid,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CheckpointError, TrainingDivergedError, NonFiniteError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
