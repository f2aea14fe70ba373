"""
Energy-Inspired Models - Training Loop

Stochastic gradient ascent on the batch-averaged ELBO with Adam, periodic
IWAE evaluation on a fixed held-out set, checkpointing, and K/T sweeps.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from autograd import NonFiniteError, ParamStore, Tensor, gradient, no_grad
from checkpoint import INIT_STREAM, save_checkpoint
from eims import BaseEim, build_model, iwae_eval_batch
from models import Estimate, MetricRecord, SweepRow, TrainConfig, TrainResult
from stats import Rng
from targets import TargetDensity, make_target


logger = logging.getLogger(__name__)

# Rng stream layout under the run seed
DATA_STREAM = 1
OBJECTIVE_STREAM = 2
EVAL_SET_STREAM = 3
EVAL_STREAM = 4

METRIC_COLUMNS = ["step", "objective", "eval_bound", "eval_se", "grad_norm", "seconds"]
SWEEP_COLUMNS = ["setting", "value", "eval_bound", "eval_se", "seconds"]
# Hyperparameters each model actually uses
SWEEPABLE = {"snis": ("k",), "trs": ("t",), "his": ("t",)}


class TrainingDivergedError(RuntimeError):
    """Objective or gradients became non-finite during training."""


@dataclass
class AdamState:
    """First/second moment estimates per parameter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(store: ParamStore, state: AdamState, lr: float) -> None:
    """
    One bias-corrected Adam update (descent on the accumulated gradients).

    Gradients are zeroed afterwards.

    Raises:
        NonFiniteError: If any gradient is NaN/Inf; nothing is modified
    """
    for name in store.names():
        if not np.all(np.isfinite(store.grad(name))):
            raise NonFiniteError(f"Non-finite gradient for parameter '{name}'")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, param in store.items():
        g = store.grad(name)
        if name not in state.m:
            state.m[name] = np.zeros_like(param.value)
            state.v[name] = np.zeros_like(param.value)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        store.set_value(name, param.value - lr * m_hat / (np.sqrt(v_hat) + state.eps))
    store.zero_grad()


def learning_rate(config: TrainConfig, step: int) -> float:
    """Constant rate with an optional single drop."""
    if config.lr_drop_step is not None and step >= config.lr_drop_step:
        return config.lr_drop_to
    return config.lr


def kl_weight(config: TrainConfig, step: int) -> float:
    """
    Annealing weight on a KL term.

    The EIM bounds have no separate KL term, so the schedule is constant.
    """
    return 1.0


def clip_gradients(store: ParamStore, max_norm: Optional[float]) -> float:
    """
    Rescale gradients to global norm at most max_norm.

    Returns:
        Global norm before clipping
    """
    norm = store.grad_norm()
    if max_norm is not None and norm > max_norm:
        store.scale_grads(max_norm / norm)
    return norm


def evaluate_points(model: BaseEim, points: np.ndarray, n_iwae: int, rng: Rng) -> Estimate:
    """
    Mean IWAE-n bound over fixed data points.

    The standard error reflects variation across points.
    """
    values, _ = iwae_eval_batch(model, points, n_iwae, rng)
    n = len(values)
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(value=float(np.mean(values)), stderr=stderr, n=n)


def evaluate(model: BaseEim, target: TargetDensity, n_data: int, n_iwae: int, rng: Rng) -> Estimate:
    """
    Mean IWAE-n bound over n_data fresh target samples.

    Raises:
        ValueError: If a count is below 1
    """
    if n_data < 1 or n_iwae < 1:
        raise ValueError(f"counts must be at least 1, got n_data={n_data}, n_iwae={n_iwae}")
    points = target.sample(rng.fork(0), n_data)
    return evaluate_points(model, points, n_iwae, rng.fork(1))


def eval_set(config: TrainConfig, target: TargetDensity) -> np.ndarray:
    """The held-out points fixed by the run seed."""
    return target.sample(Rng(config.seed, (EVAL_SET_STREAM,)), config.eval_points)


def evaluate_run(model: BaseEim, config: TrainConfig, points: Optional[np.ndarray] = None) -> Estimate:
    """
    Held-out evaluation of a run: its fixed eval set and eval stream.

    Repeated calls on the same parameters give identical results.
    """
    if points is None:
        points = eval_set(config, make_target(config.target))
    return evaluate_points(model, points, config.eval_samples, Rng(config.seed, (EVAL_STREAM,)))


def write_metrics(history: Sequence[MetricRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    frame = pd.DataFrame([record.model_dump() for record in history], columns=METRIC_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


class Trainer:
    """
    Runs one training configuration end to end.

    Every random draw comes from a stream keyed by the run seed, so a
    single-threaded run is reproducible bit for bit.
    """

    def __init__(self, config: TrainConfig, out_dir: Union[str, Path]):
        """
        Initialize the trainer.

        Args:
            config: Resolved run configuration
            out_dir: Directory receiving checkpoint.eimc, metrics.csv and config.json
        """
        self.config = config
        self.out_dir = Path(out_dir)
        self.store = ParamStore()
        self.model = build_model(config, self.store, Rng(config.seed, (INIT_STREAM,)))
        self.target = make_target(config.target)
        self.state = AdamState()
        self.eval_points = eval_set(config, self.target)
        self.history: List[MetricRecord] = []
        self.logger = logging.getLogger(__name__)

    @property
    def checkpoint_path(self) -> Path:
        return self.out_dir / "checkpoint.eimc"

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / "metrics.csv"

    def _objective(self, step: int) -> Tensor:
        batch = self.target.sample(Rng(self.config.seed, (DATA_STREAM, step)), self.config.batch_size)
        bound = self.model.elbo(Tensor(batch), Rng(self.config.seed, (OBJECTIVE_STREAM, step)))
        return bound.mean()

    def _evaluate(self) -> Estimate:
        return evaluate_run(self.model, self.config, self.eval_points)

    def _record(self, step: int, objective: float, grad_norm: float, started: float) -> MetricRecord:
        estimate = self._evaluate()
        record = MetricRecord(
            step=step,
            objective=objective,
            eval_bound=estimate.value,
            eval_se=estimate.stderr,
            grad_norm=grad_norm,
            seconds=time.perf_counter() - started,
        )
        self.history.append(record)
        save_checkpoint(self.checkpoint_path, self.config, self.store)
        write_metrics(self.history, self.metrics_path)
        self.logger.info(
            f"step {step}: objective {objective:.4f}, eval {estimate.value:.4f} ± {estimate.stderr:.4f}"
        )
        return record

    def run(self) -> TrainResult:
        """
        Train for config.steps optimizer steps.

        Raises:
            TrainingDivergedError: If the objective or a gradient becomes non-finite;
                the last checkpoint on disk is kept
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "config.json").write_text(self.config.model_dump_json(indent=2))
        self.logger.info(
            f"Training {self.config.model} on {self.config.target} for {self.config.steps} steps "
            f"({len(self.store)} parameter tensors)"
        )
        started = time.perf_counter()
        try:
            with no_grad():
                initial = self._objective(0).item()
            self._record(0, initial, 0.0, started)
            for step in range(1, self.config.steps + 1):
                objective = self._objective(step)
                gradient(-objective, self.store)
                norm = clip_gradients(self.store, self.config.clip_grad_norm)
                adam_step(self.store, self.state, learning_rate(self.config, step))
                self.logger.debug(
                    f"step {step}: objective {objective.item():.6f}, grad norm {norm:.4g}, "
                    f"kl weight {kl_weight(self.config, step):g}"
                )
                if step % self.config.eval_interval == 0 or step == self.config.steps:
                    self._record(step, objective.item(), norm, started)
        except NonFiniteError as e:
            self.logger.error(f"Training diverged: {e}")
            write_metrics(self.history, self.metrics_path)
            raise TrainingDivergedError(str(e)) from e
        self.logger.info(f"Finished in {time.perf_counter() - started:.1f}s")
        return TrainResult(
            checkpoint=str(self.checkpoint_path), metrics=str(self.metrics_path), history=self.history
        )


def train(config: TrainConfig, out_dir: Union[str, Path]) -> TrainResult:
    """Train a model and write its artifacts under out_dir."""
    return Trainer(config, out_dir).run()


def _sweep_one(args: Tuple[TrainConfig, str, int, str]) -> SweepRow:
    config, param, value, out_dir = args
    started = time.perf_counter()
    result = train(config, out_dir)
    return SweepRow(
        setting=param,
        value=value,
        eval_bound=result.final.eval_bound,
        eval_se=result.final.eval_se,
        seconds=time.perf_counter() - started,
    )


def sweep(
    config: TrainConfig,
    param: str,
    values: Sequence[int],
    out_dir: Union[str, Path],
    workers: int = 1,
) -> List[SweepRow]:
    """
    Train one model per setting of `param` with the same seed.

    Args:
        config: Base configuration
        param: "k" or "t"
        values: Settings to train
        out_dir: Receives one sub-directory per setting and sweep.csv
        workers: Parallel processes (1 runs in this process)

    Raises:
        ValueError: If values is empty or param is not used by config.model
    """
    if param not in ("k", "t"):
        raise ValueError(f"Can only sweep 'k' or 't', got '{param}'")
    if param not in SWEEPABLE[config.model]:
        raise ValueError(f"{config.model} does not use '{param}'; sweep one of {list(SWEEPABLE[config.model])}")
    if not values:
        raise ValueError("Sweep needs at least one value")
    out_dir = Path(out_dir)
    jobs = [
        (config.model_copy(update={param: int(v)}), param, int(v), str(out_dir / f"{param}={v}"))
        for v in values
    ]
    for job_config, _, _, _ in jobs:
        TrainConfig.model_validate(job_config.model_dump())

    if workers > 1:
        logger.info(f"Sweeping {param} over {list(values)} with {workers} processes")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        logger.info(f"Sweeping {param} over {list(values)}")
        rows = [_sweep_one(job) for job in jobs]

    out_dir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([row.model_dump() for row in rows], columns=SWEEP_COLUMNS).to_csv(
        out_dir / "sweep.csv", index=False, float_format="%.17g"
    )
    return rows
