"""
Energy-Inspired Models - Data Models

Pydantic records for run configuration, metric history, and the result
tables written by the command-line tools.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from config import config


ModelKind = Literal["trs", "snis", "his"]
TargetKind = Literal["nine_gaussians", "checkerboard", "two_rings"]


class Estimate(BaseModel):
    """Monte Carlo estimate with its standard error."""
    value: float = Field(..., description="Point estimate")
    stderr: float = Field(..., description="Standard error of the estimate")
    n: int = Field(1, description="Number of independent terms averaged")


class ProposalSpec(BaseModel):
    """Diagonal Gaussian proposal π(x) shared by all coordinates."""
    mean: float = Field(default_factory=lambda: config.training.proposal_mean, description="Mean of every coordinate")
    std: float = Field(default_factory=lambda: config.training.proposal_std, gt=0, description="Standard deviation")
    trainable: bool = Field(default_factory=lambda: config.training.train_proposal, description="Learn mean and log-std")


class TrainConfig(BaseModel):
    """Fully resolved configuration of a training run."""
    model: ModelKind = Field(default_factory=lambda: config.training.model, description="EIM sampler")
    target: TargetKind = Field(default_factory=lambda: config.training.target, description="Synthetic target density")
    k: int = Field(default_factory=lambda: config.training.k, ge=1, description="SNIS candidate count")
    t: Optional[int] = Field(None, ge=1, description="HIS leapfrog steps or TRS truncation step")
    inner_samples: int = Field(default_factory=lambda: config.training.inner_samples, ge=1, description="TRS inner draws")
    batch_size: int = Field(default_factory=lambda: config.training.batch_size, ge=1, description="Training batch size")
    lr: float = Field(default_factory=lambda: config.training.lr, gt=0, description="Adam learning rate")
    lr_drop_step: Optional[int] = Field(default_factory=lambda: config.training.lr_drop_step, ge=1, description="Step of the learning-rate drop")
    lr_drop_to: float = Field(default_factory=lambda: config.training.lr_drop_to, gt=0, description="Learning rate after the drop")
    steps: int = Field(default_factory=lambda: config.training.steps, ge=0, description="Optimizer steps")
    eval_interval: int = Field(default_factory=lambda: config.training.eval_interval, ge=1, description="Steps between evaluations")
    eval_samples: int = Field(default_factory=lambda: config.evaluation.eval_samples, ge=1, description="IWAE samples per point")
    eval_points: int = Field(default_factory=lambda: config.evaluation.eval_points, ge=1, description="Held-out set size")
    clip_grad_norm: Optional[float] = Field(default_factory=lambda: config.training.clip_grad_norm, gt=0, description="Gradient clip norm")
    seed: int = Field(default_factory=lambda: config.training.seed, ge=0, lt=2**64, description="Root seed")
    proposal: ProposalSpec = Field(default_factory=ProposalSpec, description="Proposal distribution")

    @model_validator(mode="after")
    def fill_step_count(self) -> "TrainConfig":
        if self.t is None:
            self.t = config.default_steps(self.model)
        return self


class MetricRecord(BaseModel):
    """One row of the training history."""
    step: int = Field(..., ge=0, description="Optimizer step")
    objective: float = Field(..., description="Mean ELBO over the training batch")
    eval_bound: float = Field(..., description="Held-out IWAE bound")
    eval_se: float = Field(..., description="Standard error of the held-out bound")
    grad_norm: float = Field(..., description="Global gradient norm before clipping")
    seconds: float = Field(..., description="Wall-clock seconds since the start of training")


class TrainResult(BaseModel):
    """Artifacts and history of a finished training run."""
    checkpoint: str = Field(..., description="Path of the final checkpoint")
    metrics: str = Field(..., description="Path of the metrics CSV")
    history: List[MetricRecord] = Field(default_factory=list, description="Metric records in step order")

    @property
    def final(self) -> MetricRecord:
        return self.history[-1]


class BoundRow(BaseModel):
    """One bound estimate from the bound zoo."""
    bound: str = Field(..., description="Bound name")
    k: int = Field(..., description="Sample count")
    estimate: float = Field(..., description="Monte Carlo estimate")
    se: float = Field(..., description="Standard error")
    oracle: float = Field(..., description="Closed-form target value")
    gap: float = Field(..., description="oracle minus estimate")


class SweepRow(BaseModel):
    """Final evaluation of one sweep setting."""
    setting: str = Field(..., description="Swept hyperparameter")
    value: int = Field(..., description="Hyperparameter value")
    eval_bound: float = Field(..., description="Final held-out IWAE bound")
    eval_se: float = Field(..., description="Standard error")
    seconds: float = Field(..., description="Wall-clock training time")
