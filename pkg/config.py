"""
Energy-Inspired Models - Configuration Module

Manages all configuration via environment variables and provides
type-safe configuration objects. Defaults follow the synthetic 2-D setup:
fixed N(0, I) proposal, batches of 128, Adam at 3e-4, IWAE-1000 evaluation.
"""

from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class EngineSettings(BaseSettings):
    """Differentiable engine configuration."""

    debug_checks: bool = Field(
        default=False,
        description="Check every new graph node for NaN/Inf at creation time"
    )

    model_config = SettingsConfigDict(env_prefix="ENGINE_")


class TrainingSettings(BaseSettings):
    """Training defaults for the synthetic experiments."""

    model: str = Field(default="snis", description="Model kind (trs, snis or his)")
    target: str = Field(
        default="nine_gaussians",
        description="Target density (nine_gaussians, checkerboard or two_rings)"
    )
    k: int = Field(default=1024, description="SNIS candidate count")
    his_t: int = Field(default=5, description="HIS leapfrog steps")
    trs_t: int = Field(default=100, description="TRS truncation step")
    inner_samples: int = Field(
        default=64,
        description="Proposal draws estimating the TRS rejected-sample expectation"
    )
    batch_size: int = Field(default=128, description="Training batch size")
    lr: float = Field(default=3e-4, description="Adam learning rate")
    lr_drop_step: Optional[int] = Field(
        default=None,
        description="Step at which the learning rate drops (disabled when unset)"
    )
    lr_drop_to: float = Field(default=1e-4, description="Learning rate after the drop")
    steps: int = Field(default=50_000, description="Total optimizer steps")
    eval_interval: int = Field(default=1000, description="Steps between held-out evaluations")
    clip_grad_norm: Optional[float] = Field(
        default=None,
        description="Global gradient-norm clip (100 is a reasonable value for HIS)"
    )
    proposal_mean: float = Field(default=0.0, description="Proposal mean (all coordinates)")
    proposal_std: float = Field(default=1.0, description="Proposal standard deviation")
    train_proposal: bool = Field(default=False, description="Learn the proposal parameters")
    seed: int = Field(default=0, description="Root random seed")

    model_config = SettingsConfigDict(env_prefix="TRAIN_")


class EvaluationSettings(BaseSettings):
    """Held-out evaluation configuration."""

    eval_points: int = Field(default=1024, description="Held-out target samples per evaluation")
    eval_samples: int = Field(default=1000, description="IWAE samples per held-out point")
    chunk_size: int = Field(
        default=100,
        description="Importance draws evaluated together (bounds peak memory)"
    )

    model_config = SettingsConfigDict(env_prefix="EVAL_")


class GridSettings(BaseSettings):
    """Density heatmap export configuration."""

    bounds: list[float] = Field(
        default=[-2.0, 2.0, -2.0, 2.0],
        description="Grid extent as xmin, xmax, ymin, ymax"
    )
    resolution: int = Field(default=200, description="Cells per side")
    max_resolution: int = Field(default=2048, description="Largest accepted resolution")
    samples: int = Field(default=1_000_000, description="Model samples binned into the histogram")

    model_config = SettingsConfigDict(env_prefix="GRID_")


class MonitoringSettings(BaseSettings):
    """Logging configuration."""

    log_level: str = Field(
        default="INFO",
        description="Logging level (DEBUG, INFO, WARNING, ERROR)"
    )
    log_format: str = Field(
        default="text",
        description="Log format (json or text)"
    )

    model_config = SettingsConfigDict(env_prefix="MONITORING_")


class Config(BaseSettings):
    """Main application configuration."""

    # Environment
    environment: str = Field(
        default="development",
        description="Environment (development, ci, production)"
    )

    # Sub-configurations
    engine: EngineSettings = Field(default_factory=EngineSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    grid: GridSettings = Field(default_factory=GridSettings)
    monitoring: MonitoringSettings = Field(default_factory=MonitoringSettings)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        extra="ignore"
    )

    def default_steps(self, model: str) -> int:
        """Default leapfrog / truncation step count for a model kind."""
        return self.training.trs_t if model == "trs" else self.training.his_t

    def is_ci(self) -> bool:
        """Check if running under continuous integration."""
        return self.environment == "ci"


# Global configuration instance
config = Config()
