"""
Energy-Inspired Models - Base Model

Abstract base class for the sampler-defined generative models.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, Tuple

import numpy as np
from scipy.special import logsumexp

from autograd import NonFiniteError, ParamStore, Tensor
from config import config
from models import Estimate
from stats import Proposal, Rng


logger = logging.getLogger(__name__)

Energy = Callable[[Tensor], Tensor]


class BaseEim(ABC):
    """
    Abstract base class for energy-inspired models.

    A model is an approximate sampler (proposal π plus energy U) treated
    as the generative model itself. Subclasses implement exact sampling,
    a differentiable single-sample ELBO, and the per-draw log importance
    ratios behind the multi-sample evaluation bound.
    """

    kind: str = ""

    def __init__(self, proposal: Proposal, energy: Energy, store: ParamStore):
        """
        Initialize the model.

        Args:
            proposal: Tractable base distribution π(x)
            energy: Network mapping a (B, d) batch to B energies U(x)
            store: Parameter store holding every trainable tensor
        """
        self.proposal = proposal
        self.energy = energy
        self.store = store
        self.logger = logging.getLogger(f"{__name__}.{self.kind}")

    @property
    def dim(self) -> int:
        return self.proposal.dim

    @abstractmethod
    def _sample_chunk(self, rng: Rng, n: int) -> np.ndarray:
        """Draw n points, shape (n, d)."""

    @abstractmethod
    def elbo(self, x: Tensor, rng: Rng) -> Tensor:
        """
        Single-sample lower bound on log p(x) for each row.

        Args:
            x: Batch of data points, shape (B, d)
            rng: Source of the auxiliary randomness

        Returns:
            Differentiable bound per row, shape (B,)

        Raises:
            NonFiniteError: If any bound is NaN/Inf
        """

    @abstractmethod
    def _log_weights_chunk(self, x: np.ndarray, n: int, rng: Rng) -> np.ndarray:
        """n log importance ratios per row, shape (n, B)."""

    def sample(self, rng: Rng, n: int, chunk: int = 4096) -> np.ndarray:
        """Exact draws from the model, shape (n, d)."""
        parts = [self._sample_chunk(rng, min(chunk, n - start)) for start in range(0, n, chunk)]
        return np.concatenate(parts, axis=0) if parts else np.zeros((0, self.dim))

    def log_weights(self, x: np.ndarray, n: int, rng: Rng, chunk: int = 0) -> np.ndarray:
        """
        Independent realizations of the ELBO's importance ratio.

        Args:
            x: Data points, shape (B, d)
            n: Realizations per point
            rng: Source of the auxiliary randomness
            chunk: Realizations evaluated together (defaults to settings)

        Returns:
            Log ratios, shape (n, B)
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        chunk = chunk or config.evaluation.chunk_size
        parts = [self._log_weights_chunk(x, min(chunk, n - start), rng) for start in range(0, n, chunk)]
        return np.concatenate(parts, axis=0)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim, "parameters": len(self.store)}

    def _checked(self, bound: Tensor) -> Tensor:
        if not np.all(np.isfinite(bound.value)):
            bad = int(np.flatnonzero(~np.isfinite(bound.value))[0])
            self.logger.error(f"Non-finite bound at batch row {bad}: {bound.value[bad]}")
            raise NonFiniteError(f"{self.kind} bound is non-finite for batch row {bad}", node=bound)
        return bound


def log_mean_exp(log_w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    log of the mean of exp(log_w) over axis 0, with delta-method errors.

    Returns:
        (values, stderrs) per column
    """
    n = log_w.shape[0]
    values = logsumexp(log_w, axis=0) - math.log(n)
    if n < 2:
        return values, np.zeros_like(values)
    w = np.exp(log_w - np.max(log_w, axis=0, keepdims=True))
    stderrs = np.std(w, axis=0, ddof=1) / (math.sqrt(n) * np.mean(w, axis=0))
    return values, stderrs


def iwae_eval(model: BaseEim, x: np.ndarray, n: int, rng: Rng) -> Estimate:
    """
    IWAE bound log (1/n) Σ w_i for one data point.

    Raises:
        ValueError: If n < 1
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    values, stderrs = log_mean_exp(model.log_weights(x, n, rng))
    return Estimate(value=float(values[0]), stderr=float(stderrs[0]), n=n)


def iwae_eval_batch(model: BaseEim, x: np.ndarray, n: int, rng: Rng) -> Tuple[np.ndarray, np.ndarray]:
    """IWAE bounds and their standard errors for every row of x."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    logger.debug(f"IWAE-{n} evaluation of {len(x)} points with {model.kind}")
    return log_mean_exp(model.log_weights(x, n, rng))
