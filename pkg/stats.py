"""
Energy-Inspired Models - Random Streams and Primitive Distributions

Counter-based random streams keyed by (seed, stream path), the diagonal
Gaussian used for proposals and momenta, and the categorical/Bernoulli
draws the samplers are built from.
"""

import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp as np_logsumexp

from autograd import Tensor, as_tensor, exp, sum_


LOG_2PI = math.log(2.0 * math.pi)


class Rng:
    """
    Reproducible random stream.

    Built on the Philox counter-based generator keyed through a SeedSequence,
    so Rng(seed, (a, b)) always yields the same draws and distinct stream
    paths are statistically independent.
    """

    def __init__(self, seed: int, stream: Sequence[int] = ()):
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def fork(self, *path: int) -> "Rng":
        """Independent child stream."""
        return Rng(self.seed, self.stream + tuple(path))

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size)

    def integers(self, high: int, size=None) -> np.ndarray:
        return self.generator.integers(0, high, size=size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"


class Proposal(Protocol):
    """Anything the samplers can draw candidates from."""

    @property
    def dim(self) -> int: ...

    def sample(self, rng: Rng, n: int) -> Tensor: ...

    def log_prob(self, x: Tensor) -> Tensor: ...


def standard_normal_log_prob(x: Tensor) -> Tensor:
    """log N(x; 0, I) summed over the last axis."""
    x = as_tensor(x)
    d = x.shape[-1]
    return -0.5 * sum_(x * x, axis=-1) - 0.5 * d * LOG_2PI


@dataclass
class DiagGaussian:
    """N(mean, diag(exp(log_std))²) over the last axis."""

    mean: Tensor
    log_std: Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_std.shape:
            raise ValueError(f"mean {self.mean.shape} and log_std {self.log_std.shape} differ in shape")
        if not np.all(np.isfinite(self.log_std.value)):
            raise ValueError("log_std must be finite")

    @classmethod
    def standard(cls, d: int) -> "DiagGaussian":
        return cls(Tensor(np.zeros(d)), Tensor(np.zeros(d)))

    @classmethod
    def from_arrays(cls, mean, std) -> "DiagGaussian":
        std = np.asarray(std, dtype=np.float64)
        return cls(Tensor(mean), Tensor(np.log(std)))

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std.value)

    def reparameterize(self, eps: Union[np.ndarray, Tensor]) -> Tensor:
        return self.mean + exp(self.log_std) * as_tensor(eps)

    def sample(self, rng: Rng, n: int) -> Tensor:
        """n pathwise-differentiable draws, shape (n, d)."""
        return self.reparameterize(rng.normal((n, self.dim)))

    def log_prob(self, x: Tensor) -> Tensor:
        z = (as_tensor(x) - self.mean) / exp(self.log_std)
        return -0.5 * sum_(z * z, axis=-1) - sum_(self.log_std, axis=-1) - 0.5 * self.dim * LOG_2PI

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Numpy fast path of log_prob for untracked arrays."""
        z = (np.asarray(x) - self.mean.value) / self.std
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std.value, axis=-1) - 0.5 * self.dim * LOG_2PI

    def entropy(self) -> Tensor:
        return sum_(self.log_std, axis=-1) + 0.5 * self.dim * (1.0 + LOG_2PI)


def gaussian_sample(
    d: DiagGaussian,
    rng: Rng,
    n: Optional[int] = None,
    eps: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Reparameterized draw x = mean + exp(log_std) ⊙ ε.

    Args:
        d: Distribution to sample
        rng: Source of ε (ignored when eps is given)
        n: Number of draws; a single point of shape (d,) when omitted
        eps: Explicit standard-normal noise

    Returns:
        (x, log_prob) with log_prob the exact log-density of x
    """
    if eps is None:
        eps = rng.normal((d.dim,) if n is None else (n, d.dim))
    x = d.reparameterize(eps)
    return x, d.log_prob(x)


def categorical_sample(logits, rng: Rng, size=None):
    """
    Draw an index with probability softmax(logits) over the last axis.

    Batched logits of shape (..., K) give one index per leading position;
    1-D logits honour `size`.

    Raises:
        ValueError: If logits are empty, NaN or +inf, or all -inf
    """
    logits = np.asarray(logits.value if isinstance(logits, Tensor) else logits, dtype=np.float64)
    if logits.ndim == 0 or logits.shape[-1] == 0:
        raise ValueError("categorical_sample needs at least one logit")
    if np.any(np.isnan(logits)) or np.any(logits == np.inf):
        raise ValueError("logits must be finite or -inf")
    normalizer = np_logsumexp(logits, axis=-1, keepdims=True)
    if not np.all(np.isfinite(normalizer)):
        raise ValueError("at least one logit per row must be finite")
    cdf = np.cumsum(np.exp(logits - normalizer), axis=-1)
    k = logits.shape[-1]
    if logits.ndim == 1:
        u = rng.uniform(size) * cdf[-1]
        index = np.minimum(np.searchsorted(cdf, u, side="right"), k - 1)
        return int(index) if size is None else index
    u = rng.uniform(logits.shape[:-1]) * cdf[..., -1]
    return np.minimum(np.sum(cdf <= u[..., None], axis=-1), k - 1)


def bernoulli_sample(p, rng: Rng):
    """
    1 with probability p, elementwise.

    Raises:
        ValueError: If any p lies outside [0, 1]
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError(f"Bernoulli probability outside [0, 1]: {p}")
    bits = (rng.uniform(p.shape) < p).astype(np.int64)
    return int(bits) if bits.ndim == 0 else bits


class DiscreteProposal:
    """
    Categorical proposal over a finite set of points.

    Shares the DiagGaussian sampling interface so the EIM samplers can run
    on finite supports, where their laws are computable by enumeration.
    """

    def __init__(self, points, probs):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.probs = np.asarray(probs, dtype=np.float64)
        if self.points.shape[0] != self.probs.shape[0]:
            raise ValueError("one probability per support point is required")
        if np.any(self.probs < 0) or not math.isclose(self.probs.sum(), 1.0, rel_tol=1e-12):
            raise ValueError("support probabilities must be nonnegative and sum to 1")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def index_of(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x))
        matches = np.all(x[:, None, :] == self.points[None, :, :], axis=-1)
        if not np.all(matches.any(axis=1)):
            raise ValueError("point outside the proposal support")
        return np.argmax(matches, axis=1)

    def sample_indices(self, rng: Rng, n: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            logits = np.log(self.probs)
        return categorical_sample(logits, rng, size=n)

    def sample(self, rng: Rng, n: int) -> Tensor:
        return Tensor(self.points[self.sample_indices(rng, n)])

    def log_prob(self, x: Tensor) -> Tensor:
        with np.errstate(divide="ignore"):
            return Tensor(np.log(self.probs[self.index_of(as_tensor(x).value)]))

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return self.log_prob(Tensor(x)).value
