"""
Energy-Inspired Models - Synthetic Target Densities

The three 2-D benchmark densities, each with an exact sampler (training
data) and an exact normalized log-density (evaluation reference).
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Dict, Optional, Type

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import logsumexp
from scipy.stats import norm

from models import Estimate
from stats import LOG_2PI, Rng


logger = logging.getLogger(__name__)


class TargetDensity(ABC):
    """Synthetic 2-D data distribution with a known density."""

    kind: str = ""
    dim: int = 2

    @abstractmethod
    def sample(self, rng: Rng, n: int) -> np.ndarray:
        """n exact draws, shape (n, 2)."""

    @abstractmethod
    def log_density(self, points: np.ndarray) -> np.ndarray:
        """Normalized log-density of each row (−inf off support)."""

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class NineGaussians(TargetDensity):
    """Equal mixture of nine Gaussians with std 0.1 centred on {−1, 0, 1}²."""

    kind = "nine_gaussians"
    std = 0.1

    def __init__(self):
        grid = np.array([-1.0, 0.0, 1.0])
        self.means = np.array([(x, y) for x in grid for y in grid])

    def sample(self, rng: Rng, n: int) -> np.ndarray:
        component = rng.integers(len(self.means), size=n)
        return self.means[component] + self.std * rng.normal((n, 2))

    def log_density(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        diff = points[:, None, :] - self.means[None, :, :]
        log_components = (
            -0.5 * np.sum(diff * diff, axis=-1) / self.std**2
            - 2.0 * math.log(self.std)
            - LOG_2PI
        )
        return logsumexp(log_components, axis=1) - math.log(len(self.means))


class Checkerboard(TargetDensity):
    """Uniform on eight 0.25-wide squares of [0, 1]², density 2 on support."""

    kind = "checkerboard"
    side = 0.25

    def __init__(self):
        first = [(x, y) for x in (0.0, 0.5) for y in (0.0, 0.5)]
        second = [(x, y) for x in (0.25, 0.75) for y in (0.25, 0.75)]
        self.corners = np.array(first + second)
        self.log_height = -math.log(len(self.corners) * self.side**2)

    def sample(self, rng: Rng, n: int) -> np.ndarray:
        square = rng.integers(len(self.corners), size=n)
        return self.corners[square] + self.side * rng.uniform((n, 2))

    def square_of(self, points: np.ndarray) -> np.ndarray:
        """Index of the square holding each point, −1 off support."""
        points = np.atleast_2d(points)
        offset = points[:, None, :] - self.corners[None, :, :]
        inside = np.all((offset >= 0.0) & (offset <= self.side), axis=-1)
        return np.where(inside.any(axis=1), np.argmax(inside, axis=1), -1)

    def log_density(self, points: np.ndarray) -> np.ndarray:
        on_support = self.square_of(points) >= 0
        return np.where(on_support, self.log_height, -np.inf)


class TwoRings(TargetDensity):
    """
    Two concentric rings with radial profile N(r; 0.6, 0.1) + N(r; 1.3, 0.1).

    The radial normalizer and inverse CDF come from a fixed grid on [0, 3];
    the 2-D density divides the radial density by 2πr, with r floored at the
    grid spacing so the origin keeps a finite density.
    """

    kind = "two_rings"
    radii = (0.6, 1.3)
    width = 0.1
    grid_max = 3.0
    grid_points = 100_000

    def __init__(self):
        self.grid = np.linspace(0.0, self.grid_max, self.grid_points)
        self.r_floor = float(self.grid[1])
        profile = np.exp(self.log_radial_unnormalized(self.grid))
        self.log_normalizer = float(math.log(trapezoid(profile, self.grid)))
        cdf = cumulative_trapezoid(profile, self.grid, initial=0.0)
        cdf /= cdf[-1]
        self._cdf, keep = np.unique(cdf, return_index=True)
        self._cdf_radii = self.grid[keep]
        logger.debug(f"Two-rings radial normalizer log Z_r = {self.log_normalizer:.6f}")

    def log_radial_unnormalized(self, r: np.ndarray) -> np.ndarray:
        return np.logaddexp(
            norm.logpdf(r, loc=self.radii[0], scale=self.width),
            norm.logpdf(r, loc=self.radii[1], scale=self.width),
        )

    def radial_log_density(self, r: np.ndarray) -> np.ndarray:
        return self.log_radial_unnormalized(r) - self.log_normalizer

    def sample(self, rng: Rng, n: int) -> np.ndarray:
        r = np.interp(rng.uniform(n), self._cdf, self._cdf_radii)
        theta = 2.0 * math.pi * rng.uniform(n)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)

    def log_density(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        r = np.maximum(np.hypot(points[:, 0], points[:, 1]), self.r_floor)
        return self.radial_log_density(r) - np.log(2.0 * math.pi * r)


TARGETS: Dict[str, Type[TargetDensity]] = {
    NineGaussians.kind: NineGaussians,
    Checkerboard.kind: Checkerboard,
    TwoRings.kind: TwoRings,
}


def make_target(kind: str) -> TargetDensity:
    """
    Build a target by name.

    Raises:
        ValueError: If the kind is unknown
    """
    try:
        return TARGETS[kind]()
    except KeyError:
        raise ValueError(f"Unknown target '{kind}'; expected one of {sorted(TARGETS)}") from None


def target_sample(t: TargetDensity, rng: Rng, n: Optional[int] = None) -> np.ndarray:
    """A single point of shape (2,), or n points of shape (n, 2)."""
    points = t.sample(rng, 1 if n is None else n)
    return points[0] if n is None else points


def target_log_density(t: TargetDensity, point: np.ndarray):
    """Log-density of one point (float) or of each row of a batch."""
    point = np.asarray(point, dtype=np.float64)
    values = t.log_density(point)
    return float(values[0]) if point.ndim == 1 else values


def reference_avg_log_density(t: TargetDensity, n: int, rng: Rng) -> Estimate:
    """
    Monte Carlo estimate of E_p*[log p*(x)], the best achievable test score.

    Raises:
        ValueError: If n < 1
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    values = t.log_density(t.sample(rng, n))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(value=float(np.mean(values)), stderr=stderr, n=n)
