"""
Energy-Inspired Models - Density Heatmaps

Exact target densities and model sample histograms on a regular grid,
written as CSV matrices and 8-bit binary PGM images. Row 0 of every grid
is the top of the picture (largest y).
"""

import logging
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import config
from eims import BaseEim
from stats import Rng
from targets import TargetDensity


logger = logging.getLogger(__name__)

Bounds = Tuple[float, float, float, float]


def _validate(bounds: Sequence[float], resolution: int) -> Bounds:
    if not 1 <= resolution <= config.grid.max_resolution:
        raise ValueError(f"resolution must be in [1, {config.grid.max_resolution}], got {resolution}")
    if len(bounds) != 4:
        raise ValueError(f"bounds must be xmin, xmax, ymin, ymax; got {list(bounds)}")
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    if not (xmin < xmax and ymin < ymax):
        raise ValueError(f"empty grid extent {list(bounds)}")
    return xmin, xmax, ymin, ymax


def cell_centres(bounds: Sequence[float], resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """x centres left to right and y centres top to bottom."""
    xmin, xmax, ymin, ymax = _validate(bounds, resolution)
    xs = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
    ys = ymax - (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
    return xs, ys


def target_density_grid(target: TargetDensity, bounds: Sequence[float], resolution: int) -> np.ndarray:
    """Exact density at every cell centre, shape (resolution, resolution)."""
    xs, ys = cell_centres(bounds, resolution)
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    points = np.stack([grid_x.ravel(), grid_y.ravel()], axis=1)
    return np.exp(target.log_density(points)).reshape(resolution, resolution)


def sample_histogram(samples: np.ndarray, bounds: Sequence[float], resolution: int) -> np.ndarray:
    """
    Density estimate from samples: counts / (n · cell area).

    Samples outside the extent are dropped but still count in n.
    """
    xmin, xmax, ymin, ymax = _validate(bounds, resolution)
    counts, _, _ = np.histogram2d(
        samples[:, 1], samples[:, 0], bins=resolution, range=[[ymin, ymax], [xmin, xmax]]
    )
    area = (xmax - xmin) * (ymax - ymin) / resolution**2
    return np.flipud(counts) / (len(samples) * area)


def write_pgm(path: Union[str, Path], grid: np.ndarray) -> Path:
    """
    Binary (P5) 8-bit grayscale image, scaled so the largest finite value is 255.

    +inf cells saturate to 255; NaN and -inf cells are black.
    """
    path = Path(path)
    grid = np.asarray(grid, dtype=np.float64)
    finite = np.isfinite(grid)
    peak = grid[finite].max() if finite.any() else 0.0
    grid = np.nan_to_num(grid, nan=0.0, posinf=max(peak, 0.0), neginf=0.0)
    scaled = np.zeros_like(grid) if peak <= 0 else np.clip(grid / peak, 0.0, 1.0) * 255.0
    pixels = np.rint(scaled).astype(np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    return path


def write_csv_matrix(path: Union[str, Path], grid: np.ndarray) -> Path:
    path = Path(path)
    pd.DataFrame(grid).to_csv(path, header=False, index=False, float_format="%.10g")
    return path


def export_grids(
    target: TargetDensity,
    model: BaseEim,
    rng: Rng,
    out_dir: Union[str, Path],
    bounds: Sequence[float],
    resolution: int,
    n_samples: int,
) -> Dict[str, Path]:
    """
    Write target_density.{csv,pgm} and model_histogram.{csv,pgm}.

    Returns:
        Written paths by artifact name
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    density = target_density_grid(target, bounds, resolution)
    logger.info(f"Drawing {n_samples} model samples for the {resolution}x{resolution} histogram")
    histogram = sample_histogram(model.sample(rng, n_samples), bounds, resolution)
    return {
        "target_density_csv": write_csv_matrix(out_dir / "target_density.csv", density),
        "target_density_pgm": write_pgm(out_dir / "target_density.pgm", density),
        "model_histogram_csv": write_csv_matrix(out_dir / "model_histogram.csv", histogram),
        "model_histogram_pgm": write_pgm(out_dir / "model_histogram.pgm", histogram),
    }
