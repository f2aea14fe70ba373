"""
Tests for the density heatmap export.
"""

import numpy as np
import pandas as pd
import pytest

from autograd import ParamStore
from density_grid import (
    cell_centres,
    export_grids,
    sample_histogram,
    target_density_grid,
    write_pgm,
)
from eims import build_model
from models import TrainConfig
from stats import Rng
from targets import Checkerboard, TwoRings


def test_cell_centres_run_top_to_bottom():
    xs, ys = cell_centres([0.0, 1.0, 0.0, 1.0], 2)
    assert np.allclose(xs, [0.25, 0.75])
    assert np.allclose(ys, [0.75, 0.25])


def test_checkerboard_grid_orientation():
    grid = target_density_grid(Checkerboard(), [0.0, 1.0, 0.0, 1.0], 4)
    assert np.allclose(grid[0], [0.0, 2.0, 0.0, 2.0])
    assert np.allclose(grid[3], [2.0, 0.0, 2.0, 0.0])
    assert grid.sum() * (1 / 16) == pytest.approx(1.0)


def test_histogram_is_a_density():
    samples = np.array([[0.1, 0.9], [5.0, 5.0]])
    hist = sample_histogram(samples, [0.0, 1.0, 0.0, 1.0], 2)
    # one of two samples falls in the top-left cell of area 1/4
    assert np.allclose(hist, [[2.0, 0.0], [0.0, 0.0]])


def test_histogram_of_target_samples_matches_density():
    target = Checkerboard()
    bounds = [0.0, 1.0, 0.0, 1.0]
    hist = sample_histogram(target.sample(Rng(60), 200_000), bounds, 4)
    assert np.allclose(hist, target_density_grid(target, bounds, 4), atol=0.05)


def test_write_pgm(tmp_path):
    path = write_pgm(tmp_path / "g.pgm", np.array([[0.0, 1.0], [2.0, 4.0]]))
    data = path.read_bytes()
    header = b"P5\n2 2\n255\n"
    assert data[: len(header)] == header
    assert list(data[len(header):]) == [0, 64, 128, 255]

    blank = write_pgm(tmp_path / "blank.pgm", np.zeros((1, 3))).read_bytes()
    assert blank.endswith(bytes(3))


def test_write_pgm_scales_by_largest_finite_value(tmp_path):
    grid = np.array([[1.0, np.inf], [np.nan, 2.0]])
    data = write_pgm(tmp_path / "g.pgm", grid).read_bytes()
    assert list(data[-4:]) == [128, 255, 0, 255]


def test_two_rings_grid_through_the_origin(tmp_path):
    # odd resolution on symmetric bounds puts a cell centre at (0, 0)
    grid = target_density_grid(TwoRings(), [-2.0, 2.0, -2.0, 2.0], 3)
    assert np.all(np.isfinite(grid))
    assert grid[1, 1] < 1e-3
    pixels = list(write_pgm(tmp_path / "rings.pgm", grid).read_bytes()[-9:])
    assert pixels == [0, 255, 0, 255, 0, 255, 0, 255, 0]


@pytest.mark.parametrize(
    "bounds,resolution",
    [([0.0, 1.0, 0.0, 1.0], 0), ([0.0, 1.0, 0.0, 1.0], 10_000), ([1.0, 0.0, 0.0, 1.0], 4), ([0.0, 1.0, 0.0], 4)],
)
def test_grid_validation(bounds, resolution):
    with pytest.raises(ValueError):
        cell_centres(bounds, resolution)


def test_export_grids(tmp_path):
    store = ParamStore()
    model = build_model(TrainConfig(model="snis", k=4), store, Rng(0))
    paths = export_grids(Checkerboard(), model, Rng(1), tmp_path, [-2.0, 2.0, -2.0, 2.0], 8, 1000)
    assert set(paths) == {"target_density_csv", "target_density_pgm", "model_histogram_csv", "model_histogram_pgm"}
    for path in paths.values():
        assert path.exists()
    matrix = pd.read_csv(paths["model_histogram_csv"], header=None).to_numpy()
    assert matrix.shape == (8, 8)
    assert matrix.sum() * (4.0 / 8) ** 2 <= 1.0 + 1e-9
