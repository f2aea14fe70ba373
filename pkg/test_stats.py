"""
Tests for random streams and primitive distributions.
"""

import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from autograd import Tensor
from stats import (
    DiagGaussian,
    DiscreteProposal,
    Rng,
    bernoulli_sample,
    categorical_sample,
    gaussian_sample,
    standard_normal_log_prob,
)


def test_streams_are_reproducible_and_distinct():
    assert np.array_equal(Rng(7, (1, 2)).normal(5), Rng(7, (1, 2)).normal(5))
    assert np.array_equal(Rng(7).fork(1, 2).normal(5), Rng(7, (1, 2)).normal(5))
    assert not np.array_equal(Rng(7, (1,)).normal(5), Rng(7, (2,)).normal(5))
    assert not np.array_equal(Rng(7).normal(5), Rng(8).normal(5))


def test_categorical_frequencies():
    rng = Rng(11)
    probs = np.array([0.2, 0.3, 0.5, 0.0])
    with np.errstate(divide="ignore"):
        logits = np.log(probs)
    draws = categorical_sample(logits, rng, size=100_000)
    freqs = np.bincount(draws, minlength=4) / len(draws)
    assert np.allclose(freqs, probs, atol=0.01)
    assert freqs[3] == 0.0


def test_categorical_shapes():
    rng = Rng(12)
    single = categorical_sample(np.zeros(3), rng)
    assert isinstance(single, int) and 0 <= single < 3

    batched = categorical_sample(np.zeros((4, 5, 3)), rng)
    assert batched.shape == (4, 5)
    assert np.all((batched >= 0) & (batched < 3))

    forced = categorical_sample(np.array([[-np.inf, 0.0], [0.0, -np.inf]]), rng)
    assert list(forced) == [1, 0]


@pytest.mark.parametrize(
    "logits",
    [np.zeros(0), np.array([0.0, np.nan]), np.array([0.0, np.inf]), np.array([-np.inf, -np.inf])],
)
def test_categorical_rejects_bad_logits(logits):
    with pytest.raises(ValueError):
        categorical_sample(logits, Rng(0))


def test_bernoulli():
    rng = Rng(13)
    assert bernoulli_sample(0.0, rng) == 0
    assert bernoulli_sample(1.0, rng) == 1
    draws = bernoulli_sample(np.full(50_000, 0.3), rng)
    assert abs(draws.mean() - 0.3) < 0.01
    with pytest.raises(ValueError):
        bernoulli_sample(1.5, rng)
    with pytest.raises(ValueError):
        bernoulli_sample(np.array([0.5, -0.1]), rng)


def test_gaussian_log_prob_matches_scipy():
    mean, std = np.array([0.5, -1.0]), np.array([0.3, 2.0])
    d = DiagGaussian.from_arrays(mean, std)
    x, log_prob = gaussian_sample(d, Rng(14), n=6)
    expected = multivariate_normal(mean=mean, cov=np.diag(std**2)).logpdf(x.value)
    assert np.allclose(log_prob.value, expected, atol=1e-12)
    assert np.allclose(d.log_density(x.value), expected, atol=1e-12)
    assert d.entropy().item() == pytest.approx(multivariate_normal(mean=mean, cov=np.diag(std**2)).entropy())


def test_gaussian_sample_single_point_and_explicit_noise():
    d = DiagGaussian.from_arrays([1.0, 2.0], [2.0, 3.0])
    x, _ = gaussian_sample(d, Rng(0))
    assert x.shape == (2,)
    x, log_prob = gaussian_sample(d, Rng(0), eps=np.array([1.0, -1.0]))
    assert np.allclose(x.value, [3.0, -1.0])
    assert log_prob.item() == pytest.approx(-1.0 - math.log(6.0) - math.log(2 * math.pi))


def test_standard_normal_log_prob():
    x = Tensor(np.zeros((3, 2)))
    assert np.allclose(standard_normal_log_prob(x).value, -math.log(2 * math.pi))


def test_diag_gaussian_validation():
    with pytest.raises(ValueError):
        DiagGaussian(Tensor(np.zeros(2)), Tensor(np.zeros(3)))
    with pytest.raises(ValueError):
        DiagGaussian(Tensor(np.zeros(1)), Tensor(np.array([np.inf])))


def test_discrete_proposal():
    proposal = DiscreteProposal([[0.0], [1.0], [2.0]], [0.25, 0.75, 0.0])
    draws = proposal.sample(Rng(15), 20_000).value[:, 0]
    assert set(np.unique(draws)) <= {0.0, 1.0}
    assert abs(np.mean(draws == 1.0) - 0.75) < 0.015
    assert np.allclose(proposal.log_density(np.array([[0.0], [1.0]])), np.log([0.25, 0.75]))
    with pytest.raises(ValueError):
        proposal.index_of(np.array([[0.5]]))
    with pytest.raises(ValueError):
        DiscreteProposal([[0.0], [1.0]], [0.5, 0.6])
