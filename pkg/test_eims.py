"""
Tests for the energy-inspired models.

Finite-support toys give exact laws by enumeration; Gaussian setups check
the bound identities, the HIS map's structure and every ELBO gradient.
"""

import math

import numpy as np
import pytest

from autograd import ParamStore, Tensor, gradient
from eims import (
    HisModel,
    SnisModel,
    TrsModel,
    build_model,
    build_proposal,
    iwae_eval,
    log_mean_exp,
    snis_exact_density,
    trs_exact_density,
)
from models import ProposalSpec, TrainConfig
from networks import EnergyNet
from stats import LOG_2PI, DiagGaussian, DiscreteProposal, Rng


def affine_energy(u_a, u_b):
    """Energy taking u_a at x = 0 and u_b at x = 1."""
    return lambda x: u_a + (u_b - u_a) * x[:, 0]


def two_point_proposal():
    return DiscreteProposal([[0.0], [1.0]], [0.5, 0.5])


def logit(p):
    return math.log(p / (1.0 - p))


def randomized_model(kind):
    """A model with non-trivial energy, momentum network and trainable proposal."""
    store = ParamStore()
    config = TrainConfig(
        model=kind, k=6, t=3, inner_samples=8, proposal=ProposalSpec(mean=0.1, std=1.3, trainable=True)
    )
    model = build_model(config, store, Rng(40))
    rng = Rng(41)
    for name in store.names():
        if name.endswith(".w2") or name == "his.temp_raw":
            store.set_value(name, 0.3 * rng.normal(store[name].shape))
    if kind == "trs":
        store.set_value("trs.zhat_logit", np.array(0.3))
    return model, store


def data(n=4, seed=43):
    return 0.8 * Rng(seed).normal((n, 2))


# Self-normalized importance sampling

def test_snis_exact_density_by_enumeration():
    model = SnisModel(two_point_proposal(), affine_energy(0.0, -math.log(3.0)), ParamStore(), k=2)
    assert snis_exact_density(model, 0) == pytest.approx(3 / 8, abs=1e-12)
    assert snis_exact_density(model, 1) == pytest.approx(5 / 8, abs=1e-12)


def test_snis_sampler_matches_exact_law():
    model = SnisModel(two_point_proposal(), affine_energy(0.0, -math.log(3.0)), ParamStore(), k=2)
    draws = model.sample(Rng(31), 40_000)
    assert np.mean(draws[:, 0] == 0.0) == pytest.approx(3 / 8, abs=0.015)


def test_snis_weights_are_unbiased_and_bound_is_exact_in_expectation():
    model = SnisModel(two_point_proposal(), affine_energy(0.0, -math.log(3.0)), ParamStore(), k=2)
    log_w = model.log_weights(np.array([[0.0]]), 20_000, Rng(32))
    # companion A gives w = 1/2, companion B gives w = 1/4
    assert np.mean(log_w) == pytest.approx(0.5 * math.log(0.5) + 0.5 * math.log(0.25), abs=0.01)
    assert iwae_eval(model, np.array([0.0]), 20_000, Rng(33)).value == pytest.approx(math.log(3 / 8), abs=0.02)


def test_snis_with_zero_energy_is_the_proposal():
    store = ParamStore()
    model = build_model(TrainConfig(model="snis", k=16), store, Rng(0))
    x = data()
    assert np.allclose(model.elbo(Tensor(x), Rng(1)).value, model.proposal.log_density(x), atol=1e-12)


def test_snis_single_candidate_is_the_proposal():
    model, _ = randomized_model("snis")
    model.k = 1
    x = data()
    assert np.allclose(model.elbo(Tensor(x), Rng(1)).value, model.proposal.log_density(x), atol=1e-12)
    assert np.allclose(model.log_weights(x, 3, Rng(1)), model.proposal.log_density(x)[None, :], atol=1e-12)


def test_snis_enumeration_limits():
    with pytest.raises(ValueError):
        snis_exact_density(SnisModel(DiagGaussian.standard(1), affine_energy(0.0, 0.0), ParamStore(), k=2), 0)
    with pytest.raises(ValueError):
        snis_exact_density(SnisModel(two_point_proposal(), affine_energy(0.0, 0.0), ParamStore(), k=20), 0)
    with pytest.raises(ValueError):
        SnisModel(two_point_proposal(), affine_energy(0.0, 0.0), ParamStore(), k=0)


# Truncated rejection sampling

def trs_toy(t=3):
    # acceptance σ(−U) is 0.7 at x = 0 and 0.4 at x = 1
    energy = affine_energy(-logit(0.7), -logit(0.4))
    return TrsModel(two_point_proposal(), energy, ParamStore(), t=t, inner_samples=16)


def trs_closed_form(t, accept, probs=(0.5, 0.5)):
    reject = 1.0 - sum(p * a for p, a in zip(probs, accept))
    return [
        sum(reject ** (i - 1) * p * a for i in range(1, t)) + reject ** (t - 1) * p
        for p, a in zip(probs, accept)
    ]


def test_trs_exact_density_matches_closed_form():
    for t in (1, 2, 3, 5):
        model = trs_toy(t)
        expected = trs_closed_form(t, (0.7, 0.4))
        assert trs_exact_density(model, 0) == pytest.approx(expected[0], abs=1e-12)
        assert trs_exact_density(model, 1) == pytest.approx(expected[1], abs=1e-12)
    assert trs_closed_form(3, (0.7, 0.4))[0] == pytest.approx(0.60875)


def test_trs_sampler_matches_exact_law():
    model = trs_toy()
    draws, steps = model.sample_with_index(Rng(34), 40_000)
    assert np.mean(draws[:, 0] == 0.0) == pytest.approx(0.60875, abs=0.015)
    assert steps.min() >= 1 and steps.max() <= 3


def test_trs_importance_weights_are_unbiased():
    model = trs_toy()
    estimate = iwae_eval(model, np.array([0.0]), 20_000, Rng(35))
    assert estimate.value == pytest.approx(math.log(0.60875), abs=0.02)


def test_trs_bound_is_tight_for_constant_energy():
    """With U ≡ c and Ẑ = σ(−c), q(i | x) is the exact posterior and the bound is log π(x)."""
    store = ParamStore()
    model = TrsModel(DiagGaussian.standard(2), lambda x: 0.0 * x[:, 0] + 0.7, store, t=5, inner_samples=8)
    store.set_value("trs.zhat_logit", np.array(-0.7))
    x = data()
    assert np.allclose(model.elbo(Tensor(x), Rng(2)).value, model.proposal.log_density(x), atol=1e-10)


def test_trs_without_rejections_is_the_proposal():
    store = ParamStore()
    energy = EnergyNet(store, Rng(3))
    store.set_value("energy.w2", Rng(4).normal((20, 1)))
    model = TrsModel(DiagGaussian.standard(2), energy, store, t=1)
    x = data()
    assert np.allclose(model.elbo(Tensor(x), Rng(5)).value, model.proposal.log_density(x), atol=1e-12)


def test_trs_validation():
    with pytest.raises(ValueError):
        TrsModel(two_point_proposal(), affine_energy(0.0, 0.0), ParamStore(), t=0)
    with pytest.raises(ValueError):
        trs_exact_density(TrsModel(DiagGaussian.standard(1), affine_energy(0.0, 0.0), ParamStore(), t=2), 0)


# Hamiltonian importance sampling

def his_model(t=4, energy=None):
    store = ParamStore()
    net = EnergyNet(store, Rng(1))
    store.set_value("energy.w2", 0.5 * Rng(2).normal((20, 1)))
    model = HisModel(DiagGaussian.standard(2), energy or net, store, t=t, rng=Rng(3))
    store.set_value("his.temp_raw", 0.3 * Rng(4).normal(t + 1))
    return model, store, net


def test_his_inverse_undoes_forward():
    model, _, _ = his_model()
    x0, rho0 = Rng(5).normal((5, 2)), Rng(6).normal((5, 2))
    x_t, rho_t = model.forward(Tensor(x0), Tensor(rho0))
    x_back, rho_back = model.inverse(x_t, rho_t)
    assert np.allclose(x_back.value, x0, atol=1e-10)
    assert np.allclose(rho_back.value, rho0, atol=1e-10)


def test_his_map_preserves_volume():
    model, _, _ = his_model()
    assert np.prod(model.alphas().value) == pytest.approx(1.0, abs=1e-12)

    def flow(z):
        x_t, rho_t = model.forward(Tensor(z[None, :2]), Tensor(z[None, 2:]))
        return np.concatenate([x_t.value[0], rho_t.value[0]])

    z0 = np.array([0.3, -0.2, 0.5, 1.1])
    h = 1e-5
    jacobian = np.stack(
        [(flow(z0 + h * e) - flow(z0 - h * e)) / (2 * h) for e in np.eye(4)], axis=1
    )
    assert np.linalg.det(jacobian) == pytest.approx(1.0, abs=1e-6)


def test_his_with_frozen_dynamics_is_the_proposal():
    model, store, _ = his_model()
    store.set_value("his.log_eps", np.full(2, -50.0))
    store.set_value("his.temp_raw", np.zeros(5))
    x = data()
    assert np.allclose(model.elbo(Tensor(x), Rng(7)).value, model.proposal.log_density(x), atol=1e-9)


def test_his_log_ratio_closed_form():
    """One leapfrog step on U(x) = ‖x‖²/2 with the initial step size and q = N(0, I)."""
    store = ParamStore()
    model = HisModel(DiagGaussian.standard(2), lambda x: 0.5 * (x * x).sum(axis=1), store, t=1, rng=Rng(8))
    x = data(3)
    noise = Rng(9).normal((3, 2))

    rho = noise + 0.05 * x
    x0 = x - 0.1 * rho
    rho0 = rho + 0.05 * x0

    def log_normal(v):
        return -0.5 * np.sum(v * v, axis=1) - LOG_2PI

    expected = log_normal(x0) + log_normal(rho0) - log_normal(noise)
    assert np.allclose(model.log_ratio(Tensor(x), noise).value, expected, atol=1e-12)


def test_his_explicit_and_taped_energy_gradients_agree():
    explicit, _, net = his_model()
    taped = HisModel(explicit.proposal, lambda x: net(x), explicit.store, t=explicit.t, rng=Rng(3), prefix="his2")
    for name in ("log_eps", "temp_raw"):
        explicit.store.set_value(f"his2.{name}", explicit.store[f"his.{name}"].value)
    x = data()
    assert np.allclose(explicit.elbo(Tensor(x), Rng(10)).value, taped.elbo(Tensor(x), Rng(10)).value, atol=1e-10)


def test_his_sampling_is_reproducible():
    model, _, _ = his_model()
    first = model.sample(Rng(11), 100)
    assert first.shape == (100, 2)
    assert np.array_equal(first, model.sample(Rng(11), 100))
    with pytest.raises(ValueError):
        HisModel(DiagGaussian.standard(2), lambda x: x[:, 0], ParamStore(), t=0, rng=Rng(0))


# Shared machinery

@pytest.mark.parametrize("kind", ["snis", "trs", "his"])
def test_elbo_gradients_match_finite_differences(kind):
    model, store = randomized_model(kind)
    x = Tensor(data())

    def objective():
        return model.elbo(x, Rng(42)).mean()

    gradient(objective(), store)
    h = 1e-6
    for name in store.names():
        base = store[name].value.copy()
        analytic = store.grad(name)
        for index in list(np.ndindex(base.shape))[:4]:
            plus, minus = base.copy(), base.copy()
            plus[index] += h
            minus[index] -= h
            store.set_value(name, plus)
            f_plus = objective().item()
            store.set_value(name, minus)
            f_minus = objective().item()
            store.set_value(name, base)
            numeric = (f_plus - f_minus) / (2 * h)
            assert analytic[index] == pytest.approx(numeric, rel=1e-4, abs=1e-6), f"{name}{index}"


@pytest.mark.parametrize("kind", ["snis", "his"])
def test_single_sample_iwae_is_the_elbo(kind):
    model, _ = randomized_model(kind)
    point = data(1)
    elbo = model.elbo(Tensor(point), Rng(50)).value[0]
    assert iwae_eval(model, point[0], 1, Rng(50)).value == pytest.approx(elbo, abs=1e-10)


@pytest.mark.parametrize("kind", ["snis", "trs", "his"])
def test_log_weights_shape_and_finiteness(kind):
    model, _ = randomized_model(kind)
    log_w = model.log_weights(data(3), 7, Rng(51), chunk=3)
    assert log_w.shape == (7, 3)
    assert np.all(np.isfinite(log_w))
    assert model.sample(Rng(52), 10).shape == (10, 2)
    assert model.describe()["kind"] == kind


def test_log_mean_exp():
    values, stderrs = log_mean_exp(np.log(np.array([[1.0, 2.0], [3.0, 2.0]])))
    assert np.allclose(values, [math.log(2.0), math.log(2.0)])
    assert stderrs[1] == pytest.approx(0.0, abs=1e-15)
    assert stderrs[0] > 0

    values, stderrs = log_mean_exp(np.array([[0.5, -1.0]]))
    assert np.allclose(values, [0.5, -1.0])
    assert np.all(stderrs == 0.0)


def test_iwae_eval_needs_samples():
    model, _ = randomized_model("snis")
    with pytest.raises(ValueError):
        iwae_eval(model, data(1)[0], 0, Rng(0))


def test_build_proposal():
    store = ParamStore()
    fixed = build_proposal(ProposalSpec(mean=0.5, std=2.0, trainable=False), store)
    assert len(store) == 0
    assert np.allclose(fixed.std, 2.0)
    trainable = build_proposal(ProposalSpec(mean=0.5, std=2.0, trainable=True), store)
    assert store.names() == ["proposal.mean", "proposal.log_std"]
    assert np.allclose(trainable.mean.value, 0.5)
