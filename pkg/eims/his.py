"""
Energy-Inspired Models - Hamiltonian Importance Sampling

Evolve (x₀, ρ₀) ∼ π × N(0, I) through T tempered leapfrog steps. The map
has unit Jacobian determinant, so log p(x₀, ρ₀) is available at the end
point and a variational q(ρ_T | x_T) gives a lower bound on log p(x_T).
"""

import math
from typing import Tuple

import numpy as np

from autograd import (
    NonFiniteError,
    ParamStore,
    Tensor,
    as_tensor,
    exp,
    input_gradient,
    mean,
    no_grad,
    sum_,
)
from eims.base import BaseEim, Energy
from networks import TanhMlp
from stats import LOG_2PI, Proposal, Rng, standard_normal_log_prob


class HisModel(BaseEim):
    """
    HIS model with learned step sizes, tempering schedule and momentum posterior.

    α_t = exp(a_t − mean(a)) so that ∏ α_t = 1 exactly.
    """

    kind = "his"

    def __init__(
        self,
        proposal: Proposal,
        energy: Energy,
        store: ParamStore,
        t: int,
        rng: Rng,
        hidden: Tuple[int, ...] = (20, 20),
        prefix: str = "his",
    ):
        if t < 1:
            raise ValueError(f"T must be at least 1, got {t}")
        super().__init__(proposal, energy, store)
        self.t = int(t)
        d = proposal.dim
        self.log_eps = store.add(f"{prefix}.log_eps", np.full(d, math.log(0.1)))
        self.temp_raw = store.add(f"{prefix}.temp_raw", np.zeros(self.t + 1))
        self.qnet = TanhMlp(store, f"{prefix}.qnet", (d, *hidden, 2 * d), rng, zero_last=True)

    def alphas(self) -> Tensor:
        return exp(self.temp_raw - mean(self.temp_raw))

    def step_sizes(self) -> Tensor:
        return exp(self.log_eps)

    def grad_energy(self, x: Tensor) -> Tensor:
        explicit = getattr(self.energy, "input_gradient", None)
        return explicit(x) if explicit is not None else input_gradient(self.energy, x)

    def _check_step(self, step: int, *values: Tensor) -> None:
        for value in values:
            if not np.all(np.isfinite(value.value)):
                raise NonFiniteError(f"HIS leapfrog step {step} produced a non-finite state", node=value)

    def forward(self, x0: Tensor, rho0: Tensor) -> Tuple[Tensor, Tensor]:
        """
        (x₀, ρ₀) → (x_T, ρ_T).

        ρ ← α₀ρ₀; then per step: half momentum kick, full position drift,
        half kick, scale by α_t.
        """
        alpha = self.alphas()
        eps = self.step_sizes()
        half = 0.5 * eps
        x = as_tensor(x0)
        rho = as_tensor(rho0) * alpha[0]
        for t in range(1, self.t + 1):
            rho = rho - half * self.grad_energy(x)
            x = x + eps * rho
            rho = alpha[t] * (rho - half * self.grad_energy(x))
            self._check_step(t, x, rho)
        return x, rho

    def inverse(self, x_t: Tensor, rho_t: Tensor) -> Tuple[Tensor, Tensor]:
        """(x_T, ρ_T) → (x₀, ρ₀), the exact algebraic inverse of forward."""
        alpha = self.alphas()
        eps = self.step_sizes()
        half = 0.5 * eps
        x = as_tensor(x_t)
        rho = as_tensor(rho_t)
        for t in range(self.t, 0, -1):
            rho = rho / alpha[t] + half * self.grad_energy(x)
            x = x - eps * rho
            rho = rho + half * self.grad_energy(x)
            self._check_step(t, x, rho)
        return x, rho / alpha[0]

    def momentum_posterior(self, x_t: Tensor) -> Tuple[Tensor, Tensor]:
        """(mean, log_std) of q(ρ_T | x_T)."""
        out = self.qnet(x_t)
        d = self.dim
        return out[:, :d], out[:, d:]

    def log_ratio(self, x_t: Tensor, noise: np.ndarray) -> Tensor:
        """
        log π(x₀) + log N(ρ₀; 0, I) − log q(ρ_T | x_T) for ρ_T = μ + σ ⊙ noise.
        """
        x_t = as_tensor(x_t)
        mu, log_std = self.momentum_posterior(x_t)
        rho_t = mu + exp(log_std) * noise
        log_q = -0.5 * np.sum(noise * noise, axis=1) - sum_(log_std, axis=1) - 0.5 * self.dim * LOG_2PI
        x0, rho0 = self.inverse(x_t, rho_t)
        return self.proposal.log_prob(x0) + standard_normal_log_prob(rho0) - log_q

    def elbo(self, x: Tensor, rng: Rng) -> Tensor:
        x = as_tensor(x)
        return self._checked(self.log_ratio(x, rng.normal(x.shape)))

    def _log_weights_chunk(self, x: np.ndarray, n: int, rng: Rng) -> np.ndarray:
        batch = x.shape[0]
        repeated = np.tile(x, (n, 1))
        with no_grad():
            values = self.log_ratio(Tensor(repeated), rng.normal(repeated.shape)).value
        return values.reshape(n, batch)

    def _sample_chunk(self, rng: Rng, n: int) -> np.ndarray:
        with no_grad():
            x0 = self.proposal.sample(rng, n)
            rho0 = Tensor(rng.normal((n, self.dim)))
            x_t, _ = self.forward(x0, rho0)
        return x_t.value
