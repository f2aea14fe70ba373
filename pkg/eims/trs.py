"""
Energy-Inspired Models - Truncated Rejection Sampling

Propose from π and accept with probability σ(−U(x)); the T-th proposal is
accepted unconditionally. The bound treats the acceptance step i and the
rejected draws as latent variables with a closed-form q(i | x).
"""

import itertools
from typing import Tuple

import numpy as np
from scipy.special import expit

from autograd import ParamStore, Tensor, as_tensor, exp, log_sigmoid, logsumexp, mean, no_grad, sum_
from eims.base import BaseEim, Energy
from stats import DiscreteProposal, Proposal, Rng, bernoulli_sample, categorical_sample


class TrsModel(BaseEim):
    """TRS model truncated at step T with learned normalizer estimate Ẑ = σ(zhat_logit)."""

    kind = "trs"

    def __init__(
        self,
        proposal: Proposal,
        energy: Energy,
        store: ParamStore,
        t: int,
        inner_samples: int = 64,
        prefix: str = "trs",
    ):
        if t < 1:
            raise ValueError(f"T must be at least 1, got {t}")
        if inner_samples < 1:
            raise ValueError(f"inner_samples must be at least 1, got {inner_samples}")
        super().__init__(proposal, energy, store)
        self.t = int(t)
        self.inner_samples = int(inner_samples)
        self.zhat_logit = store.add(f"{prefix}.zhat_logit", 0.0)

    @property
    def zhat(self) -> float:
        return float(expit(self.zhat_logit.value))

    def acceptance(self, points: np.ndarray) -> np.ndarray:
        """σ(−U(x)) for each row."""
        with no_grad():
            return expit(-self.energy(Tensor(points)).value)

    def sample_with_index(self, rng: Rng, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """n draws with the (1-based) step at which each was accepted."""
        out = np.zeros((n, self.dim))
        step = np.full(n, self.t)
        pending = np.arange(n)
        for t in range(1, self.t + 1):
            if pending.size == 0:
                break
            with no_grad():
                draws = self.proposal.sample(rng, pending.size).value
            if t == self.t:
                accepted = np.ones(pending.size, dtype=bool)
            else:
                accepted = bernoulli_sample(self.acceptance(draws), rng).astype(bool)
            out[pending[accepted]] = draws[accepted]
            step[pending[accepted]] = t
            pending = pending[~accepted]
        return out, step

    def _sample_chunk(self, rng: Rng, n: int) -> np.ndarray:
        return self.sample_with_index(rng, n)[0]

    def _log_q(self, log_accept_x: Tensor) -> Tuple[Tensor, np.ndarray, np.ndarray]:
        """log q(i | x) for i = 1..T, shape (B, T), plus the (i − 1) and δ_{i<T} constants."""
        batch = log_accept_x.shape[0]
        rejections = np.arange(self.t, dtype=np.float64)
        not_last = (np.arange(1, self.t + 1) < self.t).astype(np.float64)
        log_weights = rejections * log_sigmoid(-self.zhat_logit) + not_last * log_accept_x.reshape(batch, 1)
        return log_weights - logsumexp(log_weights, axis=1, keepdims=True), rejections, not_last

    def elbo(self, x: Tensor, rng: Rng) -> Tensor:
        """
        Bound summed exactly over the acceptance step i = 1..T.

        Term i is log π(x) + δ_{i<T}·log σ(−U(x)) + (i − 1)·E_π[log σ(U)] − log q(i | x);
        the expectation uses inner_samples proposal draws shared across the batch.
        """
        x = as_tensor(x)
        batch = x.shape[0]
        log_pi = self.proposal.log_prob(x)
        log_accept_x = log_sigmoid(-self.energy(x))
        log_q, rejections, not_last = self._log_q(log_accept_x)
        if self.t > 1:
            inner = self.proposal.sample(rng, self.inner_samples)
            log_reject = mean(log_sigmoid(self.energy(inner)))
        else:
            log_reject = Tensor(0.0)
        terms = (
            log_pi.reshape(batch, 1)
            + not_last * log_accept_x.reshape(batch, 1)
            + rejections * log_reject
            - log_q
        )
        bound = sum_(exp(log_q) * terms, axis=1)
        return self._checked(bound)

    def _log_weights_chunk(self, x: np.ndarray, n: int, rng: Rng) -> np.ndarray:
        # Rejected draws are shared by every row; each row samples its own step i.
        batch = x.shape[0]
        with no_grad():
            log_pi = self.proposal.log_prob(Tensor(x)).value
            log_accept_x = log_sigmoid(-self.energy(Tensor(x)))
            log_q, _, _ = self._log_q(log_accept_x)
        log_q = log_q.value
        step = categorical_sample(np.broadcast_to(log_q, (n, batch, self.t)), rng)
        if self.t > 1:
            with no_grad():
                rejected = self.proposal.sample(rng, n * (self.t - 1)).value
                log_reject = log_sigmoid(self.energy(Tensor(rejected))).value.reshape(n, self.t - 1)
            cumulative = np.concatenate([np.zeros((n, 1)), np.cumsum(log_reject, axis=1)], axis=1)
        else:
            cumulative = np.zeros((n, 1))
        not_last = (step < self.t - 1).astype(np.float64)
        return (
            log_pi[None, :]
            + not_last * log_accept_x.value[None, :]
            + np.take_along_axis(cumulative, step, axis=1)
            - np.take_along_axis(np.broadcast_to(log_q, (n, batch, self.t)), step[..., None], axis=2)[..., 0]
        )


def trs_exact_density(model: TrsModel, point: int) -> float:
    """
    p_TRS of one support point by enumerating every (x_1..x_T, b_1..b_{T−1}).

    Args:
        model: TRS model whose proposal is a DiscreteProposal
        point: Index of the support point

    Raises:
        ValueError: If the proposal is not discrete or there are more than 10⁶ configurations
    """
    proposal = model.proposal
    if not isinstance(proposal, DiscreteProposal):
        raise ValueError("exact TRS density needs a DiscreteProposal")
    support = len(proposal.probs)
    configurations = support ** model.t * 2 ** (model.t - 1)
    if configurations > 1_000_000:
        raise ValueError(f"{configurations} configurations is too many to enumerate")
    accept = model.acceptance(proposal.points)
    total = 0.0
    for draws in itertools.product(range(support), repeat=model.t):
        prob_draws = float(np.prod(proposal.probs[list(draws)]))
        if prob_draws == 0.0:
            continue
        for bits in itertools.product((0, 1), repeat=model.t - 1):
            decisions = bits + (1,)
            prob = prob_draws
            for t, b in enumerate(decisions[:-1]):
                prob *= accept[draws[t]] if b else 1.0 - accept[draws[t]]
            chosen = draws[decisions.index(1)]
            if chosen == point:
                total += prob
    return total
