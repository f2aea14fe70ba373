"""
Energy-Inspired Models - Self-Normalized Importance Sampling

Draw K proposals, resample one in proportion to exp(−U). The model's
log-likelihood has a tractable lower bound over the K − 1 companions.
"""

import itertools
import math
from typing import Tuple

import numpy as np

from autograd import ParamStore, Tensor, as_tensor, concatenate, logsumexp, no_grad
from eims.base import BaseEim, Energy
from stats import DiscreteProposal, Proposal, Rng, categorical_sample


class SnisModel(BaseEim):
    """SNIS model with K candidates per draw."""

    kind = "snis"

    def __init__(self, proposal: Proposal, energy: Energy, store: ParamStore, k: int):
        if k < 1:
            raise ValueError(f"K must be at least 1, got {k}")
        super().__init__(proposal, energy, store)
        self.k = int(k)

    def _energies(self, points: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.energy(Tensor(points)).value

    def sample_with_index(self, rng: Rng, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """n draws with the index of the selected candidate."""
        with no_grad():
            candidates = self.proposal.sample(rng, n * self.k).value
        logits = -self._energies(candidates).reshape(n, self.k)
        index = categorical_sample(logits, rng)
        chosen = candidates.reshape(n, self.k, self.dim)[np.arange(n), index]
        return chosen, index

    def _sample_chunk(self, rng: Rng, n: int) -> np.ndarray:
        return self.sample_with_index(rng, n)[0]

    def elbo(self, x: Tensor, rng: Rng) -> Tensor:
        """
        log π(x) − U(x) − logsumexp(−U(x_2..K), −U(x)) + log K per row.

        Each row gets its own K − 1 proposal draws. With U ≡ 0 the result is
        exactly log π(x).
        """
        x = as_tensor(x)
        batch = x.shape[0]
        log_pi = self.proposal.log_prob(x)
        if self.k == 1:
            return self._checked(log_pi)
        u_x = self.energy(x)
        companions = self.proposal.sample(rng, batch * (self.k - 1))
        u_companions = self.energy(companions).reshape(batch, self.k - 1)
        logits = concatenate([-u_companions, -u_x.reshape(batch, 1)], axis=1)
        bound = log_pi + (math.log(self.k) - logsumexp(logits, axis=1)) - u_x
        return self._checked(bound)

    def _log_weights_chunk(self, x: np.ndarray, n: int, rng: Rng) -> np.ndarray:
        # Companion draws are shared by every row; each row's ratio keeps its exact law.
        with no_grad():
            log_pi = self.proposal.log_prob(Tensor(x)).value
        if self.k == 1:
            return np.broadcast_to(log_pi, (n, x.shape[0])).copy()
        u_x = self._energies(x)
        with no_grad():
            companions = self.proposal.sample(rng, n * (self.k - 1)).value
        u_companions = self._energies(companions).reshape(n, self.k - 1)
        lse_companions = logsumexp(Tensor(-u_companions), axis=1).value
        lse = np.logaddexp(lse_companions[:, None], -u_x[None, :])
        return log_pi[None, :] + (math.log(self.k) - lse) - u_x[None, :]


def snis_exact_density(model: SnisModel, point: int) -> float:
    """
    p_SNIS of one support point by enumerating every (x_1..x_K, i).

    Args:
        model: SNIS model whose proposal is a DiscreteProposal
        point: Index of the support point

    Raises:
        ValueError: If the proposal is not discrete or there are more than 10⁶ configurations
    """
    proposal = model.proposal
    if not isinstance(proposal, DiscreteProposal):
        raise ValueError("exact SNIS density needs a DiscreteProposal")
    support = len(proposal.probs)
    if support ** model.k * model.k > 1_000_000:
        raise ValueError(f"{support}^{model.k} candidate sets is too many to enumerate")
    weights = np.exp(-model._energies(proposal.points))
    total = 0.0
    for combo in itertools.product(range(support), repeat=model.k):
        prob = float(np.prod(proposal.probs[list(combo)]))
        if prob == 0.0:
            continue
        w = weights[list(combo)]
        total += prob * float(np.sum(w[np.array(combo) == point]) / np.sum(w))
    return total
