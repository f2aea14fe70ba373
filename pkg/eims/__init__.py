"""
Energy-inspired model implementations, one per approximate sampler.
"""

import numpy as np

from autograd import ParamStore, Tensor
from eims.base import BaseEim, iwae_eval, iwae_eval_batch, log_mean_exp
from eims.his import HisModel
from eims.snis import SnisModel, snis_exact_density
from eims.trs import TrsModel, trs_exact_density
from models import ProposalSpec, TrainConfig
from networks import EnergyNet
from stats import DiagGaussian, Rng


def build_proposal(spec: ProposalSpec, store: ParamStore, dim: int = 2) -> DiagGaussian:
    """N(mean, std²I); mean and log-std live in the store when trainable."""
    mean = np.full(dim, spec.mean)
    log_std = np.full(dim, np.log(spec.std))
    if spec.trainable:
        return DiagGaussian(store.add("proposal.mean", mean), store.add("proposal.log_std", log_std))
    return DiagGaussian(Tensor(mean), Tensor(log_std))


def build_model(config: TrainConfig, store: ParamStore, rng: Rng, dim: int = 2) -> BaseEim:
    """
    Construct a freshly initialized model from a run configuration.

    Args:
        config: Resolved run configuration
        store: Empty parameter store to register parameters in
        rng: Initialization stream

    Returns:
        TRS, SNIS or HIS model
    """
    proposal = build_proposal(config.proposal, store, dim)
    energy = EnergyNet(store, rng.fork(0), dim=dim)
    if config.model == "snis":
        return SnisModel(proposal, energy, store, k=config.k)
    if config.model == "trs":
        return TrsModel(proposal, energy, store, t=config.t, inner_samples=config.inner_samples)
    if config.model == "his":
        return HisModel(proposal, energy, store, t=config.t, rng=rng.fork(1))
    raise ValueError(f"Unknown model kind '{config.model}'")


__all__ = [
    "BaseEim",
    "HisModel",
    "SnisModel",
    "TrsModel",
    "build_model",
    "build_proposal",
    "iwae_eval",
    "iwae_eval_batch",
    "log_mean_exp",
    "snis_exact_density",
    "trs_exact_density",
]
