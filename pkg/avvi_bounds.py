"""
Energy-Inspired Models - Multi-Sample Bound Zoo

Multi-sample variational bounds on Gaussian models with closed-form
answers: IWAE, the auxiliary-variable bound with an SNIS variational
family (per-draw identical to IWAE), the semi-implicit multi-sample bound,
and the InfoNCE mutual-information bound. Every estimator takes explicit
draws so identities can be checked on shared randomness.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp
from scipy.stats import multivariate_normal, norm

from autograd import ParamStore, Tensor, gradient, logsumexp as tensor_logsumexp, matmul, sum_
from models import BoundRow, Estimate
from stats import LOG_2PI, DiagGaussian, Rng, categorical_sample
from trainer import AdamState, adam_step


logger = logging.getLogger(__name__)

Critic = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _estimate(values: np.ndarray) -> Estimate:
    n = len(values)
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(value=float(np.mean(values)), stderr=stderr, n=n)


@dataclass
class GaussianLinearModel:
    """p(z) = N(0, I_m), p(x | z) = N(Az + b, σ²I_n)."""

    A: np.ndarray
    b: np.ndarray
    obs_var: float

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.obs_var <= 0:
            raise ValueError(f"observation variance must be positive, got {self.obs_var}")
        if self.b.shape != (self.A.shape[0],):
            raise ValueError(f"b has shape {self.b.shape}, expected ({self.A.shape[0]},)")

    @property
    def latent_dim(self) -> int:
        return self.A.shape[1]

    @classmethod
    def random(cls, rng: Rng, n: int = 3, m: int = 2, obs_var: float = 0.5) -> "GaussianLinearModel":
        return cls(rng.normal((n, m)), rng.normal(n), obs_var)

    def sample(self, rng: Rng) -> np.ndarray:
        z = rng.normal(self.latent_dim)
        return self.A @ z + self.b + math.sqrt(self.obs_var) * rng.normal(len(self.b))

    def log_joint(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """log p(x, z) for latents stacked on the leading axes of z."""
        resid = x - (z @ self.A.T + self.b)
        n = len(self.b)
        log_lik = -0.5 * np.sum(resid * resid, axis=-1) / self.obs_var - 0.5 * n * (LOG_2PI + math.log(self.obs_var))
        log_prior = -0.5 * np.sum(z * z, axis=-1) - 0.5 * self.latent_dim * LOG_2PI
        return log_prior + log_lik


def exact_log_marginal(g: GaussianLinearModel, x: np.ndarray) -> float:
    """
    log N(x; b, AAᵀ + σ²I) via a Cholesky factorization.

    Raises:
        ValueError: If the covariance is not positive definite
    """
    cov = g.A @ g.A.T + g.obs_var * np.eye(len(g.b))
    try:
        factor = cho_factor(cov, lower=True)
    except LinAlgError as e:
        raise ValueError(f"marginal covariance is not positive definite: {e}") from e
    resid = np.asarray(x, dtype=np.float64) - g.b
    log_det = 2.0 * np.sum(np.log(np.diag(factor[0])))
    quad = float(resid @ cho_solve(factor, resid))
    return -0.5 * (quad + log_det + len(g.b) * LOG_2PI)


def exact_posterior(g: GaussianLinearModel, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of p(z | x)."""
    precision = np.eye(g.latent_dim) + g.A.T @ g.A / g.obs_var
    factor = cho_factor(precision, lower=True)
    cov = cho_solve(factor, np.eye(g.latent_dim))
    mean = cho_solve(factor, g.A.T @ (np.asarray(x) - g.b) / g.obs_var)
    return mean, cov


def diag_posterior(g: GaussianLinearModel, x: np.ndarray) -> DiagGaussian:
    """
    p(z | x) as a DiagGaussian.

    Raises:
        ValueError: If the posterior covariance is not diagonal (AᵀA not diagonal)
    """
    mean, cov = exact_posterior(g, x)
    off_diagonal = cov - np.diag(np.diag(cov))
    if np.max(np.abs(off_diagonal)) > 1e-12 * np.max(np.abs(cov)):
        raise ValueError("posterior is correlated; use a model with orthogonal columns of A")
    return DiagGaussian.from_arrays(mean, np.sqrt(np.diag(cov)))


def _draw(q: DiagGaussian, rng: Rng, n_outer: int, k: int) -> np.ndarray:
    return q.mean.value + q.std * rng.normal((n_outer, k, q.dim))


def iwae_estimates(g: GaussianLinearModel, x: np.ndarray, q: DiagGaussian, z: np.ndarray) -> np.ndarray:
    """
    log (1/K) Σ_k p(x, z_k) / q(z_k) for draws z of shape (R, K, m).

    Returns:
        One estimate per realization, shape (R,)
    """
    log_w = g.log_joint(x, z) - q.log_density(z)
    return logsumexp(log_w, axis=1) - math.log(z.shape[1])


def iwae_bound(g: GaussianLinearModel, x: np.ndarray, q: DiagGaussian, k: int, n_outer: int, rng: Rng) -> Estimate:
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    return _estimate(iwae_estimates(g, x, q, _draw(q, rng, n_outer, k)))


def avvi_snis_estimates(
    g: GaussianLinearModel, x: np.ndarray, q: DiagGaussian, z: np.ndarray, index: np.ndarray
) -> np.ndarray:
    """
    Auxiliary-variable bound with an SNIS variational family, term by term.

    The SNIS model uses proposal q and energy U = log q − log p(x, ·), so its
    weights are w_k = p(x, z_k)/q(z_k). The selected latent is z_i; the
    auxiliary variables are the other candidates and the index, with reverse
    model r = (1/K) ∏_{j≠i} q(z_j). Returns log p(x, z_i) + log r − log q(z_i, λ).
    """
    r_count, k, _ = z.shape
    rows = np.arange(r_count)
    log_q_all = q.log_density(z)
    log_w = g.log_joint(x, z) - log_q_all
    log_p_selected = g.log_joint(x, z[rows, index])
    log_q_selected = log_q_all[rows, index]
    log_r = -math.log(k) + (np.sum(log_q_all, axis=1) - log_q_selected)
    log_q_joint = np.sum(log_q_all, axis=1) + (log_w[rows, index] - logsumexp(log_w, axis=1))
    return log_p_selected + log_r - log_q_joint


def avvi_snis_bound(g: GaussianLinearModel, x: np.ndarray, q: DiagGaussian, k: int, n_outer: int, rng: Rng) -> Estimate:
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    z = _draw(q, rng, n_outer, k)
    log_w = g.log_joint(x, z) - q.log_density(z)
    index = categorical_sample(log_w, rng)
    return _estimate(avvi_snis_estimates(g, x, q, z, index))


@dataclass
class HierarchicalGaussianQ:
    """q(λ) = N(μ_λ, diag σ_λ²), q(z | λ) = N(Bλ + c, diag σ_z²)."""

    mu_lam: np.ndarray
    std_lam: np.ndarray
    B: np.ndarray
    c: np.ndarray
    std_z: np.ndarray

    def sample_lambda(self, rng: Rng, shape: Tuple[int, ...]) -> np.ndarray:
        return self.mu_lam + self.std_lam * rng.normal(shape + (len(self.mu_lam),))

    def sample_z(self, rng: Rng, lam: np.ndarray) -> np.ndarray:
        return lam @ self.B.T + self.c + self.std_z * rng.normal(lam.shape[:-1] + (len(self.c),))

    def log_q_z_given_lambda(self, z: np.ndarray, lam: np.ndarray) -> np.ndarray:
        return norm.logpdf(z, loc=lam @ self.B.T + self.c, scale=self.std_z).sum(axis=-1)

    def marginal(self) -> Tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of q(z)."""
        cov = self.B @ np.diag(self.std_lam**2) @ self.B.T + np.diag(self.std_z**2)
        return self.B @ self.mu_lam + self.c, cov

    def marginal_log_prob(self, z: np.ndarray) -> np.ndarray:
        mean, cov = self.marginal()
        return multivariate_normal(mean=mean, cov=cov).logpdf(z)


def sivi_estimates(
    g: GaussianLinearModel,
    x: np.ndarray,
    h: HierarchicalGaussianQ,
    z: np.ndarray,
    lam: np.ndarray,
    lam_extra: np.ndarray,
) -> np.ndarray:
    """
    log p(x, z) − log (1/K)(q(z | λ) + Σ_j q(z | λ_j)).

    Args:
        z: Latents drawn from q(z | lam), shape (R, m)
        lam: Mixing variables that produced z, shape (R, l)
        lam_extra: K − 1 further draws from q(λ) per realization, shape (R, K − 1, l)
    """
    own = h.log_q_z_given_lambda(z, lam)[:, None]
    others = h.log_q_z_given_lambda(z[:, None, :], lam_extra)
    log_mix = logsumexp(np.concatenate([own, others], axis=1), axis=1) - math.log(1 + lam_extra.shape[1])
    return g.log_joint(x, z) - log_mix


def sivi_bound(
    g: GaussianLinearModel, x: np.ndarray, h: HierarchicalGaussianQ, k: int, n_outer: int, rng: Rng
) -> Estimate:
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    lam = h.sample_lambda(rng, (n_outer,))
    z = h.sample_z(rng, lam)
    lam_extra = h.sample_lambda(rng, (n_outer, k - 1))
    return _estimate(sivi_estimates(g, x, h, z, lam, lam_extra))


@dataclass
class CorrelatedGaussianPair:
    """x ∼ N(0, I_d), y = ρx + √(1 − ρ²)·ε."""

    rho: float
    d: int = 1

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"correlation must lie in (-1, 1), got {self.rho}")

    def sample(self, rng: Rng, n: int) -> Tuple[np.ndarray, np.ndarray]:
        x = rng.normal((n, self.d))
        y = self.rho * x + math.sqrt(1.0 - self.rho**2) * rng.normal((n, self.d))
        return x, y

    def sample_x(self, rng: Rng, shape: Tuple[int, ...]) -> np.ndarray:
        return rng.normal(shape + (self.d,))


def true_mutual_information(pair: CorrelatedGaussianPair) -> float:
    return -0.5 * pair.d * math.log(1.0 - pair.rho**2)


def optimal_critic(pair: CorrelatedGaussianPair) -> Critic:
    """Energy U(x, y) = −log p(y | x)/p(y)."""
    cond_var = 1.0 - pair.rho**2

    def energy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        log_cond = norm.logpdf(y, loc=pair.rho * x, scale=math.sqrt(cond_var)).sum(axis=-1)
        log_marg = norm.logpdf(y).sum(axis=-1)
        return -(log_cond - log_marg)

    return energy


def constant_critic(value: float = 0.0) -> Critic:
    def energy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.full(np.broadcast_shapes(x.shape, y.shape)[:-1], value)

    return energy


def infonce_estimates(critic: Critic, x: np.ndarray, y: np.ndarray, negatives: np.ndarray) -> np.ndarray:
    """
    −U(x, y) + log K − log(Σ_j exp(−U(x_j, y)) + exp(−U(x, y))).

    Args:
        x, y: Positive pairs, shape (R, d)
        negatives: K − 1 draws of x per pair, shape (R, K − 1, d)
    """
    positive = -critic(x, y)
    negative = -critic(negatives, y[:, None, :])
    k = negatives.shape[1] + 1
    scores = np.concatenate([negative, positive[:, None]], axis=1)
    return (positive + math.log(k)) - logsumexp(scores, axis=1)


def infonce_mi_bound(pair: CorrelatedGaussianPair, critic: Critic, k: int, n_outer: int, rng: Rng) -> Estimate:
    """
    InfoNCE lower bound on I(X; Y); never exceeds log K.

    Raises:
        ValueError: If K < 2
    """
    if k < 2:
        raise ValueError(f"InfoNCE needs K >= 2, got {k}")
    x, y = pair.sample(rng, n_outer)
    negatives = pair.sample_x(rng, (n_outer, k - 1))
    return _estimate(infonce_estimates(critic, x, y, negatives))


def fit_bilinear_critic(
    pair: CorrelatedGaussianPair,
    k: int,
    steps: int,
    lr: float,
    rng: Rng,
) -> Tuple[Critic, Tuple[float, float]]:
    """
    Learn −U(x, y) = w·xᵀy + v·‖x‖² by maximizing in-batch InfoNCE with Adam.

    The optimum for a correlated Gaussian pair lies in this family:
    w = ρ/(1 − ρ²), v = −ρ²/(2(1 − ρ²)).

    Returns:
        (critic energy, (w, v))
    """
    store = ParamStore()
    w = store.add("critic.w", 0.0)
    v = store.add("critic.v", 0.0)
    state = AdamState()
    for step in range(steps):
        xs, ys = pair.sample(rng.fork(step), k)
        x, y = Tensor(xs), Tensor(ys)
        # scores[a, b] = −U(x_a, y_b); column b has one positive and K − 1 negatives
        scores = w * matmul(x, y.T) + v * sum_(x * x, axis=1).reshape(k, 1)
        diagonal = scores[np.arange(k), np.arange(k)]
        bound = (diagonal - tensor_logsumexp(scores, axis=0)).mean() + math.log(k)
        gradient(-bound, store)
        adam_step(store, state, lr)
    learned = (float(w.value), float(v.value))
    logger.info(f"Learned critic w={learned[0]:.4f}, v={learned[1]:.4f}")

    def energy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return -(learned[0] * np.sum(x * y, axis=-1) + learned[1] * np.sum(x * x, axis=-1))

    return energy, learned


def mismatched_proposal(g: GaussianLinearModel, x: np.ndarray, shift: float = 0.3, inflate: float = 1.5) -> DiagGaussian:
    """Diagonal Gaussian near the posterior but deliberately off."""
    mean, cov = exact_posterior(g, x)
    return DiagGaussian.from_arrays(mean + shift, inflate * np.sqrt(np.diag(cov)))


def default_hierarchical_q(g: GaussianLinearModel, x: np.ndarray) -> HierarchicalGaussianQ:
    """Semi-implicit family whose marginal is centred on the posterior."""
    mean, cov = exact_posterior(g, x)
    spread = np.sqrt(np.diag(cov))
    m = g.latent_dim
    return HierarchicalGaussianQ(
        mu_lam=np.zeros(m),
        std_lam=np.ones(m),
        B=np.diag(0.8 * spread),
        c=mean,
        std_z=0.8 * spread,
    )


def run_bound_zoo(rng: Rng, n_outer: int = 2000, critic_steps: int = 300) -> List[BoundRow]:
    """
    Every bound on fixed random instances, with its closed-form oracle.

    Returns:
        One row per (bound, K)
    """
    g = GaussianLinearModel.random(rng.fork(0))
    x = g.sample(rng.fork(1))
    log_px = exact_log_marginal(g, x)
    q = mismatched_proposal(g, x)
    h = default_hierarchical_q(g, x)
    pair = CorrelatedGaussianPair(rho=0.9, d=1)
    mi = true_mutual_information(pair)

    rows: List[BoundRow] = []

    def add(name: str, k: int, estimate: Estimate, oracle: float) -> None:
        rows.append(
            BoundRow(bound=name, k=k, estimate=estimate.value, se=estimate.stderr, oracle=oracle, gap=oracle - estimate.value)
        )

    for i, k in enumerate((1, 8, 64, 512)):
        add("iwae", k, iwae_bound(g, x, q, k, n_outer, rng.fork(2, i)), log_px)
        add("avvi_snis", k, avvi_snis_bound(g, x, q, k, n_outer, rng.fork(2, i)), log_px)
    for i, k in enumerate((1, 4, 16, 64)):
        add("sivi", k, sivi_bound(g, x, h, k, n_outer, rng.fork(3, i)), log_px)
    learned, _ = fit_bilinear_critic(pair, 128, critic_steps, 5e-2, rng.fork(5))
    for i, k in enumerate((2, 16, 128)):
        add("infonce_optimal", k, infonce_mi_bound(pair, optimal_critic(pair), k, n_outer, rng.fork(4, i)), mi)
        add("infonce_constant", k, infonce_mi_bound(pair, constant_critic(), k, n_outer, rng.fork(4, i)), mi)
        add("infonce_learned", k, infonce_mi_bound(pair, learned, k, n_outer, rng.fork(4, i)), mi)
    logger.info(f"Bound zoo: {len(rows)} estimates, exact log p(x) = {log_px:.4f}, MI = {mi:.4f}")
    return rows
