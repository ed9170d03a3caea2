"""Denoising-diffusion machinery over latent vectors.

Covers the linear variance schedule, the single-shot forward (noising)
kernel, the noise-prediction loss, ancestral reverse steps and partial
reverse runs that stop at an intermediate index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError
from .nets import _uniform_init

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "forward_sample",
    "ReverseModel",
    "ddpm_loss",
    "reverse_step",
    "sample_to_step",
    "sample_latents",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step diffusion constants for i in [1, L].

    Arrays are 1-indexed through ``beta(i)``-style accessors; internally
    index 0 holds step 1. ``sigma2_posterior`` follows the convention
    alpha_bar at step 0 equals 0, which makes the first backward variance
    equal beta_1 * 1 / (1 - alpha_bar_1).
    """

    L: int
    betas: np.ndarray
    variance_mode: str = "posterior"
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)
    sigma2: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.shape != (self.L,):
            raise ConfigError(f"need {self.L} beta values, got {betas.shape}")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ConfigError("betas must lie strictly inside (0, 1)")
        if self.variance_mode not in ("posterior", "beta"):
            raise ConfigError(f"unknown variance mode {self.variance_mode!r}")
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        if self.variance_mode == "posterior":
            prev = np.concatenate([[0.0], alpha_bars[:-1]])
            sigma2 = betas * (1.0 - prev) / (1.0 - alpha_bars)
        else:
            sigma2 = betas.copy()
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        object.__setattr__(self, "sigma2", sigma2)

    def _check(self, i):
        if not 1 <= i <= self.L:
            raise ContractError(f"diffusion index {i} outside [1, {self.L}]")

    def beta(self, i):
        self._check(i)
        return self.betas[i - 1]

    def alpha(self, i):
        self._check(i)
        return self.alphas[i - 1]

    def alpha_bar(self, i):
        """Cumulative product; alpha_bar(0) is 1 (the no-noise boundary)."""
        if i == 0:
            return 1.0
        self._check(i)
        return self.alpha_bars[i - 1]

    def backward_sigma2(self, i):
        self._check(i)
        return self.sigma2[i - 1]


def make_schedule(L, beta_start=1e-4, beta_end=0.02,
                  variance_mode="posterior") -> NoiseSchedule:
    """Linear beta schedule over L steps."""
    if L < 1:
        raise ConfigError(f"need L >= 1, got {L}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]")
    betas = np.linspace(beta_start, beta_end, L)
    return NoiseSchedule(L=L, betas=betas, variance_mode=variance_mode)


def forward_sample(z0, i, schedule: NoiseSchedule, eps):
    """Closed-form draw z_i = sqrt(ab_i) z0 + sqrt(1 - ab_i) eps.

    ``i = 0`` is the identity (z0 unchanged); otherwise i must lie in
    [1, L].
    """
    z0 = np.asarray(z0, dtype=np.float64)
    if i == 0:
        return z0.copy()
    if not 1 <= i <= schedule.L:
        raise ContractError(f"diffusion index {i} outside [0, {schedule.L}]")
    ab = schedule.alpha_bar(i)
    eps = np.asarray(eps, dtype=np.float64)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def _timestep_embedding(i, dim, L):
    """Sinusoidal embedding of a diffusion index, scaled by the horizon."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = (i / L) * 1000.0 * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


class ReverseModel:
    """Feed-forward noise predictor eps_back(z_i, i) with a time embedding."""

    def __init__(self, latent_dim, hidden_dim, L, rng, emb_dim=16):
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.emb_dim = emb_dim
        self.L = L
        in_dim = latent_dim + emb_dim
        self.W1 = ad.parameter(_uniform_init(rng, hidden_dim, in_dim), "eps.W1")
        self.b1 = ad.parameter(np.zeros(hidden_dim), "eps.b1")
        self.W2 = ad.parameter(_uniform_init(rng, hidden_dim, hidden_dim), "eps.W2")
        self.b2 = ad.parameter(np.zeros(hidden_dim), "eps.b2")
        self.W3 = ad.parameter(_uniform_init(rng, latent_dim, hidden_dim), "eps.W3")
        self.b3 = ad.parameter(np.zeros(latent_dim), "eps.b3")
        # The reverse chain assumes a roughly standardized target, so
        # training may standardize the latent population and record the
        # statistics here; sampling inverts them. They are carried as
        # parameters so checkpoints persist them, but no loss touches
        # them, so the optimizer never updates them.
        self.z_mean = ad.parameter(np.zeros(latent_dim), "eps.z_mean")
        self.z_std = ad.parameter(np.ones(latent_dim), "eps.z_std")

    def params(self):
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3,
                self.z_mean, self.z_std]

    def normalize_latents(self, Z):
        """Map raw latents into the standardized space the chain runs in."""
        return (np.asarray(Z, dtype=np.float64) - self.z_mean.value) \
            / self.z_std.value

    def denormalize_latents(self, Z):
        """Map chain outputs back to raw latent space."""
        return np.asarray(Z, dtype=np.float64) * self.z_std.value \
            + self.z_mean.value

    def forward_node(self, z, i):
        """Graph-building forward pass for one latent vector."""
        emb = _timestep_embedding(i, self.emb_dim, self.L)
        x = ad.concat([z if isinstance(z, ad.Tensor) else ad.tensor(z),
                       ad.constant(emb)])
        h = ad.tanh(ad.affine(self.W1, x, self.b1))
        h = ad.tanh(ad.affine(self.W2, h, self.b2))
        return ad.affine(self.W3, h, self.b3)

    def predict(self, z, i):
        return self.predict_batch(np.asarray(z, dtype=np.float64)[None, :], i)[0]

    def predict_batch(self, Z, i):
        """Plain-numpy forward over a (n, latent_dim) batch at one index."""
        Z = np.asarray(Z, dtype=np.float64)
        emb = _timestep_embedding(i, self.emb_dim, self.L)
        X = np.concatenate([Z, np.broadcast_to(emb, (Z.shape[0], self.emb_dim))],
                           axis=1)
        H = np.tanh(X @ self.W1.value.T + self.b1.value)
        H = np.tanh(H @ self.W2.value.T + self.b2.value)
        return H @ self.W3.value.T + self.b3.value


def ddpm_loss(z0, schedule: NoiseSchedule, model: ReverseModel, i, eps):
    """Noise-prediction residual ||eps - eps_back(z_i, i)||^2 as a graph node."""
    if not 1 <= i <= schedule.L:
        raise ContractError(f"diffusion index {i} outside [1, {schedule.L}]")
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    ab = schedule.alpha_bar(i)
    zi = np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps
    pred = model.forward_node(zi, i)
    resid = ad.constant(eps) - pred
    return ad.ssum(resid * resid)


def reverse_step(z, i, model: ReverseModel, schedule: NoiseSchedule, eps):
    """One ancestral denoising step z_i -> z_{i-1}."""
    if not 1 <= i <= schedule.L:
        raise ContractError(f"diffusion index {i} outside [1, {schedule.L}]")
    z = np.asarray(z, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    E = eps[None, :] if single else eps
    pred = model.predict_batch(Z, i)
    beta = schedule.beta(i)
    mu = (Z - beta * pred / np.sqrt(1.0 - schedule.alpha_bar(i))) \
        / np.sqrt(schedule.alpha(i))
    out = mu + np.sqrt(schedule.backward_sigma2(i)) * E
    return out[0] if single else out


def sample_latents(model: ReverseModel, schedule: NoiseSchedule, stop_i, n, rng):
    """Batch of n latents obtained by running the reverse chain down to stop_i.

    ``stop_i = 0`` is full generation; ``stop_i = L`` returns the initial
    Gaussian draws (mapped through the model's latent statistics, which
    default to the identity).
    """
    if not 0 <= stop_i <= schedule.L:
        raise ContractError(f"stop index {stop_i} outside [0, {schedule.L}]")
    Z = rng.standard_normal((n, model.latent_dim))
    for i in range(schedule.L, stop_i, -1):
        eps = rng.standard_normal(Z.shape)
        Z = reverse_step(Z, i, model, schedule, eps)
    return model.denormalize_latents(Z)


def sample_to_step(model: ReverseModel, schedule: NoiseSchedule, stop_i, seed):
    """Single latent sampled by the reverse chain stopped at ``stop_i``."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) \
        else seed
    return sample_latents(model, schedule, stop_i, 1, rng)[0]
