"""Diagonal-Gaussian action-sequence policy and its mirror-descent geometry.

A policy is a diagonal Gaussian over a (action_dim, horizon) grid of
pre-squash actions.  Action sequences are plain float arrays of shape
(action_dim, horizon); batches stack them along a leading axis.  All
optimization happens in pre-squash space; costs are evaluated on squashed
actions, which keeps the Gaussian algebra exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_FLOOR = 1e-6

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PolicyParams:
    """Mean and scale of a diagonal Gaussian over (action_dim, horizon)."""

    mu: np.ndarray
    sigma: np.ndarray
    sigma_floor: float = SIGMA_FLOOR

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if mu.shape != sigma.shape:
            raise ValueError(f"mu shape {mu.shape} != sigma shape {sigma.shape}")
        if mu.ndim != 2 or mu.shape[0] < 1 or mu.shape[1] < 1:
            raise ValueError(f"expected 2-D (action_dim, horizon) arrays, got {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        if not np.all(np.isfinite(sigma)) or np.any(sigma < self.sigma_floor):
            raise ValueError(f"sigma must be finite and >= {self.sigma_floor}")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def action_dim(self) -> int:
        return self.mu.shape[0]

    @property
    def horizon(self) -> int:
        return self.mu.shape[1]

    def floored(self, sigma_floor: float | None = None) -> "PolicyParams":
        """Copy with sigma clamped from below."""
        floor = self.sigma_floor if sigma_floor is None else sigma_floor
        return PolicyParams(self.mu, np.maximum(self.sigma, floor), sigma_floor=floor)


def standard_prior(action_dim: int, horizon: int) -> PolicyParams:
    """Zero-mean, unit-scale prior in pre-squash space."""
    shape = (action_dim, horizon)
    return PolicyParams(np.zeros(shape), np.ones(shape))


@dataclass(frozen=True)
class MirrorPoint:
    """Image of PolicyParams in the mirror space anchored at a reference policy."""

    z_mu: np.ndarray
    z_sigma: np.ndarray
    reference: PolicyParams

    def __post_init__(self):
        z_mu = np.asarray(self.z_mu, dtype=float)
        z_sigma = np.asarray(self.z_sigma, dtype=float)
        if z_mu.shape != self.reference.mu.shape or z_sigma.shape != self.reference.mu.shape:
            raise ValueError("mirror point shape does not match reference")
        if not (np.all(np.isfinite(z_mu)) and np.all(np.isfinite(z_sigma))):
            raise ValueError("mirror point entries must be finite")
        object.__setattr__(self, "z_mu", z_mu)
        object.__setattr__(self, "z_sigma", z_sigma)


def sample_batch(params: PolicyParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` pre-squash action sequences, shape (count, A, H)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    noise = rng.standard_normal((count,) + params.mu.shape)
    return params.mu + params.sigma * noise


def squash(u_raw: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Map pre-squash actions into the open interval (low, high) per action dim.

    tanh-based affine map: odd-symmetric about the bound midpoint, so the
    (0, I) prior is centered on the middle of the action range.  Bounds are
    per-action-dim arrays of shape (A,), broadcast over the horizon axis.
    """
    u_raw = np.asarray(u_raw, dtype=float)
    if not np.all(np.isfinite(u_raw)):
        raise ValueError("squash input must be finite")
    low = np.asarray(low, dtype=float).reshape(-1, 1)
    high = np.asarray(high, dtype=float).reshape(-1, 1)
    if np.any(low >= high):
        raise ValueError("action bounds require low < high per dimension")
    mid = 0.5 * (low + high)
    half = 0.5 * (high - low)
    return mid + half * np.tanh(u_raw)


def log_density(params: PolicyParams, u_raw: np.ndarray) -> np.ndarray:
    """Joint Gaussian log-density over all (A, H) entries, in pre-squash space.

    Accepts a single sequence (A, H) or a batch (..., A, H); returns a scalar
    or the matching batch of scalars.  Computed as a sum of per-entry log
    terms so high-dimensional joints never underflow.
    """
    u_raw = np.asarray(u_raw, dtype=float)
    z = (u_raw - params.mu) / params.sigma
    per_entry = -0.5 * LOG_2PI - np.log(params.sigma) - 0.5 * z * z
    return per_entry.sum(axis=(-2, -1))


def kl_divergence(theta: PolicyParams, theta_i: PolicyParams) -> float:
    """Closed-form KL( N(theta) || N(theta_i) ) for diagonal Gaussians."""
    if theta.mu.shape != theta_i.mu.shape:
        raise ValueError("parameter shapes must match")
    var = theta.sigma**2
    var_i = theta_i.sigma**2
    terms = np.log(var_i / var) + var / var_i + (theta_i.mu - theta.mu) ** 2 / var_i - 1.0
    return float(0.5 * terms.sum())


def mirror_map(theta: PolicyParams, theta_i: PolicyParams) -> MirrorPoint:
    """Map theta into the mirror space defined by the KL geometry at theta_i."""
    if theta.mu.shape != theta_i.mu.shape:
        raise ValueError("parameter shapes must match")
    var_i = theta_i.sigma**2
    z_mu = theta.mu / var_i
    z_sigma = theta.sigma / var_i - 1.0 / theta.sigma
    return MirrorPoint(z_mu, z_sigma, theta_i)


def mirror_inverse(z: MirrorPoint) -> PolicyParams:
    """Invert the mirror map back to policy parameters; sigma is always > 0.

    For z_sigma < 0 the textbook quadratic-root form cancels catastrophically,
    so the conjugate form 2*sigma_i / (sqrt(...) - sigma_i*z) is used there.
    np.hypot keeps sqrt(sigma_i^2 z^2 + 4) from overflowing for large |z|.
    """
    ref = z.reference
    var_i = ref.sigma**2
    mu = var_i * z.z_mu
    sz = ref.sigma * z.z_sigma
    root = np.hypot(sz, 2.0)  # sqrt(sigma_i^2 z_sigma^2 + 4)
    # root - sz underflows to 0 for huge positive z_sigma; that branch is
    # discarded by the where, so silence the spurious division warning
    with np.errstate(divide="ignore"):
        sigma = np.where(
            z.z_sigma >= 0.0,
            0.5 * (var_i * z.z_sigma + ref.sigma * root),
            2.0 * ref.sigma / (root - sz),
        )
    return PolicyParams(mu, np.maximum(sigma, ref.sigma_floor), sigma_floor=ref.sigma_floor)
