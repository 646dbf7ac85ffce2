"""Noisy screening: decide privately whether a query needs the private models.

A tiny amount of private signal (weight ``lambda_screen``) is mixed into the
public distribution, restricted to the public model's top-k tokens, perturbed
with Gaussian noise and compared with the truncated public distribution. If the
divergence exceeds the threshold, the query is answered by the public model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .divergence import DistributionError, _renyi, _renyi_sym, check_dist, check_order

CLAMP_FLOOR = 1e-12


@dataclass(frozen=True)
class ScreeningConfig:
    lambda_screen: float
    sigma: float
    threshold: float
    top_k: int
    alpha: float
    symmetric: bool = False  # compare with D_sym instead of one-directional D

    def __post_init__(self):
        check_order(self.alpha)
        if not 0 < self.lambda_screen <= 1:
            raise ValueError(f"lambda_screen must be in (0, 1], got {self.lambda_screen}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if int(self.top_k) != self.top_k or self.top_k < 2:
            raise ValueError(f"top_k must be an integer >= 2, got {self.top_k}")
        if math.isnan(self.threshold):
            raise ValueError("threshold must not be NaN")


@dataclass(frozen=True)
class ScreeningVerdict:
    passed: bool
    noisy_divergence: float
    eps_cost: float
    rng_seed_used: int | None


def screening_eps(lambda_screen: float, n: int, sigma: float, alpha: float) -> float:
    """RDP cost of one screening call: (lambda / (n * sigma))**2 * alpha.

    The leave-one-out L2 sensitivity of the screening mixture is
    ``lambda * sqrt(2) / n``; plugging it into the Gaussian mechanism's
    ``alpha * Delta**2 / (2 sigma**2)`` gives this value.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return (lambda_screen / (n * sigma)) ** 2 * alpha


def screening_mixture(private_dists, p_public: np.ndarray, lambda_screen: float) -> np.ndarray:
    """(1/N) sum_i [lambda p_i + (1 - lambda) p_0]."""
    stacked = np.asarray(private_dists, dtype=np.float64)
    # written as an offset from p_0 so identical members reproduce p_0 bit-exactly
    return p_public + lambda_screen * (stacked - p_public).mean(axis=0)


def top_k_indices(p: np.ndarray, k: int) -> np.ndarray:
    # stable sort on -p keeps the lowest id first among equal probabilities
    return np.argsort(-p, kind="stable")[:k]


def _resolve_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = int(rng)
    return np.random.default_rng(seed), seed


def screen(private_dists, p_public, cfg: ScreeningConfig, rng, *, add_noise: bool = True) -> ScreeningVerdict:
    """Run the noisy screening test for one query.

    ``rng`` is a numpy ``Generator`` or an integer seed (recorded in the
    verdict). ``add_noise=False`` is a test hook that skips the Gaussian
    perturbation; the reported privacy cost is unchanged.
    """
    n = len(private_dists)
    if n == 0:
        raise ValueError("screening needs at least one private distribution")
    p0 = check_dist(p_public, "p_public")
    members = [check_dist(p, f"private_dists[{i}]") for i, p in enumerate(private_dists)]
    if any(m.shape != p0.shape for m in members):
        raise DistributionError("private and public distributions differ in vocabulary size")
    if cfg.top_k > p0.size:
        raise ValueError(f"top_k={cfg.top_k} exceeds vocabulary size {p0.size}")

    gen, seed = _resolve_rng(rng)
    eps = screening_eps(cfg.lambda_screen, n, cfg.sigma, cfg.alpha)

    mixture = screening_mixture(members, p0, cfg.lambda_screen)
    keep = top_k_indices(p0, cfg.top_k)
    noisy = mixture[keep].copy()
    if add_noise:
        noisy += gen.normal(0.0, cfg.sigma, size=keep.size)
    noisy = np.maximum(noisy, CLAMP_FLOOR)
    public_k = p0[keep]

    noisy_sum, public_sum = noisy.sum(), public_k.sum()
    if not (noisy_sum > 0 and public_sum > 0):
        return ScreeningVerdict(False, math.inf, eps, seed)
    noisy = noisy / noisy_sum
    public_k = public_k / public_sum

    if cfg.symmetric:
        div = _renyi_sym(noisy, public_k, cfg.alpha)
    else:
        div = _renyi(noisy, public_k, cfg.alpha)
    return ScreeningVerdict(bool(div <= cfg.threshold), div, eps, seed)
