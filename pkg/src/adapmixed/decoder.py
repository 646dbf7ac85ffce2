"""Per-query private decoding.

``decode_adaptive`` screens the query, and if it passes, projects every
ensemble member toward the public distribution, samples from their average
and charges the measured (data-dependent) leave-one-out divergence.
``decode_baseline`` is the fixed-budget variant: Poisson-subsampled members,
a radius chosen up front from the budget, and a constant charge per query.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .accountant import BaselineConfig, PrivacyLedger, data_dependent_loss, select_beta_subsampled
from .divergence import DEFAULT_CAP, DistributionError, check_dist, check_order
from .projection import DEFAULT_TOL, project_many
from .screening import ScreeningConfig, screen

ADAPTIVE = "adaptive"
BASELINE = "baseline"


@dataclass(frozen=True)
class DecodingConfig:
    alpha: float
    beta: float
    ensemble_size: int
    screening: ScreeningConfig
    delta: float = 1e-5
    mode: str = ADAPTIVE
    baseline: BaselineConfig | None = None
    seed: int = 0
    projection_tol: float = DEFAULT_TOL

    def __post_init__(self):
        check_order(self.alpha)
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.ensemble_size < 1:
            raise ValueError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.mode not in (ADAPTIVE, BASELINE):
            raise ValueError(f"mode must be {ADAPTIVE!r} or {BASELINE!r}, got {self.mode!r}")
        if self.mode == BASELINE and self.baseline is None:
            raise ValueError("mode 'baseline' needs a baseline config")
        if self.screening.alpha != self.alpha:
            raise ValueError("screening order differs from the decoding order")


@dataclass(frozen=True)
class QueryOutcome:
    query_index: int
    alpha: float
    token: int
    screened_out: bool
    eps_screen: float
    eps_decode: float
    lambdas: tuple[float, ...]
    output_dist_digest: str
    noisy_divergence: float = math.nan
    capped: bool = False
    dist: np.ndarray = field(default=None, repr=False, compare=False)


def dist_digest(dist: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(dist, dtype=np.float64).tobytes()).hexdigest()[:16]


def query_seed(seed: int, query_index: int) -> int:
    """Per-query seed, so any query can be recomputed without replaying the session."""
    return int(np.random.SeedSequence([seed, query_index]).generate_state(1, dtype=np.uint64)[0])


def _query_rngs(cfg: DecodingConfig, query_index: int, rng):
    if rng is not None:
        return rng, rng
    base = query_seed(cfg.seed, query_index)
    # screening gets an integer seed so the verdict can report it
    return base, np.random.default_rng([base, 1])


def sample_token(dist, rng) -> int:
    """Inverse-CDF draw with a single uniform variate."""
    p = np.asarray(dist, dtype=np.float64)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= p.size:
        idx = int(np.flatnonzero(p > 0)[-1])
    return idx


def _stack(private_dists, p_public: np.ndarray) -> np.ndarray:
    members = [check_dist(p, f"private_dists[{i}]") for i, p in enumerate(private_dists)]
    if any(m.shape != p_public.shape for m in members):
        raise DistributionError("private and public distributions differ in vocabulary size")
    return np.stack(members)


def decode_adaptive(private_dists: Sequence[np.ndarray], p_public, cfg: DecodingConfig,
                    ledger: PrivacyLedger | None, rng=None, *, query_index: int = 0,
                    add_noise: bool = True) -> QueryOutcome:
    """Answer one next-token query with screening and data-dependent accounting.

    ``rng`` overrides the per-query generator derived from ``cfg.seed`` and
    ``query_index``. The outcome is appended to ``ledger`` when one is given.
    """
    n = len(private_dists)
    if n != cfg.ensemble_size:
        raise ValueError(f"expected {cfg.ensemble_size} private distributions, got {n}")
    p0 = check_dist(p_public, "p_public")
    stacked = _stack(private_dists, p0)
    screen_rng, sample_rng = _query_rngs(cfg, query_index, rng)

    verdict = screen(stacked, p0, cfg.screening, screen_rng, add_noise=add_noise)
    if not verdict.passed:
        outcome = QueryOutcome(
            query_index, cfg.alpha, sample_token(p0, sample_rng), True, verdict.eps_cost, 0.0,
            (0.0,) * n, dist_digest(p0), verdict.noisy_divergence, False, p0,
        )
    else:
        lams, projected, _ = project_many(stacked, p0, cfg.alpha, cfg.beta * cfg.alpha, cfg.projection_tol)
        mixture = projected.sum(axis=0) / n
        eps_decode = data_dependent_loss(list(projected), cfg.alpha, p_public=p0)
        capped = eps_decode > DEFAULT_CAP
        if capped:
            eps_decode = DEFAULT_CAP
        outcome = QueryOutcome(
            query_index, cfg.alpha, sample_token(mixture, sample_rng), False, verdict.eps_cost, eps_decode,
            tuple(float(x) for x in lams), dist_digest(mixture), verdict.noisy_divergence, capped, mixture,
        )
    if ledger is not None:
        ledger.record(outcome)
    return outcome


@lru_cache(maxsize=1024)
def _baseline_beta(eps_budget, query_budget, alpha, subset_size, q):
    return select_beta_subsampled(eps_budget, query_budget, alpha, subset_size, q)


def decode_baseline(private_dists: Sequence[np.ndarray] | Callable[[list[int]], Sequence[np.ndarray]],
                    p_public, cfg: DecodingConfig, ledger: PrivacyLedger | None, rng=None, *,
                    query_index: int = 0) -> QueryOutcome:
    """Fixed-budget decoding over a Poisson-subsampled ensemble.

    ``private_dists`` is either the full list of member distributions or a
    callable mapping the selected member indices to their distributions, so
    unselected members never need to be evaluated.
    """
    base = cfg.baseline
    if base is None:
        raise ValueError("decode_baseline needs cfg.baseline")
    if base.subsample_q < 1 and float(cfg.alpha) != int(cfg.alpha):
        raise ValueError("subsampling amplification needs an integer order")
    p0 = check_dist(p_public, "p_public")
    n = cfg.ensemble_size
    gen = rng if rng is not None else np.random.default_rng(query_seed(cfg.seed, query_index))

    if base.subsample_q == 1.0:
        chosen = list(range(n))
    else:
        chosen = [int(i) for i in np.flatnonzero(gen.random(n) < base.subsample_q)]

    lambdas = [0.0] * n
    if not chosen:
        dist = p0
    else:
        if callable(private_dists):
            dists = list(private_dists(chosen))
        else:
            if len(private_dists) != n:
                raise ValueError(f"expected {n} private distributions, got {len(private_dists)}")
            dists = [private_dists[i] for i in chosen]
        alpha = int(cfg.alpha) if base.subsample_q < 1 else cfg.alpha
        beta = _baseline_beta(base.eps_budget, base.query_budget, alpha, len(chosen), base.subsample_q)
        lams, projected, _ = project_many(_stack(dists, p0), p0, cfg.alpha, beta * cfg.alpha, cfg.projection_tol)
        dist = projected.sum(axis=0) / len(chosen)
        for i, lam in zip(chosen, lams):
            lambdas[i] = float(lam)

    outcome = QueryOutcome(
        query_index, cfg.alpha, sample_token(dist, gen), False, 0.0, base.per_query_eps,
        tuple(lambdas), dist_digest(dist), math.nan, False, dist,
    )
    if ledger is not None:
        ledger.record(outcome)
    return outcome
