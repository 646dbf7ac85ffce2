"""Renyi divergences between discrete distributions over a shared vocabulary.

Everything is in nats. Distributions are plain 1-d float64 numpy arrays; use
:func:`check_dist` at API boundaries to enforce non-negativity and
normalization.
"""
from __future__ import annotations

import math

import numpy as np

NORM_TOL = 1e-9
DEFAULT_CAP = 1e6


class DistributionError(ValueError):
    """Raised for malformed probability vectors or orders."""


def check_order(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha > 1.0 or math.isnan(alpha):
        raise DistributionError(f"Renyi order must be > 1, got {alpha}")
    return alpha


def check_dist(p, name: str = "dist") -> np.ndarray:
    """Return ``p`` as a float64 vector after validating it is a distribution.

    Out-of-tolerance inputs are rejected rather than renormalized.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DistributionError(f"{name}: expected a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DistributionError(f"{name}: contains non-finite entries")
    if np.any(arr < 0):
        raise DistributionError(f"{name}: contains negative entries")
    total = arr.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise DistributionError(f"{name}: sums to {total!r}, not 1")
    return arr


def _check_pair(p, q):
    p = check_dist(p, "p")
    q = check_dist(q, "q")
    if p.shape != q.shape:
        raise DistributionError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return p, q


def renyi_rows(p: np.ndarray, q: np.ndarray, alpha: float) -> np.ndarray:
    """Row-wise D_alpha(p[r] || q[r]) for 2-d arrays (broadcastable), unchecked."""
    p, q = np.broadcast_arrays(np.atleast_2d(p), np.atleast_2d(q))
    support = p > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_terms = np.where(support, alpha * np.log(p) + (1.0 - alpha) * np.log(q), -np.inf)
    peak = log_terms.max(axis=1, keepdims=True)
    finite_peak = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        total = np.log(np.exp(log_terms - finite_peak).sum(axis=1)) + finite_peak[:, 0]
    out = np.maximum(total / (alpha - 1.0), 0.0)
    out[np.any(support & (q == 0), axis=1)] = np.inf
    out[np.all(p == q, axis=1)] = 0.0
    return out


def renyi_sym_rows(p: np.ndarray, q: np.ndarray, alpha: float) -> np.ndarray:
    return np.maximum(renyi_rows(p, q, alpha), renyi_rows(q, p, alpha))


def _renyi(p: np.ndarray, q: np.ndarray, alpha: float) -> float:
    # unchecked kernel; callers validate
    return float(renyi_rows(p, q, alpha)[0])


def _renyi_sym(p: np.ndarray, q: np.ndarray, alpha: float) -> float:
    forward = _renyi(p, q, alpha)
    if forward == math.inf:
        return forward
    return max(forward, _renyi(q, p, alpha))


def _apply_cap(value: float, cap: float | None) -> float:
    if cap is not None and value > cap:
        return float(cap)
    return value


def renyi_divergence(p, q, alpha: float, cap: float | None = None) -> float:
    """D_alpha(p || q) = log(sum_x p(x)^alpha q(x)^(1-alpha)) / (alpha - 1).

    Returns ``math.inf`` when ``p`` puts mass where ``q`` has none, unless
    ``cap`` is given, in which case the result is clamped to ``cap``.
    """
    alpha = check_order(alpha)
    p, q = _check_pair(p, q)
    return _apply_cap(_renyi(p, q, alpha), cap)


def renyi_divergence_sym(p, q, alpha: float, cap: float | None = None) -> float:
    """max(D_alpha(p || q), D_alpha(q || p))."""
    alpha = check_order(alpha)
    p, q = _check_pair(p, q)
    return _apply_cap(_renyi_sym(p, q, alpha), cap)
