"""Projection of a private distribution onto a Renyi ball around the public one.

The mixing weight is the largest ``lam`` in [0, 1] such that

    D_sym(lam * p_private + (1 - lam) * p_public || p_public) <= radius

with ``radius = beta * alpha``. The constraint is non-decreasing in ``lam``
and zero at ``lam = 0``, so the feasible set is an interval [0, lam*] and
bisection finds its right end.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergence import DistributionError, _check_pair, check_order, renyi_sym_rows

DEFAULT_TOL = 1e-6
MAX_ITER = 64


@dataclass(frozen=True)
class ProjectionResult:
    lam: float
    projected: np.ndarray
    achieved_divergence: float


def mix(p_private: np.ndarray, p_public: np.ndarray, lam: float) -> np.ndarray:
    return lam * p_private + (1.0 - lam) * p_public


def project_many(private: np.ndarray, p_public: np.ndarray, alpha: float, radius: float,
                 tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bisect every row of ``private`` at once (unchecked inputs).

    Returns ``(lams, projected, achieved)``. All rows share the same bracket
    schedule, so each row's result equals a standalone bisection.
    """
    P = np.atleast_2d(private)
    q = p_public[None, :]

    def div(lams):
        return renyi_sym_rows(lams[:, None] * P + (1.0 - lams[:, None]) * q, q, alpha)

    n = P.shape[0]
    lams = np.zeros(n)
    achieved = np.zeros(n)

    full = div(np.ones(n))
    done = full <= radius
    lams[done], achieved[done] = 1.0, full[done]
    # disjoint supports: any positive weight is already infinitely far
    done |= np.isinf(div(np.full(n, tol)))

    active = ~done
    if active.any():
        lo = np.zeros(n)
        hi = np.ones(n)
        lo_div = np.zeros(n)
        for _ in range(MAX_ITER):
            if hi[0] - lo[0] <= tol:
                break
            mid = 0.5 * (lo + hi)
            d = div(mid)
            ok = d <= radius
            lo = np.where(ok, mid, lo)
            lo_div = np.where(ok, d, lo_div)
            hi = np.where(ok, hi, mid)
        lams[active], achieved[active] = lo[active], lo_div[active]

    projected = lams[:, None] * P + (1.0 - lams[:, None]) * q
    return lams, projected, achieved


def project(p_private, p_public, alpha: float, beta: float, tol: float = DEFAULT_TOL) -> ProjectionResult:
    """Largest feasible mixing weight for ``p_private`` toward ``p_public``.

    Returns a :class:`ProjectionResult` whose ``projected`` field is
    ``lam * p_private + (1 - lam) * p_public`` and whose
    ``achieved_divergence`` is the symmetric divergence at that ``lam``.
    """
    alpha = check_order(alpha)
    p, q = _check_pair(p_private, p_public)
    if not beta >= 0:
        raise DistributionError(f"beta must be >= 0, got {beta}")
    if not tol > 0:
        raise DistributionError(f"tol must be > 0, got {tol}")
    lams, projected, achieved = project_many(p[None, :], q, alpha, beta * alpha, tol)
    return ProjectionResult(float(lams[0]), projected[0], float(achieved[0]))
