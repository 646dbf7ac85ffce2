"""Privacy-loss arithmetic and the per-session ledger.

All losses are Renyi-DP at a single order ``alpha`` and measured in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .divergence import _renyi_sym, check_dist, check_order, renyi_sym_rows


class LedgerError(ValueError):
    pass


# --------------------------------------------------------------------------
# per-query losses


def _leave_one_out(stacked: np.ndarray) -> np.ndarray:
    # explicit sums over j != i; no subtraction, so no cancellation below zero
    n = stacked.shape[0]
    others = np.ones((n, n)) - np.eye(n)
    return (others @ stacked) / (n - 1)


def data_dependent_loss(projected, alpha: float, p_public=None) -> float:
    """max_i D_sym(p || p_{-i}) for the mean ``p`` of the projected members.

    ``p_{-i}`` is the mean with member ``i`` removed. With a single member the
    neighbouring output is the public distribution, so ``p_public`` is
    required in that case.
    """
    alpha = check_order(alpha)
    n = len(projected)
    if n == 0:
        raise ValueError("data_dependent_loss needs at least one distribution")
    stacked = np.stack([check_dist(p, f"projected[{i}]") for i, p in enumerate(projected)])
    if n == 1:
        if p_public is None:
            raise ValueError("a single-member ensemble needs p_public as its neighbour")
        return _renyi_sym(stacked[0], check_dist(p_public, "p_public"), alpha)
    if np.all(stacked == stacked[0]):
        return 0.0  # the averages below would differ from p in the last bit
    mean = stacked.sum(axis=0) / n
    loo = _leave_one_out(stacked)
    return float(renyi_sym_rows(mean[None, :], loo, alpha).max())


def data_independent_bound(alpha: float, beta: float, n: int) -> float:
    """Worst-case per-query RDP of mixing ``n`` members projected to radius beta*alpha.

    log((n - 1 + exp(4 beta alpha (alpha - 1))) / n) / (alpha - 1), or
    ``beta * alpha`` for a single member.
    """
    alpha = check_order(alpha)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if n == 1:
        return beta * alpha
    y = 4.0 * beta * alpha * (alpha - 1.0)
    if y < 700:
        val = math.log1p(math.expm1(y) / n)
    else:
        val = y - math.log(n) + math.log1p((n - 1) * math.exp(-y))
    return val / (alpha - 1.0)


def subsampled_loss(eps_fn: Callable[[int], float], q: float, alpha: int) -> float:
    """RDP at integer order ``alpha`` after Poisson subsampling with rate ``q``.

    (1/(a-1)) log[(1-q)^(a-1) (1+(a-1)q) + sum_{k=2}^a C(a,k) (1-q)^(a-k) q^k e^((k-1) eps(k))]

    ``q = 1`` returns ``eps_fn(alpha)`` unchanged and ``q = 0`` returns 0.
    """
    if isinstance(alpha, bool) or int(alpha) != alpha or alpha < 2:
        raise ValueError(f"subsampled_loss needs an integer order >= 2, got {alpha}")
    a = int(alpha)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if q == 1.0:
        return float(eps_fn(a))
    if q == 0.0:
        return 0.0

    log_q, log_1mq = math.log(q), math.log1p(-q)
    terms = [(a - 1) * log_1mq + math.log1p((a - 1) * q)]
    for k in range(2, a + 1):
        eps_k = float(eps_fn(k))
        if eps_k == math.inf:
            return math.inf
        log_binom = gammaln(a + 1) - gammaln(k + 1) - gammaln(a - k + 1)
        terms.append(log_binom + (a - k) * log_1mq + k * log_q + (k - 1) * eps_k)
    return max(float(logsumexp(terms)) / (a - 1), 0.0)


def rdp_to_dp(eps_rdp: float, alpha: float, delta: float) -> float:
    """(alpha, eps)-RDP implies (eps + log((a-1)/a) - (log delta + log a)/(a-1), delta)-DP."""
    alpha = check_order(alpha)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return eps_rdp + math.log((alpha - 1.0) / alpha) - (math.log(delta) + math.log(alpha)) / (alpha - 1.0)


def select_beta(eps_budget: float, query_budget: int, alpha: float, n: int) -> float:
    """Largest radius parameter whose per-query bound fits ``eps_budget / query_budget``."""
    alpha = check_order(alpha)
    if eps_budget <= 0 or query_budget < 1 or n < 1:
        raise ValueError("eps_budget, query_budget and n must be positive")
    per_query = eps_budget / query_budget
    if n == 1:
        return per_query / alpha
    x = (alpha - 1.0) * per_query
    # log(n e^x + 1 - n), rearranged to stay finite at both ends of x
    if x < 700:
        arg = n * math.expm1(x)
        assert arg > -1.0
        log_term = math.log1p(arg)
    else:
        log_term = x + math.log(n) + math.log1p(-(n - 1) / n * math.exp(-x))
    return log_term / (4.0 * (alpha - 1.0) * alpha)


def select_beta_subsampled(eps_budget: float, query_budget: int, alpha: int, n: int, q: float,
                           tol: float = 1e-9) -> float:
    """Largest beta with subsampled_loss(bound(., beta, n), q, alpha) <= eps_budget / query_budget.

    Solved by bisection on beta; ``tol`` applies to the loss. At ``q = 1`` the
    closed form of :func:`select_beta` is returned.
    """
    if q == 1.0:
        return select_beta(eps_budget, query_budget, alpha, n)
    target = eps_budget / query_budget

    def loss(beta):
        return subsampled_loss(lambda k: data_independent_bound(k, beta, n), q, alpha)

    lo = select_beta(eps_budget, query_budget, alpha, n)  # amplification only helps
    hi = max(2.0 * lo, 1e-12)
    while loss(hi) <= target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        l_mid = loss(mid)
        if l_mid <= target:
            lo = mid
            if target - l_mid <= tol:
                break
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo


def utility_gap_bound(lambdas, private_likelihoods, public_likelihoods) -> float:
    """max_{j,t} (1 - lambda_{j,t}) log(p_j(x_t) / p_0(x_t)).

    ``lambdas`` and ``private_likelihoods`` are N x T; ``public_likelihoods``
    has length T.
    """
    lam = np.asarray(lambdas, dtype=np.float64)
    priv = np.asarray(private_likelihoods, dtype=np.float64)
    pub = np.asarray(public_likelihoods, dtype=np.float64)
    if lam.shape != priv.shape or lam.ndim != 2 or pub.shape != (lam.shape[1],):
        raise ValueError("expected N x T lambdas/likelihoods and a length-T public vector")
    if np.any(pub <= 0):
        raise ValueError("public likelihoods must be strictly positive")
    if np.any(priv <= 0):
        raise ValueError("private likelihoods must be strictly positive")
    return float(np.max((1.0 - lam) * (np.log(priv) - np.log(pub)[None, :])))


@dataclass(frozen=True)
class BaselineConfig:
    """Fixed-budget settings for the non-adaptive mixing baseline."""

    eps_budget: float
    query_budget: int
    subsample_q: float = 1.0

    def __post_init__(self):
        if not self.eps_budget > 0:
            raise ValueError(f"eps_budget must be > 0, got {self.eps_budget}")
        if int(self.query_budget) != self.query_budget or self.query_budget < 1:
            raise ValueError(f"query_budget must be a positive integer, got {self.query_budget}")
        if not 0.0 < self.subsample_q <= 1.0:
            raise ValueError(f"subsample_q must be in (0, 1], got {self.subsample_q}")

    @property
    def per_query_eps(self) -> float:
        return self.eps_budget / self.query_budget


# --------------------------------------------------------------------------
# ledger


@dataclass(frozen=True)
class LedgerEntry:
    query_index: int
    eps_screen: float
    eps_decode: float
    screened_out: bool

    @property
    def cost(self) -> float:
        return self.eps_screen + self.eps_decode


@dataclass
class PrivacyLedger:
    """Append-only record of per-query RDP charges at a fixed order.

    The running total is the correctly rounded sum of the entry costs (an
    exact rational accumulator), so it is independent of summation order and
    ``k`` identical charges of ``e`` total exactly ``k * e``.
    """

    alpha: float
    delta: float = 1e-5
    entries: list[LedgerEntry] = field(default_factory=list)
    _exact: Fraction = field(default=Fraction(0), repr=False)

    def __post_init__(self):
        self.alpha = check_order(self.alpha)
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        entries, self.entries, self._exact = list(self.entries), [], Fraction(0)
        for e in entries:
            self.append(e)

    @property
    def eps_rdp_total(self) -> float:
        return float(self._exact)

    @property
    def eps_dp_total(self) -> float:
        return rdp_to_dp(self.eps_rdp_total, self.alpha, self.delta)

    @property
    def eps_screen_total(self) -> float:
        return math.fsum(e.eps_screen for e in self.entries)

    @property
    def eps_decode_total(self) -> float:
        return math.fsum(e.eps_decode for e in self.entries)

    def append(self, entry: LedgerEntry) -> None:
        if entry.screened_out and entry.eps_decode != 0:
            raise LedgerError(f"query {entry.query_index}: screened-out entry charges eps_decode")
        if entry.eps_screen < 0 or entry.eps_decode < 0:
            raise LedgerError(f"query {entry.query_index}: negative charge")
        self.entries.append(entry)
        self._exact += Fraction(entry.cost)

    def record(self, outcome) -> LedgerEntry:
        """Append the charges carried by a decoder ``QueryOutcome``."""
        if float(outcome.alpha) != self.alpha:
            raise LedgerError(f"outcome order {outcome.alpha} does not match ledger order {self.alpha}")
        entry = LedgerEntry(outcome.query_index, outcome.eps_screen, outcome.eps_decode, outcome.screened_out)
        self.append(entry)
        return entry


def record(ledger: PrivacyLedger, outcome) -> PrivacyLedger:
    ledger.record(outcome)
    return ledger
