import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adapmixed.accountant import (
    BaselineConfig,
    LedgerEntry,
    LedgerError,
    PrivacyLedger,
    data_dependent_loss,
    data_independent_bound,
    rdp_to_dp,
    select_beta,
    select_beta_subsampled,
    subsampled_loss,
    utility_gap_bound,
)
from adapmixed.decoder import QueryOutcome

from oracles import leave_one_out_loss, random_dist, subsampled_mp

# frozen 50-digit mpmath evaluations (see tests/oracles.py)
BOUND_6_001_100 = 0.004587222799637845
SUBSAMPLED_HALF = 0.02595301747695552
LOO_TWO_POINT = 0.04082199452025511


def test_data_dependent_identical_is_zero():
    p = np.array([0.3, 0.3, 0.4])
    assert data_dependent_loss([p, p, p], 4) == 0.0


def test_data_dependent_two_members():
    got = data_dependent_loss([np.array([0.6, 0.4]), np.array([0.4, 0.6])], 2)
    assert got == pytest.approx(LOO_TWO_POINT, rel=1e-12)
    assert float(leave_one_out_loss([[0.6, 0.4], [0.4, 0.6]], 2)) == pytest.approx(LOO_TWO_POINT, rel=1e-15)


def test_data_dependent_single_member_uses_public():
    p, q = np.array([0.5, 0.5]), np.array([0.9, 0.1])
    assert data_dependent_loss([p], 2, p_public=q) == pytest.approx(1.0216512475319814)
    with pytest.raises(ValueError):
        data_dependent_loss([p], 2)
    with pytest.raises(ValueError):
        data_dependent_loss([], 2)


def test_data_dependent_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(40):
        n, size = int(rng.integers(2, 7)), int(rng.integers(2, 10))
        members = [random_dist(rng, size, 2.0) for _ in range(n)]
        alpha = float(rng.integers(2, 12))
        want = float(leave_one_out_loss([m.tolist() for m in members], alpha))
        assert data_dependent_loss(members, alpha) == pytest.approx(want, rel=1e-9, abs=1e-13)


def test_data_independent_values():
    assert data_independent_bound(6, 0.01, 100) == pytest.approx(BOUND_6_001_100, rel=1e-12)
    assert data_independent_bound(6, 0.0, 100) == 0.0
    assert data_independent_bound(6, 0.01, 1) == pytest.approx(0.06)
    # huge exponent stays finite
    big = data_independent_bound(18, 1e3, 16)
    assert math.isfinite(big)
    assert big == pytest.approx((4e3 * 18 * 17 - math.log(16)) / 17)
    with pytest.raises(ValueError):
        data_independent_bound(6, 0.01, 0)


def test_subsampled_values():
    assert subsampled_loss(lambda k: 0.1, 0.5, 2) == pytest.approx(SUBSAMPLED_HALF, rel=1e-12)
    assert subsampled_loss(lambda k: 0.37, 1.0, 5) == 0.37
    assert subsampled_loss(lambda k: 0.37, 0.0, 5) == 0.0
    with pytest.raises(ValueError):
        subsampled_loss(lambda k: 0.1, 0.5, 2.5)
    with pytest.raises(ValueError):
        subsampled_loss(lambda k: 0.1, 1.5, 2)


def test_subsampled_matches_oracle():
    rng = np.random.default_rng(9)
    for _ in range(30):
        alpha = int(rng.integers(2, 25))
        table = np.sort(rng.uniform(0, 2, alpha + 1))
        q = float(rng.uniform(0.001, 0.999))
        want = float(subsampled_mp(lambda k: table[k], q, alpha))
        assert subsampled_loss(lambda k: table[k], q, alpha) == pytest.approx(want, rel=1e-10, abs=1e-15)


def test_rdp_to_dp_values():
    assert rdp_to_dp(0.0, 18, 1e-5) == pytest.approx(0.45005062782, abs=1e-10)
    assert rdp_to_dp(1.0, 2, 0.1) == pytest.approx(1.9162907318741551, rel=1e-12)
    assert rdp_to_dp(0.474, 18, 1e-5) == pytest.approx(0.924, abs=1e-3)
    with pytest.raises(ValueError):
        rdp_to_dp(0.0, 18, 0.0)


def test_select_beta_example():
    beta = select_beta(8, 1024, 6, 100)
    assert beta == pytest.approx(math.log(100 * math.exp(5 * 8 / 1024) + 1 - 100) / 120, rel=1e-12)
    assert data_independent_bound(6, beta, 100) <= 8 / 1024 + 1e-9
    assert select_beta(8, 1024, 6, 1) == pytest.approx(8 / 1024 / 6)


def test_select_beta_subsampled():
    beta = select_beta_subsampled(8, 1000, 6, 16, 0.3)
    loss = subsampled_loss(lambda k: data_independent_bound(k, beta, 16), 0.3, 6)
    assert loss <= 8 / 1000
    assert loss == pytest.approx(8 / 1000, abs=1e-8)
    assert beta > select_beta(8, 1000, 6, 16)
    assert select_beta_subsampled(8, 1000, 6, 16, 1.0) == select_beta(8, 1000, 6, 16)


def test_utility_gap():
    assert utility_gap_bound([[0.5]], [[0.8]], [0.2]) == pytest.approx(0.5 * math.log(4))
    assert utility_gap_bound(np.ones((3, 4)), np.full((3, 4), 0.3), np.full(4, 0.1)) == 0.0
    assert utility_gap_bound(np.zeros((2, 2)), np.full((2, 2), 0.25), np.full(2, 0.25)) == 0.0
    with pytest.raises(ValueError):
        utility_gap_bound([[0.5]], [[0.8]], [0.0])


def test_ledger_exact_composition():
    eps0 = 0.1
    ledger = PrivacyLedger(18)
    for i in range(1000):
        ledger.append(LedgerEntry(i, 0.0, eps0, False))
    assert ledger.eps_rdp_total == 1000 * eps0
    assert ledger.eps_dp_total == rdp_to_dp(1000 * eps0, 18, 1e-5)


def test_ledger_screened_out_and_errors():
    ledger = PrivacyLedger(18)
    ledger.append(LedgerEntry(0, 1.8e-7, 0.0, True))
    assert ledger.eps_rdp_total == 1.8e-7
    with pytest.raises(LedgerError):
        ledger.append(LedgerEntry(1, 1.8e-7, 0.2, True))
    with pytest.raises(LedgerError):
        ledger.append(LedgerEntry(1, -1.0, 0.0, False))
    out = QueryOutcome(2, 6.0, 0, False, 0.0, 0.1, (), "")
    with pytest.raises(LedgerError, match="order"):
        ledger.record(out)


def test_ledger_empty():
    ledger = PrivacyLedger(18, 1e-5)
    assert ledger.eps_rdp_total == 0.0
    assert ledger.eps_dp_total == pytest.approx(0.45005, abs=1e-5)


def test_baseline_config():
    assert BaselineConfig(8, 1000).per_query_eps == 0.008
    for bad in [dict(eps_budget=0, query_budget=10), dict(eps_budget=1, query_budget=0),
                dict(eps_budget=1, query_budget=10, subsample_q=0.0)]:
        with pytest.raises(ValueError):
            BaselineConfig(**bad)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 100), st.integers(1, 100_000), st.floats(1.01, 64), st.integers(1, 1000))
def test_select_beta_round_trip(eps, queries, alpha, n):
    beta = select_beta(eps, queries, alpha, n)
    assert beta >= 0
    assert data_independent_bound(alpha, beta, n) <= eps / queries + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 32))
def test_ledger_order_independent(seed, k):
    rng = np.random.default_rng(seed)
    costs = rng.exponential(0.3, k) * rng.choice([1e-6, 1.0, 1e3], k)
    a, b = PrivacyLedger(4), PrivacyLedger(4)
    for i, c in enumerate(costs):
        a.append(LedgerEntry(i, 0.0, float(c), False))
    for i, c in enumerate(costs[::-1]):
        b.append(LedgerEntry(i, 0.0, float(c), False))
    assert a.eps_rdp_total == b.eps_rdp_total == math.fsum(costs)
