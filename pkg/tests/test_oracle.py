import numpy as np
import pytest

from capfb.dp import finite_horizon_dp
from capfb.errors import DomainError, ResourceError
from capfb.oracle import (OracleConfig, evaluate_restricted_vs_full, maximize_full_history,
                          maximize_window_policy)
from capfb.prob import FiniteChannelKernel, TransmissionCost, bsc, random_kernel
from capfb.verify import ZZ_UMCO


def test_memoryless_single_use_matches_capacity():
    res = maximize_full_history(bsc(0.1), config=OracleConfig(restarts=2))
    assert res.value / np.log(2) == pytest.approx(0.5310044064, abs=1e-7)


@pytest.mark.parametrize("seed", [0, 1])
def test_monotone_trace_and_restart_stability(seed):
    ch = random_kernel(np.random.default_rng(100 + seed), 2, 2, M=1)
    res = maximize_full_history(ch, n=1, config=OracleConfig(restarts=8))
    assert np.all(np.diff(res.trace) >= -1e-12)
    assert np.ptp(res.values) < 1e-6
    assert res.value == pytest.approx(finite_horizon_dp(ch, n=1).value, abs=1e-6)


def test_with_cost_matches_dp():
    ch = random_kernel(np.random.default_rng(4), 2, 2, M=1)
    cost = TransmissionCost(np.array([[0.0, 1.0], [0.5, 0.0]]), K=1)
    res = maximize_full_history(ch, cost, s_l=0.4, n=1, config=OracleConfig(restarts=3))
    assert res.value == pytest.approx(finite_horizon_dp(ch, cost, s_l=0.4, n=1).value, abs=1e-6)


def test_full_dominates_restricted():
    ch = FiniteChannelKernel(ZZ_UMCO, M=1)
    for J in (0, 1):
        rep = evaluate_restricted_vs_full(ch, n=1, J=J, config=OracleConfig(restarts=2))
        assert rep.full_value >= rep.restricted_value - 1e-9
    assert evaluate_restricted_vs_full(ch, n=1, J=0, config=OracleConfig(restarts=2)).gap > 1e-3


def test_window_policy_ties_rows():
    ch = FiniteChannelKernel(ZZ_UMCO, M=1)
    res = maximize_window_policy(ch, n=1, J=0, window=1, config=OracleConfig(restarts=2))
    for table in res.policy.tables:
        np.testing.assert_array_equal(table, np.broadcast_to(table[0], table.shape))


def test_deterministic_given_seed():
    ch = random_kernel(np.random.default_rng(9), 2, 2, M=1)
    cfg = OracleConfig(restarts=3, seed=42)
    a = maximize_full_history(ch, n=1, config=cfg)
    b = maximize_full_history(ch, n=1, config=cfg)
    assert a.value == b.value
    np.testing.assert_array_equal(a.values, b.values)


def test_resource_cap_and_config_validation():
    with pytest.raises(ResourceError):
        maximize_full_history(random_kernel(np.random.default_rng(0), 3, 3, M=1), n=4)
    with pytest.raises(DomainError):
        OracleConfig(restarts=0)
