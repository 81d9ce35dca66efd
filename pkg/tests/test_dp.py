import numpy as np
import pytest

from capfb.dp import (dual_objective, dual_search, finite_horizon_dp, relative_value_iteration,
                      stage_maximize, stationary_distribution)
from capfb.directed_info import FullHistoryPolicy, directed_information
from capfb.errors import ConvergenceError, DomainError, ErgodicityError
from capfb.prob import FiniteChannelKernel, TransmissionCost, binary_entropy, bsc, random_kernel


def _mi_grid(q, reward=None, pts=200_001):
    """max over binary input laws of I(p; q) + <p, reward>, on a dense grid."""
    p = np.linspace(0, 1, pts)[:, None]
    law = np.hstack([1 - p, p])
    nu = law @ q
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(q > 0, q * np.log(q / nu[:, None, :]), 0.0).sum(axis=-1)
    obj = (law * kl).sum(axis=1)
    if reward is not None:
        obj = obj + law @ reward
    return float(obj.max())


@pytest.mark.parametrize("seed", range(5))
def test_stage_maximize_against_grid(seed):
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(3), size=2)
    r = rng.normal(size=2) * 0.3
    res = stage_maximize(q, r)
    assert res.bracket < 1e-10
    assert res.value == pytest.approx(_mi_grid(q, r), abs=1e-8)


def test_stage_maximize_flat_slice_returns_uniform():
    res = stage_maximize(np.full((3, 2), 0.5))
    np.testing.assert_allclose(res.pi, 1 / 3)


def test_stage_maximize_reports_non_convergence():
    with pytest.raises(ConvergenceError) as info:
        stage_maximize(np.array([[0.9, 0.1], [0.3, 0.7]]), max_iter=1)
    assert info.value.best is not None


def test_rvi_bsc_bits():
    assert relative_value_iteration(bsc(0.1)).j_star / np.log(2) == pytest.approx(0.5310044064, abs=1e-9)


def test_finite_horizon_matches_brute_force_window_policy():
    # the DP value is attained by its own policies
    rng = np.random.default_rng(11)
    ch = random_kernel(rng, 2, 2, M=1)
    res = finite_horizon_dp(ch, n=2)
    full = FullHistoryPolicy.from_markov(res.policies, 2, 2)
    assert directed_information(ch, full) == pytest.approx(res.value, abs=1e-9)


def test_finite_horizon_per_unit_time_approaches_rvi():
    ch = FiniteChannelKernel(np.array([[[0.9, 0.1], [0.1, 0.9]], [[0.7, 0.3], [0.3, 0.7]]]), M=1)
    j = relative_value_iteration(ch).j_star
    assert finite_horizon_dp(ch, n=400).value / 401 == pytest.approx(j, abs=5e-5)


def test_larger_window_does_not_help():
    rng = np.random.default_rng(2)
    ch = random_kernel(rng, 2, 2, M=1)
    assert relative_value_iteration(ch, J=2).j_star == pytest.approx(relative_value_iteration(ch).j_star, abs=1e-9)
    with pytest.raises(DomainError):
        finite_horizon_dp(ch, J=0)


def _cost(kappa):
    return TransmissionCost(np.array([[0.0, 1.0]]), kappa=kappa)


def test_dual_search_slack_budget_returns_unconstrained():
    res = dual_search(bsc(0.1), _cost(0.5))
    assert res.s_star == 0.0 and not res.binding
    assert res.capacity_nats == pytest.approx(np.log(2) - binary_entropy(0.1), abs=1e-9)


@pytest.mark.parametrize("kappa", [0.1, 0.3])
def test_dual_search_binding(kappa):
    res = dual_search(bsc(0.1), _cost(kappa))
    p = np.linspace(0, kappa, 200_001)
    law = np.stack([1 - p, p], axis=1)
    q = np.array([[0.9, 0.1], [0.1, 0.9]])
    nu = law @ q
    mi = -(nu * np.log(nu)).sum(axis=1) - (-(q * np.log(q)).sum(axis=1)[0])
    assert res.binding
    assert res.capacity_nats == pytest.approx(mi.max(), abs=1e-8)
    assert res.avg_cost == pytest.approx(kappa, abs=1e-7)


def test_dual_objective_convex():
    s = np.linspace(0, 3, 13)
    f = np.array([dual_objective(bsc(0.1), _cost(0.2), 0.2, x) for x in s])
    assert np.all(np.diff(f, 2) >= -1e-9)


def test_zero_budget():
    res = dual_search(bsc(0.1), _cost(0.0))
    assert res.capacity_nats == pytest.approx(0.0, abs=1e-7)


def test_stationary_distribution_and_diagnostics():
    T = np.array([[0.5, 0.5], [0.2, 0.8]])
    rho, ergodic = stationary_distribution(T)
    np.testing.assert_allclose(rho @ T, rho, atol=1e-14)
    assert ergodic
    _, periodic = stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert not periodic
    with pytest.raises(ErgodicityError):
        stationary_distribution(np.eye(2))


def test_transient_states_get_no_mass():
    rho, ergodic = stationary_distribution(np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.0, 0.5, 0.5]]))
    assert rho[0] == 0.0 and not ergodic
