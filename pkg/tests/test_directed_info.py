import numpy as np
import pytest

from capfb.directed_info import (FullHistoryPolicy, OutputKernelSeq, build_joint, directed_information,
                                 expected_kl_gap, induced_output_kernels, stationary_rate_via_states,
                                 variational_objective)
from capfb.errors import DomainError, ResourceError
from capfb.prob import FiniteChannelKernel, MarkovInputPolicy, binary_entropy, bsc, random_kernel


def _entropy(p):
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _di_by_entropies(mass, n):
    """sum_i H(B_i | W, B^{i-1}) - H(B_i | W, A^i, B^{i-1}) from the joint array."""
    # axes: w, a_0, b_0, ..., a_n, b_n
    def h(keep):
        drop = tuple(ax for ax in range(mass.ndim) if ax not in keep)
        return _entropy(mass.sum(axis=drop).ravel())

    total = 0.0
    for i in range(n + 1):
        outs_prev = {0} | {2 * k + 2 for k in range(i)}
        ins = {2 * k + 1 for k in range(i + 1)}
        bi = 2 * i + 2
        total += h(outs_prev | {bi}) - h(outs_prev)
        total -= h(outs_prev | ins | {bi}) - h(outs_prev | ins)
    return total


def test_memoryless_single_use_is_mutual_information():
    di = directed_information(bsc(0.1), FullHistoryPolicy.uniform(2, 2, 0))
    assert di == pytest.approx(np.log(2) - binary_entropy(0.1), abs=1e-14)


@pytest.mark.parametrize("seed", range(6))
def test_matches_entropy_oracle(seed):
    rng = np.random.default_rng(seed)
    M = seed % 2
    n = 2
    ch = random_kernel(rng, 2, 3, M=M)
    pol = FullHistoryPolicy.random(rng, 2, 3, n, window=M)
    init = rng.dirichlet(np.ones(3 ** M))
    joint = build_joint(ch, pol, init)
    assert joint.total == pytest.approx(1.0, abs=1e-13)
    assert directed_information(ch, pol, init) == pytest.approx(_di_by_entropies(joint.mass, n), abs=1e-12)


def test_window_policy_state_recursion_agrees_with_enumeration():
    rng = np.random.default_rng(7)
    ch = random_kernel(rng, 2, 2, M=1)
    pols = [MarkovInputPolicy(rng.dirichlet(np.ones(2), size=2), J=1) for _ in range(4)]
    init = rng.dirichlet(np.ones(2))
    full = FullHistoryPolicy.from_markov(pols, 3, 2)
    rates = stationary_rate_via_states(ch, pols, init, 3)
    assert rates.total == pytest.approx(directed_information(ch, full, init), abs=1e-12)


def test_variational_at_induced_kernels_equals_di():
    rng = np.random.default_rng(3)
    ch = random_kernel(rng, 3, 2, M=1)
    pol = FullHistoryPolicy.random(rng, 3, 2, 2, window=1)
    V = induced_output_kernels(ch, pol)
    assert variational_objective(ch, pol, None, 2, V) == pytest.approx(directed_information(ch, pol), abs=1e-13)
    assert expected_kl_gap(ch, pol, None, 2, V) == pytest.approx(0.0, abs=1e-13)


def test_window_kernels_gap():
    rng = np.random.default_rng(5)
    ch = random_kernel(rng, 2, 2, M=1)
    pol = FullHistoryPolicy.random(rng, 2, 2, 2, window=1)
    V = OutputKernelSeq(tuple(rng.dirichlet(np.ones(2), size=2) for _ in range(3)), order=1)
    di = directed_information(ch, pol)
    val = variational_objective(ch, pol, None, 2, V)
    assert val - di == pytest.approx(expected_kl_gap(ch, pol, None, 2, V), abs=1e-12)
    assert val >= di


def test_kernel_missing_mass_gives_inf():
    ch = bsc(0.1)
    pol = FullHistoryPolicy.uniform(2, 2, 0)
    V = OutputKernelSeq((np.array([[1.0, 0.0]]),))
    assert variational_objective(ch, pol, None, 0, V) == float("inf")


def test_policy_shape_and_cap_errors():
    with pytest.raises(DomainError):
        FullHistoryPolicy((np.full((2, 2), 0.5),), 2, 2)
    with pytest.raises(ResourceError):
        FullHistoryPolicy.uniform(2, 2, 12, cap=1000)


def test_horizon_mismatch():
    with pytest.raises(DomainError):
        directed_information(bsc(0.1), FullHistoryPolicy.uniform(2, 2, 1), n=2)
