import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capfb.errors import DomainError
from capfb.prob import (FiniteChannelKernel, MarkovInputPolicy, StateWindow, TransmissionCost,
                        binary_entropy, check_simplex, decode_state, encode_state, kl_divergence,
                        shift_state, shift_table)


@st.composite
def windows(draw):
    radix = draw(st.integers(1, 5))
    order = draw(st.integers(0, 5))
    symbols = tuple(draw(st.lists(st.integers(0, radix - 1), min_size=order, max_size=order)))
    return StateWindow(order, symbols, radix)


@given(windows())
def test_encode_decode_roundtrip(w):
    assert decode_state(encode_state(w), w.order, w.radix) == w


@given(windows(), st.data())
def test_shift_drops_oldest_appends_newest(w, data):
    b = data.draw(st.integers(0, w.radix - 1))
    nxt = decode_state(shift_state(encode_state(w), b, w.order, w.radix), w.order, w.radix)
    expected = (w.symbols[1:] + (b,)) if w.order else ()
    assert nxt.symbols == expected


@given(windows())
def test_newest_symbol_is_least_significant(w):
    if w.order:
        assert encode_state(w) % w.radix == w.symbols[-1]


def test_worked_encodings():
    assert encode_state(StateWindow(2, (1, 0), 2)) == 2
    assert encode_state(StateWindow(3, (2, 1, 0), 3)) == 21
    assert shift_state(2, 1, 2, 2) == 1
    assert shift_state(3, 2, 1, 4) == 2


def test_shift_table_matches_shift_state():
    T = shift_table(3, 3)
    for s in range(27):
        for b in range(3):
            assert T[s, b] == shift_state(s, b, 3, 3)


def test_window_validation():
    with pytest.raises(DomainError):
        StateWindow(2, (0,), 2)
    with pytest.raises(DomainError):
        StateWindow(1, (3,), 2)
    with pytest.raises(DomainError):
        shift_state(4, 0, 2, 2)


@settings(max_examples=50)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_kl_nonnegative_and_zero_on_diagonal(k, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
    assert kl_divergence(p, q) >= 0
    assert kl_divergence(p, p) == pytest.approx(0, abs=1e-15)


def test_kl_infinite_off_support():
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == float("inf")
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2))


def test_binary_entropy():
    assert binary_entropy(0.5) == pytest.approx(np.log(2))
    assert binary_entropy(0.0) == 0.0


def test_check_simplex_renormalizes_within_tolerance():
    p = check_simplex([0.5, 0.5 + 1e-13])
    assert p.sum() == 1.0


def test_check_simplex_names_row():
    with pytest.raises(DomainError, match=r"row \(1, 0\) sums to 0.8"):
        check_simplex(np.array([[[1.0, 0.0]], [[0.4, 0.4]]]), what="kernel")


def test_check_simplex_rejects_negative():
    with pytest.raises(DomainError, match="negative"):
        check_simplex([1.2, -0.2])


def test_kernel_shape_and_memory():
    k = FiniteChannelKernel(np.array([[0.9, 0.1], [0.1, 0.9]]))
    assert (k.n_in, k.n_out, k.M) == (2, 2, 0)
    with pytest.raises(DomainError, match="needs 2 states"):
        FiniteChannelKernel(np.array([[[0.9, 0.1], [0.1, 0.9]]]), M=1)


def test_kernel_lifting_reads_recent_symbols():
    q = np.random.default_rng(0).dirichlet(np.ones(2), size=(2, 2))
    k = FiniteChannelKernel(q, M=1)
    lifted = k.lifted(3)
    for s in range(8):
        np.testing.assert_array_equal(lifted[s], q[s % 2])
    with pytest.raises(DomainError):
        k.lifted(0)


def test_cost_and_policy_validation():
    with pytest.raises(DomainError):
        TransmissionCost([[0.0, -1.0]])
    with pytest.raises(DomainError):
        TransmissionCost([[0.0, 1.0]], kappa=-1.0)
    with pytest.raises(DomainError):
        MarkovInputPolicy([[0.3, 0.3]])
    c = TransmissionCost([[0.0, 1.0], [2.0, 3.0]], K=1)
    assert c.lifted(2, 2).shape == (4, 2)
