"""Probability primitives: simplices, output windows and stochastic tensors.

Conventions used across the package:

* logarithms are natural (nats); bits only appear at the CLI boundary;
* ``0 * log 0 = 0``;
* a window of the last ``J`` outputs ``(b_{i-J}, ..., b_{i-1})`` is encoded as
  ``sum_k b_{i-k} * radix**(k-1)``, i.e. the most recent symbol is the least
  significant digit.  Every tensor indexed by a "state" uses this layout, so
  the last ``M`` symbols of a ``J``-window ``s`` are simply ``s % radix**M``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError

SIMPLEX_ATOL = 1e-12


def check_simplex(p, atol: float = SIMPLEX_ATOL, what: str = "distribution") -> np.ndarray:
    """Validate ``p`` as a probability vector (or a stack of them, last axis).

    Rows whose sum is within ``atol`` of one are renormalized exactly; rows
    outside that band, or with negative / non-finite entries, raise
    :class:`DomainError`.
    """
    p = np.array(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] == 0:
        raise DomainError(f"{what}: empty probability vector")
    if not np.all(np.isfinite(p)):
        raise DomainError(f"{what}: non-finite entries")
    if np.any(p < 0):
        idx = tuple(int(i) for i in np.argwhere(p < 0)[0][:-1])
        raise DomainError(f"{what}: negative entry in row {idx}")
    sums = p.sum(axis=-1)
    bad = np.abs(sums - 1.0) > atol
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(np.atleast_1d(bad))[0]) if p.ndim > 1 else ()
        s = float(np.atleast_1d(sums)[np.atleast_1d(bad)][0])
        raise DomainError(f"{what}: row {idx} sums to {s:.12g}, not 1")
    return p / sums[..., None]


def kl_divergence(p, q) -> float:
    """Relative entropy ``D(p || q)`` in nats.

    Returns ``inf`` when ``p`` is not absolutely continuous w.r.t. ``q``
    (some ``p_i > 0`` with ``q_i == 0``); that is a value, not an error.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DomainError(f"shape mismatch {p.shape} vs {q.shape}")
    support = p > 0
    if np.any(q[support] == 0):
        return float("inf")
    d = float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))
    return max(d, 0.0)


def binary_entropy(x: float) -> float:
    """h(x) in nats."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * np.log(x) - (1 - x) * np.log1p(-x))


# -- output windows -----------------------------------------------------------


@dataclass(frozen=True)
class StateWindow:
    """The last ``order`` output symbols, oldest first, most recent last."""

    order: int
    symbols: tuple
    radix: int

    def __post_init__(self):
        if self.order < 0 or self.radix < 1:
            raise DomainError("window order must be >= 0 and radix >= 1")
        if len(self.symbols) != self.order:
            raise DomainError(f"window of order {self.order} given {len(self.symbols)} symbols")
        for b in self.symbols:
            if not 0 <= int(b) < self.radix:
                raise DomainError(f"symbol {b} outside [0, {self.radix})")


def n_states(order: int, radix: int) -> int:
    return radix ** order


def encode_state(window: StateWindow) -> int:
    index = 0
    for b in window.symbols:  # oldest first; Horner puts the newest lowest
        index = index * window.radix + int(b)
    return index


def decode_state(index: int, order: int, radix: int) -> StateWindow:
    if not 0 <= index < radix ** order:
        raise DomainError(f"state index {index} outside [0, {radix ** order})")
    symbols = []
    for _ in range(order):
        symbols.append(index % radix)
        index //= radix
    return StateWindow(order, tuple(reversed(symbols)), radix)


def shift_state(index: int, symbol: int, order: int, radix: int) -> int:
    """Drop the oldest symbol of the window and append ``symbol``."""
    if not 0 <= symbol < radix:
        raise DomainError(f"symbol {symbol} outside [0, {radix})")
    if not 0 <= index < radix ** order:
        raise DomainError(f"state index {index} outside [0, {radix ** order})")
    if order == 0:
        return 0
    return (index * radix + symbol) % radix ** order


def shift_table(order: int, radix: int) -> np.ndarray:
    """``table[s, b]`` is the successor of window ``s`` after output ``b``."""
    s = np.arange(radix ** order)[:, None]
    b = np.arange(radix)[None, :]
    return (s * radix + b) % radix ** order


# -- stochastic tensors ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteChannelKernel:
    """Channel ``Q(b_i | b_{i-M}^{i-1}, a_i)`` stored as ``q[state, a, b]``."""

    q: np.ndarray
    M: int = 0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim == 2:
            q = q[None]
        if q.ndim != 3:
            raise DomainError("channel kernel must be indexed [state][input][output]")
        n_out = q.shape[2]
        if self.M < 0:
            raise DomainError("channel memory M must be >= 0")
        if q.shape[0] != n_out ** self.M:
            raise DomainError(
                f"memory M={self.M} with {n_out} outputs needs {n_out ** self.M} states, got {q.shape[0]}"
            )
        q = check_simplex(q, what="channel kernel")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n_in(self) -> int:
        return self.q.shape[1]

    @property
    def n_out(self) -> int:
        return self.q.shape[2]

    def lifted(self, J: int) -> np.ndarray:
        """Kernel re-indexed by ``J``-windows (``J >= M``), shape ``(|B|^J, A, B)``."""
        if J < self.M:
            raise DomainError(f"window order J={J} smaller than channel memory M={self.M}")
        s = np.arange(self.n_out ** J) % self.n_out ** self.M
        return self.q[s]


@dataclass(frozen=True, eq=False)
class TransmissionCost:
    """Cost ``gamma(a_i, b_{i-K}^{i-1})`` as ``table[state, a]`` with budget ``kappa``."""

    table: np.ndarray
    K: int = 0
    kappa: float = float("inf")

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim == 1:
            t = t[None]
        if t.ndim != 2:
            raise DomainError("cost table must be indexed [state][input]")
        if self.K < 0:
            raise DomainError("cost memory K must be >= 0")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise DomainError("cost entries must be finite and nonnegative")
        if self.kappa < 0 or np.isnan(self.kappa):
            raise DomainError("budget kappa must be >= 0")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def lifted(self, J: int, n_out: int) -> np.ndarray:
        if self.table.shape[0] != n_out ** self.K:
            raise DomainError(
                f"cost memory K={self.K} with {n_out} outputs needs {n_out ** self.K} states"
            )
        if J < self.K:
            raise DomainError(f"window order J={J} smaller than cost memory K={self.K}")
        return self.table[np.arange(n_out ** J) % n_out ** self.K]


@dataclass(frozen=True, eq=False)
class MarkovInputPolicy:
    """Input law ``pi(a_i | b_{i-J}^{i-1})`` as ``pi[state, a]``."""

    pi: np.ndarray
    J: int = 0

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim == 1:
            pi = pi[None]
        if pi.ndim != 2:
            raise DomainError("policy must be indexed [state][input]")
        pi = check_simplex(pi, what="input policy")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def n_in(self) -> int:
        return self.pi.shape[1]


def memory_order(channel: FiniteChannelKernel, cost: Optional[TransmissionCost] = None) -> int:
    """J = max{M, K}."""
    return max(channel.M, cost.K if cost is not None else 0)


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def bsc(eps: float) -> FiniteChannelKernel:
    """Memoryless binary symmetric channel with crossover ``eps``."""
    return FiniteChannelKernel(np.array([[1 - eps, eps], [eps, 1 - eps]]), M=0)


def random_kernel(rng: np.random.Generator, n_in: int, n_out: int, M: int = 0,
                  concentration: float = 1.0) -> FiniteChannelKernel:
    q = rng.dirichlet(np.full(n_out, concentration), size=(n_out ** M, n_in))
    return FiniteChannelKernel(q, M=M)


def random_policy(rng: np.random.Generator, n_in: int, n_states_: int, J: int = 0) -> MarkovInputPolicy:
    return MarkovInputPolicy(rng.dirichlet(np.ones(n_in), size=n_states_), J=J)


def window_symbols(index: int, order: int, radix: int) -> Sequence[int]:
    return decode_state(index, order, radix).symbols
