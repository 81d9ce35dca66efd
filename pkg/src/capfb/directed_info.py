"""Exact directed information by dense enumeration of (a^n, b^n) histories.

This is the small-instance ground truth.  Sequences are laid out as a dense
array with axes ``(w, a_0, b_0, a_1, b_1, ..., a_n, b_n)`` where ``w`` is the
encoded initial output window ``b_{-L}^{-1}``; flattening in C order gives
the lexicographic-in-time enumeration.  A history at step ``i`` is the prefix
``(w, a_0, b_0, ..., a_{i-1}, b_{i-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import DomainError, ResourceError
from .prob import (
    FiniteChannelKernel,
    MarkovInputPolicy,
    check_simplex,
    uniform,
)

DEFAULT_CAP = 10 ** 7
_LOG_FLOOR = np.log(1e-300)


def history_shape(n_in: int, n_out: int, window: int, i: int) -> tuple:
    return (n_out ** window,) + (n_in, n_out) * i


def _n_rows(n_in, n_out, window, i):
    return n_out ** window * (n_in * n_out) ** i


def window_states(n_in: int, n_out: int, window: int, n: int) -> list:
    """Encoded last-``window`` outputs for every history at steps ``0..n``.

    ``out[i]`` has :func:`history_shape` ``(..., i)``.
    """
    mod = n_out ** window
    st = np.arange(mod)
    out = [st]
    new_b = np.arange(n_out)
    for _ in range(n):
        nxt = (st[..., None] * n_out + new_b) % mod
        st = np.broadcast_to(nxt[..., None, :], st.shape + (n_in, n_out))
        out.append(st)
    return out


def _input_axes(i: int) -> tuple:
    """Axes of a_0..a_i in a step-``i`` atom array."""
    return tuple(1 + 2 * k for k in range(i + 1))


def _check_cap(n_in, n_out, window, n, cap):
    size = _n_rows(n_in, n_out, window, n + 1)
    if size > cap:
        raise ResourceError(
            f"dense enumeration needs {size} entries, above the cap of {cap}; "
            "reduce the horizon or raise cap"
        )


@dataclass(frozen=True, eq=False)
class FullHistoryPolicy:
    """Feedback input law ``P_i(a_i | w, a^{i-1}, b^{i-1})`` for ``i = 0..n``.

    ``tables[i]`` has one row per step-``i`` history (lexicographic order)
    and one column per input symbol.
    """

    tables: tuple
    n_in: int
    n_out: int
    window: int = 0
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        tables = []
        total = 0
        for i, t in enumerate(self.tables):
            t = np.asarray(t, dtype=float)
            rows = _n_rows(self.n_in, self.n_out, self.window, i)
            total += rows * self.n_in
            if total > self.cap:
                raise ResourceError(
                    f"full-history policy needs more than {self.cap} entries (cap); "
                    "reduce the horizon or raise cap"
                )
            if t.shape != (rows, self.n_in):
                raise DomainError(f"policy table {i} has shape {t.shape}, expected {(rows, self.n_in)}")
            t = check_simplex(t, what=f"policy table {i}")
            t.setflags(write=False)
            tables.append(t)
        if not tables:
            raise DomainError("policy needs at least one stage")
        object.__setattr__(self, "tables", tuple(tables))

    @property
    def n(self) -> int:
        return len(self.tables) - 1

    @classmethod
    def uniform(cls, n_in, n_out, n, window=0, cap=DEFAULT_CAP):
        return cls(
            tuple(np.full((_n_rows(n_in, n_out, window, i), n_in), 1.0 / n_in) for i in range(n + 1)),
            n_in, n_out, window, cap,
        )

    @classmethod
    def random(cls, rng, n_in, n_out, n, window=0, cap=DEFAULT_CAP):
        return cls(
            tuple(rng.dirichlet(np.ones(n_in), size=_n_rows(n_in, n_out, window, i)) for i in range(n + 1)),
            n_in, n_out, window, cap,
        )

    @classmethod
    def from_markov(cls, policy, n: int, n_out: int, window: Optional[int] = None, cap=DEFAULT_CAP):
        """Embed a (possibly time-varying) window policy as a full-history one.

        ``policy`` is a :class:`MarkovInputPolicy` used at every step, or a
        sequence of ``n + 1`` of them.
        """
        policies = [policy] * (n + 1) if isinstance(policy, MarkovInputPolicy) else list(policy)
        if len(policies) != n + 1:
            raise DomainError(f"need {n + 1} stage policies, got {len(policies)}")
        J = max(p.J for p in policies)
        window = J if window is None else window
        if window < J:
            raise DomainError(f"initial window {window} shorter than policy memory {J}")
        n_in = policies[0].n_in
        _check_cap(n_in, n_out, window, n, cap)
        states = window_states(n_in, n_out, window, n)
        tables = []
        for i, p in enumerate(policies):
            if p.pi.shape[0] != n_out ** p.J:
                raise DomainError(f"stage {i} policy has {p.pi.shape[0]} rows, expected {n_out ** p.J}")
            tables.append(p.pi[(states[i] % n_out ** p.J).reshape(-1)])
        return cls(tuple(tables), n_in, n_out, window, cap)


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """``mass[w, a_0, b_0, ..., a_n, b_n]``."""

    mass: np.ndarray
    n: int
    window: int

    def output_marginal(self) -> np.ndarray:
        """Law of ``(w, b_0, ..., b_n)``, inputs summed out."""
        return self.mass.sum(axis=_input_axes(self.n))

    @property
    def total(self) -> float:
        return float(self.mass.sum())


@dataclass(frozen=True, eq=False)
class OutputKernelSeq:
    """Output kernels ``V_i(b_i | .)`` for ``i = 0..n``.

    With ``order=None`` kernel ``i`` is indexed by the full output history
    ``(w, b_0, ..., b_{i-1})`` (``W * |B|^i`` rows); with an integer order it
    is indexed by the encoded last-``order`` outputs.
    """

    kernels: tuple
    order: Optional[int] = None

    def __post_init__(self):
        ks = tuple(check_simplex(k, what=f"output kernel {i}") for i, k in enumerate(self.kernels))
        object.__setattr__(self, "kernels", ks)


class _Tree:
    """Channel quantities along every history, shared by repeated evaluations."""

    def __init__(self, channel: FiniteChannelKernel, n: int, window: int, cap=DEFAULT_CAP):
        if window < channel.M:
            raise DomainError(f"initial window {window} shorter than channel memory {channel.M}")
        self.channel = channel
        self.n, self.window = n, window
        self.A, self.B = channel.n_in, channel.n_out
        _check_cap(self.A, self.B, window, n, cap)
        self.states = window_states(self.A, self.B, window, n)
        msize = self.B ** channel.M
        self.q = [channel.q[st % msize] for st in self.states]
        with np.errstate(divide="ignore"):
            self.logq = [np.log(q) for q in self.q]

    def hist_shape(self, i):
        return history_shape(self.A, self.B, self.window, i)

    def check_initial(self, initial) -> np.ndarray:
        W = self.B ** self.window
        mu = uniform(W) if initial is None else check_simplex(initial, what="initial window law")
        if mu.shape != (W,):
            raise DomainError(f"initial law must have {W} entries (|B|^{self.window}), got {mu.shape}")
        return mu

    def forward(self, tables, mu):
        """Prefix masses ``m_i`` over ``(w, a_0, b_0, ..., a_i, b_i)``."""
        masses = []
        prev = mu
        for i in range(self.n + 1):
            p = tables[i].reshape(self.hist_shape(i) + (self.A,))
            m = prev[..., None, None] * p[..., None] * self.q[i]
            masses.append(m)
            prev = m
        return masses

    def log_ratios(self, masses):
        """``log Q_i - log Pi_i`` at every atom, plus the output conditionals."""
        out = []
        pis = []
        for i, m in enumerate(masses):
            joint_out = m.sum(axis=_input_axes(i), keepdims=True)
            prefix = joint_out.sum(axis=-1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                pi = np.where(prefix > 0, joint_out / np.where(prefix > 0, prefix, 1.0), 0.0)
                log_pi = np.maximum(np.log(pi), _LOG_FLOOR)
            ratio = self.logq[i] - log_pi
            ratio = np.where((prefix > 0) & (self.q[i] > 0), ratio, 0.0)
            out.append(ratio)
            pis.append(pi)
        return out, pis

    def backward(self, tables, ratios, stage_reward=None):
        """``U_i(h, a)``: expected future log-ratio sum (plus rewards) given h, a_i = a.

        ``stage_reward[i]`` has shape hist(i) + (A,) when given.
        """
        U = [None] * (self.n + 1)
        nxt = None
        for i in range(self.n, -1, -1):
            inner = ratios[i]
            if nxt is not None:
                inner = inner + nxt
            u = np.sum(self.q[i] * inner, axis=-1)
            if stage_reward is not None:
                u = u + stage_reward[i]
            U[i] = u
            p = tables[i].reshape(self.hist_shape(i) + (self.A,))
            nxt = np.sum(p * u, axis=-1)
        return U


def _policy_tree(channel, policy: FullHistoryPolicy, n, cap=None):
    if policy.n_in != channel.n_in or policy.n_out != channel.n_out:
        raise DomainError("policy and channel alphabets disagree")
    if n is not None and n != policy.n:
        raise DomainError(f"horizon n={n} but policy covers {policy.n}")
    return _Tree(channel, policy.n, policy.window, policy.cap if cap is None else cap)


def build_joint(channel: FiniteChannelKernel, policy: FullHistoryPolicy, initial=None,
                n: Optional[int] = None) -> JointDistribution:
    """Joint law of ``(w, a^n, b^n)`` induced by the channel and the policy.

    ``initial`` is the law of the initial output window (``|B|^window``
    entries, default uniform).
    """
    tree = _policy_tree(channel, policy, n)
    mu = tree.check_initial(initial)
    masses = tree.forward(policy.tables, mu)
    return JointDistribution(masses[-1], policy.n, policy.window)


def _directed_terms(channel, policy, initial, n):
    tree = _policy_tree(channel, policy, n)
    mu = tree.check_initial(initial)
    masses = tree.forward(policy.tables, mu)
    ratios, _ = tree.log_ratios(masses)
    return np.array([float(np.sum(m * r)) for m, r in zip(masses, ratios)])


def directed_information(channel: FiniteChannelKernel, policy: FullHistoryPolicy, initial=None,
                         n: Optional[int] = None) -> float:
    """``I(A^n -> B^n)`` in nats by full enumeration."""
    return float(np.sum(_directed_terms(channel, policy, initial, n)))


def _kernel_at_atoms(tree: _Tree, V: OutputKernelSeq, i: int) -> np.ndarray:
    """``V_i`` broadcast against a step-``i`` atom array."""
    k = V.kernels[i]
    B, W = tree.B, tree.B ** tree.window
    if V.order is None:
        if k.shape != (W * B ** i, B):
            raise DomainError(f"output kernel {i} has shape {k.shape}, expected {(W * B ** i, B)}")
        arr = k.reshape((W,) + (B,) * (i + 1))
        return np.expand_dims(arr, _input_axes(i))
    if V.order > tree.window:
        raise DomainError(f"kernel order {V.order} exceeds initial window {tree.window}")
    if k.shape != (B ** V.order, B):
        raise DomainError(f"output kernel {i} has shape {k.shape}, expected {(B ** V.order, B)}")
    return k[tree.states[i] % B ** V.order][..., None, :]


def variational_objective(channel: FiniteChannelKernel, policy: FullHistoryPolicy, initial,
                          n: Optional[int], V: OutputKernelSeq) -> float:
    """``sum_i E[log Q(B_i|., A_i) / V_i(B_i|.)]``; ``inf`` if some V_i misses mass."""
    tree = _policy_tree(channel, policy, n)
    mu = tree.check_initial(initial)
    if len(V.kernels) != tree.n + 1:
        raise DomainError(f"need {tree.n + 1} output kernels, got {len(V.kernels)}")
    masses = tree.forward(policy.tables, mu)
    total = 0.0
    for i, m in enumerate(masses):
        v = np.broadcast_to(_kernel_at_atoms(tree, V, i), m.shape)
        live = m > 0
        if np.any(v[live] == 0):
            return float("inf")
        total += float(np.sum(m[live] * (tree.logq[i][live] - np.log(v[live]))))
    return total


def expected_kl_gap(channel: FiniteChannelKernel, policy: FullHistoryPolicy, initial,
                    n: Optional[int], V: OutputKernelSeq) -> float:
    """``sum_i E[ D(Pi_i(.|B^{i-1}) || V_i(.|B^{i-1})) ]`` over output prefixes."""
    tree = _policy_tree(channel, policy, n)
    mu = tree.check_initial(initial)
    masses = tree.forward(policy.tables, mu)
    _, pis = tree.log_ratios(masses)
    total = 0.0
    for i, m in enumerate(masses):
        axes = _input_axes(i)
        prefix = m.sum(axis=axes + (m.ndim - 1,))  # (w, b_0 .. b_{i-1})
        pi = np.squeeze(pis[i], axis=axes)         # (w, b_0 .. b_i)
        v = _kernel_at_atoms(tree, V, i)
        if V.order is not None:
            v = v[(slice(None),) + tuple(0 if ax in axes else slice(None) for ax in range(1, v.ndim))]
        else:
            v = np.squeeze(v, axis=axes)
        v = np.broadcast_to(v, pi.shape)
        live = (pi > 0) & (prefix[..., None] > 0)
        if np.any(v[live] == 0):
            return float("inf")
        contrib = np.zeros_like(pi)
        contrib[live] = pi[live] * (np.log(pi[live]) - np.log(v[live]))
        total += float(np.sum(prefix * contrib.sum(axis=-1)))
    return total


def induced_output_kernels(channel, policy: FullHistoryPolicy, initial=None, n=None) -> OutputKernelSeq:
    """The output conditionals ``Pi_i(b_i | w, b^{i-1})`` as a full-history sequence.

    Unreachable prefixes get a uniform row.
    """
    tree = _policy_tree(channel, policy, n)
    mu = tree.check_initial(initial)
    masses = tree.forward(policy.tables, mu)
    _, pis = tree.log_ratios(masses)
    ks = []
    for i, pi in enumerate(pis):
        rows = np.squeeze(pi, axis=_input_axes(i)).reshape(-1, tree.B)
        dead = rows.sum(axis=1) == 0
        rows[dead] = 1.0 / tree.B
        ks.append(rows)
    return OutputKernelSeq(tuple(ks))


class StageRates(NamedTuple):
    per_stage: np.ndarray
    total: float


def stationary_rate_via_states(channel: FiniteChannelKernel,
                               policy: Union[MarkovInputPolicy, Sequence[MarkovInputPolicy]],
                               initial=None, n: int = 0) -> StageRates:
    """Directed information of a window policy by propagating the window law.

    The policy (one per stage, or one reused) conditions on ``J >= M`` past
    outputs, so the output process is ``J``-th order Markov and each stage
    contributes ``E[D(Q(.|s, A) || nu(.|s))]`` under the current window law.
    """
    policies = [policy] * (n + 1) if isinstance(policy, MarkovInputPolicy) else list(policy)
    if len(policies) != n + 1:
        raise DomainError(f"need {n + 1} stage policies, got {len(policies)}")
    J = policies[0].J
    if any(p.J != J for p in policies):
        raise DomainError("all stage policies must share one window order")
    if J < channel.M:
        raise DomainError(f"policy memory J={J} below channel memory M={channel.M}")
    B = channel.n_out
    S = B ** J
    rho = uniform(S) if initial is None else check_simplex(initial, what="initial window law")
    if rho.shape != (S,):
        raise DomainError(f"initial law must have {S} entries, got {rho.shape}")
    q = channel.lifted(J)                                  # (S, A, B)
    nxt = (np.arange(S)[:, None] * B + np.arange(B)) % S   # (S, B)
    terms = np.empty(n + 1)
    for i, p in enumerate(policies):
        pi = p.pi
        if pi.shape != (S, channel.n_in):
            raise DomainError(f"stage {i} policy has shape {pi.shape}, expected {(S, channel.n_in)}")
        nu = np.einsum("sa,sab->sb", pi, q)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.where(q > 0, np.log(q) - np.log(nu[:, None, :]), 0.0)
        stage = np.sum(q * lr, axis=-1)                    # (S, A)
        weight = rho[:, None] * pi
        terms[i] = float(np.sum(np.where(weight > 0, weight * stage, 0.0)))
        rho_next = np.zeros(S)
        np.add.at(rho_next, nxt.ravel(), (rho[:, None] * nu).ravel())
        rho = rho_next
    return StageRates(terms, float(terms.sum()))
