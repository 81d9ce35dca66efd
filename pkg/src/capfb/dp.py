"""Dynamic programming over windows of past outputs.

Every stage of the backward recursion is a cost-weighted capacity problem
per window state ``s``::

    maximize  sum_a pi(a) [ D(Q(.|s,a) || nu_pi(.|s)) + r(a, s) ]

with ``r(a, s) = -s_L * gamma(a, s) + sum_b Q(b|s,a) C_next(shift(s, b))``.
It is solved by the Blahut-Arimoto update with the reward in the exponent.
Infinite-horizon values come from relative value iteration and the cost
budget is handled by bisection on the Lagrange multiplier.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, DomainError, ErgodicityError
from .prob import (
    FiniteChannelKernel,
    MarkovInputPolicy,
    TransmissionCost,
    check_simplex,
    memory_order,
    shift_table,
    uniform,
)

log = logging.getLogger(__name__)

TOL_INNER = 1e-10
TOL_OUTER = 1e-8
TOL_SPAN = 1e-10
MAX_ITER = 100_000
S_MAX = 1e6


class StageResult(NamedTuple):
    pi: np.ndarray
    value: np.ndarray
    bracket: np.ndarray
    iterations: int


def _stage_scores(q, pi, reward):
    """KL(Q_a || nu) + r_a for every (state, input), and the objective F."""
    nu = np.einsum("sa,sab->sb", pi, q)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(q > 0, np.log(q) - np.log(nu[:, None, :]), 0.0)
    score = np.sum(q * lr, axis=-1) + reward
    f = np.sum(np.where(pi > 0, pi * score, 0.0), axis=-1)
    return score, f


def stage_maximize(q, reward=None, tol: float = TOL_INNER, max_iter: int = MAX_ITER,
                   init=None) -> StageResult:
    """Maximize mutual information plus a linear reward over the input simplex.

    ``q`` is one channel slice ``(A, B)`` or a stack ``(S, A, B)`` solved
    independently per state.  Iterates ``pi <- pi * exp(eta * (KL_a + r_a))``
    and stops once ``max_a [KL_a + r_a] - F(pi) < tol`` in every state; that
    gap upper-bounds the distance to the optimum because ``F`` is concave.
    ``eta = 1`` is the Blahut-Arimoto step.  A larger ``eta`` is tried
    first and kept (and doubled) only when it shrinks the bracket, otherwise
    the plain step is taken; this matters for nearly flat problems where
    the plain step crawls.  Starting from uniform, uninformative slices
    return uniform.
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 2
    if single:
        q = q[None]
    S, A, _ = q.shape
    reward = np.zeros((S, A)) if reward is None else np.asarray(reward, dtype=float).reshape(S, A)
    if not np.all(np.isfinite(reward)):
        raise DomainError("stage rewards must be finite")
    if tol <= 0:
        raise DomainError("tol must be positive")
    pi = np.full((S, A), 1.0 / A) if init is None else np.array(init, dtype=float).reshape(S, A)
    # restore full support so the update can reach every input
    pi = np.maximum(pi, 1e-12)
    pi /= pi.sum(axis=1, keepdims=True)

    eta = np.full(S, 2.0)
    score, f = _stage_scores(q, pi, reward)
    gap = score.max(axis=1) - f
    for it in range(1, max_iter + 1):
        active = gap >= tol
        if not np.any(active):
            break
        shifted = score - score.max(axis=1, keepdims=True)
        w = pi * np.exp(eta[:, None] * shifted)
        cand = w / w.sum(axis=1, keepdims=True)
        c_score, c_f = _stage_scores(q, cand, reward)
        c_gap = c_score.max(axis=1) - c_f
        # an over-relaxed step is kept only if it shrinks the bracket; else plain BA
        good = active & (c_gap < gap)
        plain = active & ~good
        if np.any(plain):
            w = pi * np.exp(shifted)
            ba = w / w.sum(axis=1, keepdims=True)
            b_score, b_f = _stage_scores(q, ba, reward)
            cand = np.where(plain[:, None], ba, cand)
            c_score = np.where(plain[:, None], b_score, c_score)
            c_f = np.where(plain, b_f, c_f)
        pi = np.where(active[:, None], cand, pi)
        score = np.where(active[:, None], c_score, score)
        f = np.where(active, c_f, f)
        gap = score.max(axis=1) - f
        eta = np.where(good, np.minimum(eta * 2.0, 1e8), np.where(plain, np.maximum(eta * 0.5, 2.0), eta))
    else:
        raise ConvergenceError(
            f"stage maximization did not reach tol={tol} in {max_iter} iterations "
            f"(bracket {float(gap.max()):.3e})",
            best=pi[0] if single else pi, residual=float(gap.max()), iterations=max_iter,
        )
    if single:
        return StageResult(pi[0], f[0], gap[0], it)
    return StageResult(pi, f, gap, it)


@dataclass(frozen=True, eq=False)
class StageProblem:
    """Channel and cost lifted to ``J``-windows, ready for backward sweeps."""

    q: np.ndarray         # (S, A, B)
    gamma: np.ndarray     # (S, A)
    nxt: np.ndarray       # (S, B)
    J: int

    @classmethod
    def build(cls, channel: FiniteChannelKernel, cost: Optional[TransmissionCost] = None,
              J: Optional[int] = None):
        need = memory_order(channel, cost)
        J = need if J is None else J
        if J < need:
            raise DomainError(f"window order J={J} below max(M, K)={need}")
        if cost is not None and cost.table.shape[1] != channel.n_in:
            raise DomainError("cost table and channel disagree on the input alphabet")
        q = channel.lifted(J)
        gamma = np.zeros(q.shape[:2]) if cost is None else cost.lifted(J, channel.n_out)
        return cls(q, gamma, shift_table(J, channel.n_out), J)

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    def rewards(self, s_l: float, c_next: np.ndarray) -> np.ndarray:
        return -s_l * self.gamma + np.einsum("sab,sb->sa", self.q, c_next[self.nxt])

    def sweep(self, s_l, c_next, tol, max_iter, init=None) -> StageResult:
        return stage_maximize(self.q, self.rewards(s_l, c_next), tol, max_iter, init)

    def transition(self, pi: np.ndarray) -> np.ndarray:
        """Window-to-window transition matrix under ``pi``."""
        nu = np.einsum("sa,sab->sb", pi, self.q)
        T = np.zeros((self.n_states, self.n_states))
        np.add.at(T, (np.repeat(np.arange(self.n_states), nu.shape[1]), self.nxt.ravel()), nu.ravel())
        return T

    def average_cost(self, pi: np.ndarray) -> tuple:
        """Stationary average cost under ``pi`` and the chain diagnostics."""
        T = self.transition(pi)
        rho, ergodic = stationary_distribution(T)
        return float(rho @ np.sum(pi * self.gamma, axis=1)), rho, ergodic


class FiniteHorizonResult(NamedTuple):
    value: float
    policies: list
    values: np.ndarray


def finite_horizon_dp(channel: FiniteChannelKernel, cost: Optional[TransmissionCost] = None,
                      s_l: float = 0.0, n: int = 0, initial=None, J: Optional[int] = None,
                      tol: float = TOL_INNER, max_iter: int = MAX_ITER) -> FiniteHorizonResult:
    """Backward recursion for ``sup E[sum_i log dQ/dnu - s_l * gamma]`` over ``n+1`` uses.

    Returns the cost-to-go at time 0 averaged over the initial window law
    (``|B|^J`` entries, default uniform), the stage policies ``pi_0..pi_n``
    and the per-window values ``C_0``.  The ``(n+1) * kappa`` term of the
    Lagrangian is not included.
    """
    if n < 0:
        raise DomainError("horizon n must be >= 0")
    if s_l < 0:
        raise DomainError("multiplier must be >= 0")
    prob = StageProblem.build(channel, cost, J)
    S = prob.n_states
    mu = uniform(S) if initial is None else check_simplex(initial, what="initial window law")
    if mu.shape != (S,):
        raise DomainError(f"initial law must have {S} entries, got {mu.shape}")
    c = np.zeros(S)
    policies = [None] * (n + 1)
    pi = None
    for t in range(n, -1, -1):
        res = prob.sweep(s_l, c, tol, max_iter, init=pi)
        pi, c = res.pi, res.value
        policies[t] = MarkovInputPolicy(pi, J=prob.J)
    return FiniteHorizonResult(float(mu @ c), policies, c)


class RVIResult(NamedTuple):
    j_star: float
    rel_value: np.ndarray
    policy: MarkovInputPolicy
    iterations: int
    span: float


def relative_value_iteration(channel: FiniteChannelKernel, cost: Optional[TransmissionCost] = None,
                             s_l: float = 0.0, tol: float = TOL_SPAN, max_iter: int = MAX_ITER,
                             J: Optional[int] = None, tol_inner: Optional[float] = None) -> RVIResult:
    """Per-unit-time optimum by relative value iteration with span stopping.

    ``j_star`` is the midpoint of ``[min, max]`` of ``T h - h`` at exit and
    ``rel_value`` is anchored to 0 at window 0.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    prob = StageProblem.build(channel, cost, J)
    tol_inner = min(TOL_INNER, tol) if tol_inner is None else tol_inner
    h = np.zeros(prob.n_states)
    pi = None
    span = np.inf
    for it in range(1, max_iter + 1):
        res = prob.sweep(s_l, h, tol_inner, MAX_ITER, init=pi)
        pi = res.pi
        diff = res.value - h
        lo, hi = float(diff.min()), float(diff.max())
        span = hi - lo
        h = res.value - res.value[0]
        if span < tol:
            return RVIResult(0.5 * (lo + hi), h, MarkovInputPolicy(pi, J=prob.J), it, span)
    raise ConvergenceError(
        f"relative value iteration span {span:.3e} above tol={tol} after {max_iter} sweeps; "
        "the induced chain may be periodic or not communicating",
        best=h, residual=span, iterations=max_iter,
    )


def stationary_distribution(T: np.ndarray) -> tuple:
    """Unique stationary law of a finite chain, plus an ergodicity flag.

    Raises :class:`ErgodicityError` when there is more than one closed class.
    The flag is True iff the chain is irreducible and aperiodic.
    """
    S = T.shape[0]
    adj = T > 0
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = labels == c
        if not np.any(adj[members][:, ~members]):
            closed.append(c)
    if len(closed) != 1:
        raise ErgodicityError(
            f"induced output chain has {len(closed)} closed classes; "
            "stationary distribution is not unique"
        )
    members = np.flatnonzero(labels == closed[0])
    sub = T[np.ix_(members, members)]
    k = len(members)
    lhs = np.vstack([sub.T - np.eye(k), np.ones((1, k))])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    rho = np.zeros(S)
    rho[members] = np.clip(sol, 0.0, None)
    rho /= rho.sum()
    ergodic = n_comp == 1 and _period(adj) == 1
    return rho, ergodic


def _period(adj: np.ndarray) -> int:
    """Period of a strongly connected digraph via BFS levels."""
    from math import gcd

    S = adj.shape[0]
    level = np.full(S, -1)
    level[0] = 0
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
                else:
                    g = gcd(g, int(level[u] + 1 - level[v]))
        frontier = nxt
    return g if g else 1


@dataclass(frozen=True, eq=False)
class DualSolveResult:
    s_star: float
    j_star: float
    policy: MarkovInputPolicy
    rel_value: np.ndarray
    avg_cost: float
    capacity_nats: float
    kappa: float
    iterations: int = 0
    span: float = 0.0
    ergodic: bool = True
    binding: bool = False

    @property
    def capacity_bits(self) -> float:
        return self.capacity_nats / np.log(2)


def dual_search(channel: FiniteChannelKernel, cost: Optional[TransmissionCost], kappa: Optional[float] = None,
                tol_outer: float = TOL_OUTER, tol_inner: float = TOL_SPAN, max_iter: int = MAX_ITER,
                s_max: float = S_MAX) -> DualSolveResult:
    """Capacity under an average cost budget via ``inf_s [J*(s) + s * kappa]``.

    If the unconstrained optimum already meets the budget it is returned
    with ``s = 0``; otherwise ``s`` is bisected on the nonincreasing map
    ``s -> average cost of the s-optimal stationary policy`` until the cost
    is within ``tol_outer`` of ``kappa``.
    """
    if kappa is None:
        kappa = cost.kappa if cost is not None else float("inf")
    if kappa < 0:
        raise DomainError("kappa must be >= 0")
    prob = StageProblem.build(channel, cost)
    total_iters = 0

    def solve(s):
        nonlocal total_iters
        r = relative_value_iteration(channel, cost, s, tol_inner, max_iter)
        total_iters += r.iterations
        avg, _, ergodic = prob.average_cost(r.policy.pi)
        return r, avg, ergodic

    def result(s, r, avg, ergodic, binding):
        cap = r.j_star + (s * kappa if s > 0 else 0.0)
        if not ergodic:
            log.warning("induced output chain is not irreducible and aperiodic")
        return DualSolveResult(s, r.j_star, r.policy, r.rel_value, avg, max(cap, 0.0), kappa,
                               total_iters, r.span, ergodic, binding)

    r, avg, erg = solve(0.0)
    if cost is None or avg <= kappa + tol_outer:
        return result(0.0, r, avg, erg, False)

    lo, hi = 0.0, 1.0
    while True:
        r_hi, avg_hi, erg_hi = solve(hi)
        if avg_hi <= kappa + tol_outer:
            break
        lo = hi
        hi *= 2.0
        if hi > s_max:
            raise ConvergenceError(
                f"no multiplier up to s_max={s_max:g} brings the average cost "
                f"({avg_hi:.6g}) down to kappa={kappa:.6g}",
                best=lo, residual=avg_hi - kappa,
            )
    best = (hi, r_hi, avg_hi, erg_hi)
    if abs(avg_hi - kappa) < tol_outer:
        return result(*best, True)
    while hi - lo > 1e-15 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        r_m, avg_m, erg_m = solve(mid)
        if abs(avg_m - kappa) < tol_outer:
            return result(mid, r_m, avg_m, erg_m, True)
        if avg_m > kappa:
            lo = mid
        else:
            hi = mid
            best = (mid, r_m, avg_m, erg_m)
    # cost jumps across kappa at s*: the dual value is still exact
    log.info("average cost is discontinuous at s=%g; returning dual value", best[0])
    return result(*best, True)


def dual_objective(channel, cost, kappa, s, tol=TOL_SPAN) -> float:
    """``J*(s) + s * kappa`` (convex in ``s``)."""
    return relative_value_iteration(channel, cost, s, tol).j_star + s * kappa
