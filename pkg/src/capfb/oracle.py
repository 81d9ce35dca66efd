"""Brute-force maximization of directed information over full-history policies.

Only for desk-scale instances.  Directed information is concave in the
causally conditioned input law ``prod_i P_i(a_i | a^{i-1}, b^{i-1})``, and
that product is linear in all rows of a single stage with the others held
fixed.  So each stage is a concave block and the ascent cycles over stages,
updating every row of the block with the Blahut-Arimoto style step
``p(a|h) <- p(a|h) exp(eta * U(h, a))`` where ``U`` is the exact expected
downstream log-ratio given ``(h, a)``.  A step that lowers the objective is
retried with a halved ``eta``, so the objective never decreases.

Tied rows (several histories sharing one parameter row) give the window
restricted policies used to probe how much a too-short window loses.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .directed_info import DEFAULT_CAP, FullHistoryPolicy, _Tree
from .dp import finite_horizon_dp
from .errors import DomainError, ResourceError
from .prob import FiniteChannelKernel, TransmissionCost, memory_order

PARAM_CAP = 10 ** 4
# an accepted step may lower the objective by at most this much (relative)
_SLACK = 1e-13


@dataclass(frozen=True)
class OracleConfig:
    restarts: int = 8
    max_outer_iters: int = 2000
    tol: float = 1e-7
    seed: int = 0x5EED_CAFE

    def __post_init__(self):
        if self.restarts < 1 or self.max_outer_iters < 1 or self.tol <= 0:
            raise DomainError("restarts and max_outer_iters must be >= 1, tol > 0")


class OracleResult(NamedTuple):
    value: float
    policy: FullHistoryPolicy
    bracket: float
    values: np.ndarray       # best value of every restart, in restart order
    trace: list               # objective after every accepted block step (best restart)


class _Ascent:
    def __init__(self, channel, cost, s_l, n, window, initial, ties, cap):
        self.tree = _Tree(channel, n, window, cap)
        self.mu = self.tree.check_initial(initial)
        self.A = channel.n_in
        self.ties = ties
        self.n_rows = [int(t.max()) + 1 for t in ties]
        if sum(self.n_rows) * self.A > PARAM_CAP:
            raise ResourceError(
                f"{sum(self.n_rows) * self.A} policy parameters exceed the oracle cap of {PARAM_CAP}"
            )
        self.reward = None
        if cost is not None and s_l != 0.0:
            K = cost.K
            if window < K:
                raise DomainError(f"initial window {window} shorter than cost memory {K}")
            B = channel.n_out
            self.reward = [-s_l * cost.table[st % B ** K] for st in self.tree.states]

    def tables(self, theta):
        return [th[t] for th, t in zip(theta, self.ties)]

    def evaluate(self, theta):
        tables = self.tables(theta)
        masses = self.tree.forward(tables, self.mu)
        ratios, _ = self.tree.log_ratios(masses)
        U = self.tree.backward(tables, ratios, self.reward)
        value = float(self.mu @ np.sum(tables[0] * U[0].reshape(tables[0].shape), axis=-1))
        return value, masses, U

    def block_gradient(self, i, masses, U):
        """Mass-weighted ``U`` per parameter row of stage ``i`` and the row masses."""
        mass = self.mu if i == 0 else masses[i - 1].reshape(-1)
        u = U[i].reshape(-1, self.A)
        rows = self.n_rows[i]
        g = np.zeros((rows, self.A))
        np.add.at(g, self.ties[i], mass[:, None] * u)
        w = np.bincount(self.ties[i], weights=mass, minlength=rows)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(w[:, None] > 0, g / np.where(w > 0, w, 1.0)[:, None], 0.0)
        return g, w

    @staticmethod
    def _row_gaps(theta_i, g, w):
        return w * (g.max(axis=1) - np.sum(theta_i * g, axis=1))

    def bracket(self, theta, masses, U):
        """Sum over blocks of the concavity gap bound; zero at a block-stationary point."""
        return sum(float(self._row_gaps(theta[i], *self.block_gradient(i, masses, U)).sum())
                   for i in range(len(theta)))

    def run(self, theta, cfg: OracleConfig):
        value, masses, U = self.evaluate(theta)
        trace = [value]
        bracket = np.inf
        # per-row step sizes: rows of one stage can differ wildly in curvature
        etas = [np.ones(r) for r in self.n_rows]
        for _ in range(cfg.max_outer_iters):
            for i in range(len(theta) - 1, -1, -1):
                g, w = self.block_gradient(i, masses, U)
                gaps = self._row_gaps(theta[i], g, w)
                gap = float(gaps.sum())
                if gap < cfg.tol * 1e-3:
                    continue
                scale = max(1.0, abs(value))
                eta = np.minimum(2.0 * etas[i], 1e8)
                for _attempt in range(60):
                    z = theta[i] * np.exp(eta[:, None] * (g - g.max(axis=1, keepdims=True)))
                    cand = list(theta)
                    zs = z.sum(axis=1, keepdims=True)
                    cand[i] = np.where(zs > 0, z / np.where(zs > 0, zs, 1.0), theta[i])
                    v, m, u = self.evaluate(cand)
                    if v >= value - _SLACK * scale:
                        # near the optimum value changes drown in rounding; the
                        # first-order gap still resolves progress
                        c_gaps = self._row_gaps(cand[i], *self.block_gradient(i, m, u))
                        if v > value + 4 * np.finfo(float).eps * scale or c_gaps.sum() < gap:
                            theta, value, masses, U = cand, max(v, value), m, u
                            trace.append(value)
                            eta = np.where(c_gaps > gaps, 0.5 * eta, eta)
                            break
                    eta = 0.5 * eta
                etas[i] = np.clip(eta, 1e-6, 1e8)
            bracket = self.bracket(theta, masses, U)
            if bracket < cfg.tol:
                break
        return value, theta, bracket, trace


def _window_ties(tree: _Tree, J: Optional[int]):
    if J is None:
        return [np.arange(np.prod(tree.hist_shape(i))) for i in range(tree.n + 1)]
    if J > tree.window:
        raise DomainError(f"restriction order J={J} exceeds initial window {tree.window}")
    return [(st % tree.B ** J).reshape(-1) for st in tree.states]


def _solve(channel, cost, s_l, n, initial, window, J, config, cap):
    need = max(memory_order(channel, cost), J or 0)
    window = need if window is None else window
    probe = _Tree(channel, n, window, cap)
    ties = _window_ties(probe, J)
    asc = _Ascent(channel, cost, s_l, n, window, initial, ties, cap)
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    runs = []
    for k, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        if k == 0:
            theta = [np.full((r, asc.A), 1.0 / asc.A) for r in asc.n_rows]
        else:
            theta = [rng.dirichlet(np.ones(asc.A), size=r) for r in asc.n_rows]
        runs.append(asc.run(theta, config))
    values = np.array([r[0] for r in runs])
    best = int(np.argmax(values))  # first maximum: ties go to the earlier seed
    value, theta, bracket, trace = runs[best]
    policy = FullHistoryPolicy(tuple(asc.tables(theta)), channel.n_in, channel.n_out, window, cap)
    return OracleResult(value, policy, bracket, values, trace)


def maximize_full_history(channel: FiniteChannelKernel, cost: Optional[TransmissionCost] = None,
                          s_l: float = 0.0, n: int = 0, initial=None,
                          config: OracleConfig = OracleConfig(), window: Optional[int] = None,
                          cap: int = DEFAULT_CAP) -> OracleResult:
    """Best ``I(A^n -> B^n) - s_l * E[cost]`` found over unrestricted feedback policies.

    ``initial`` is the law of the initial window of ``window`` outputs
    (default ``max(M, K)``).  The value is a certified lower bound; a small
    ``bracket`` certifies stationarity in every stage block.
    """
    return _solve(channel, cost, s_l, n, initial, window, None, config, cap)


def maximize_window_policy(channel, cost=None, s_l=0.0, n=0, initial=None, J=0,
                           config: OracleConfig = OracleConfig(), window=None, cap=DEFAULT_CAP) -> OracleResult:
    """Same ascent with inputs allowed to see only the last ``J`` outputs."""
    return _solve(channel, cost, s_l, n, initial, window, J, config, cap)


class RestrictionReport(NamedTuple):
    restricted_value: float
    full_value: float
    gap: float


def evaluate_restricted_vs_full(channel: FiniteChannelKernel, cost: Optional[TransmissionCost] = None,
                                s_l: float = 0.0, n: int = 0, initial=None, J: int = 0,
                                config: OracleConfig = OracleConfig()) -> RestrictionReport:
    """Compare the best ``J``-window policy with the best full-history policy.

    For ``J >= max(M, K)`` the restricted value comes from the dynamic
    program; for a shorter window (where no finite DP exists) from the tied
    ascent.  Both sides share the initial window law over
    ``max(M, K, J)`` outputs.
    """
    window = max(memory_order(channel, cost), J)
    full = maximize_full_history(channel, cost, s_l, n, initial, config, window=window)
    if J >= memory_order(channel, cost):
        # here window == J, so both solvers read the same initial law
        restricted = finite_horizon_dp(channel, cost, s_l, n, initial, J=J).value
    else:
        restricted = maximize_window_policy(channel, cost, s_l, n, initial, J, config, window=window).value
    return RestrictionReport(restricted, full.value, full.value - restricted)
