"""Acceptance checks bundled with the package, grouped into suites.

Every check compares a solver with an oracle that does not share its code
path: closed forms evaluated in extended precision, dense grids, or brute
enumeration.  A check returns a :class:`CheckResult`; suites are lists of
checks.
"""
from __future__ import annotations

import math
import time
from typing import Callable, NamedTuple, Optional

import numpy as np

from .directed_info import (FullHistoryPolicy, OutputKernelSeq, build_joint, directed_information,
                            induced_output_kernels, variational_objective)
from .dp import dual_objective, dual_search, finite_horizon_dp, relative_value_iteration
from .gaussian import (GaussianMatrixParams, GaussianScalarParams, matrix_riccati_solve, rate_loss,
                       scalar_solve)
from .oracle import OracleConfig, evaluate_restricted_vs_full, maximize_full_history
from .prob import FiniteChannelKernel, TransmissionCost, bsc, random_kernel

LN2 = math.log(2)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _bits(x):
    return x / LN2


# -- Gaussian ---------------------------------------------------------------------


def check_unstable_threshold() -> CheckResult:
    """C=2, Q=0: kappa_min = 3, zero capacity there, 0.5 bit at kappa=7, 1 bit rate loss."""
    def run():
        at3 = scalar_solve(GaussianScalarParams(C=2.0, Q=0.0, kappa=3.0))
        at7 = scalar_solve(GaussianScalarParams(C=2.0, Q=0.0, kappa=7.0))
        loss = rate_loss(GaussianScalarParams(C=0.5, kappa=7.0), GaussianScalarParams(C=2.0, kappa=7.0))
        return at3, at7, loss

    elapsed = min(_timed(run)[1] for _ in range(5))
    at3, at7, loss = run()
    errs = (abs(at3.capacity_nats), abs(at7.capacity_bits - 0.5), abs(_bits(loss) - 1.0))
    ok = at3.kappa_min == 3.0 and errs[0] <= 1e-12 and errs[1] <= 1e-10 and errs[2] <= 1e-10 and elapsed < 1e-3
    return CheckResult("gaussian unstable threshold", ok,
                       f"kappa_min={at3.kappa_min!r} C(3)={at3.capacity_nats:.3e} "
                       f"|C(7)-0.5b|={errs[1]:.1e} |loss-1b|={errs[2]:.1e} t={elapsed * 1e3:.3f}ms")


def check_stable_degeneration() -> CheckResult:
    """Stable pole with Q=0 (and Q=C=0) gives the memoryless curve."""
    kappas = np.linspace(0.0, 20.0, 100)
    worst = 0.0
    for C, K_V in ((0.5, 1.0), (-0.9, 1.0), (0.3, 2.5), (0.0, 1.0), (0.0, 2.5)):
        for k in kappas:
            got = scalar_solve(GaussianScalarParams(C=C, Q=0.0, K_V=K_V, kappa=float(k))).capacity_bits
            worst = max(worst, abs(got - 0.5 * math.log2(1.0 + k / K_V)))
    return CheckResult("gaussian stable degeneration", worst <= 1e-10, f"max err {worst:.2e} bits")


def _riccati_closed_form(C, Q, R, s):
    F = math.sqrt((R * (C - 1) ** 2 + Q) * (R * (C + 1) ** 2 + Q))
    return s * (Q - R + C * C * R + F) / 2.0, -C * (Q - R + C * C * R + F) / (Q + R + C * C * R + F)


def check_riccati(seed: int = 0xA11CE) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst_p = worst_g = 0.0
    unstable = 0
    for _ in range(100):
        C, Q, R, s = rng.uniform(-3, 3), rng.uniform(0, 2), rng.uniform(0.1, 2), rng.uniform(0.01, 10)
        sol = matrix_riccati_solve(GaussianMatrixParams(C, 1.0, R, Q, 1.0), s)
        P, g = _riccati_closed_form(C, Q, R, s)
        worst_p = max(worst_p, abs(sol.P[0, 0] - P))
        worst_g = max(worst_g, abs(sol.gamma_star[0, 0] - g))
        unstable += abs(C + sol.gamma_star[0, 0]) >= 1
    elapsed = time.perf_counter() - t0
    ok = worst_p <= 1e-9 and worst_g <= 1e-9 and unstable == 0 and elapsed < 1.0
    return CheckResult("riccati cross-check", ok,
                       f"max|dP|={worst_p:.1e} max|dGamma|={worst_g:.1e} unstable={unstable} t={elapsed:.3f}s")


def _unit_weight_capacity(C, kappa):
    import mpmath as mp

    with mp.workdps(40):
        C, kappa = mp.mpf(C), mp.mpf(kappa)
        F = mp.sqrt(C ** 4 + 4)
        if kappa < (F + C ** 2) / 2:
            return 0.0
        return float(mp.log(2 * (kappa + 1) / (F + C ** 2 + 2)) / 2)


def check_q_r_one_curve() -> CheckResult:
    kappas = np.linspace(0.0, 10.0, 50)
    worst, monotone = 0.0, True
    curves = []
    for C in (0.0, 0.5, 1.0, 2.0):
        row = []
        for k in kappas:
            got = scalar_solve(GaussianScalarParams(C=C, Q=1.0, R=1.0, kappa=float(k))).capacity_nats
            worst = max(worst, abs(got - _unit_weight_capacity(C, float(k))))
            row.append(got)
        curves.append(row)
    curves = np.array(curves)
    monotone = bool(np.all(np.diff(curves, axis=0) <= 0))
    return CheckResult("gaussian Q=R=1 curve", worst <= 1e-10 and monotone,
                       f"max err {worst:.2e} nats, nonincreasing in |C|: {monotone}")


# -- finite alphabet ----------------------------------------------------------------


def _bsc_mi(p, eps):
    """I(A;B) in nats for input law (1-p, p), vectorized over p."""
    def h(x):
        x = np.clip(x, 1e-300, 1.0)
        y = np.clip(1.0 - x, 1e-300, 1.0)
        return -(x * np.log(x) + y * np.log(y))
    return h(p * (1 - eps) + (1 - p) * eps) - h(np.asarray(eps))


def check_bsc_memoryless() -> CheckResult:
    eps = 0.1
    ch = bsc(eps)
    t0 = time.perf_counter()
    r = relative_value_iteration(ch)
    elapsed = time.perf_counter() - t0
    grid = np.linspace(0.0, 1.0, 1_000_001)
    oracle = float(_bsc_mi(grid, eps).max())
    fh = finite_horizon_dp(ch, n=4)
    pols = np.stack([r.policy.pi] + [p.pi for p in fh.policies]).reshape(-1, 2)
    spread = float(np.ptp(pols, axis=0).max())
    err = abs(_bits(r.j_star) - _bits(oracle))
    ok = err <= 1e-6 and abs(_bits(r.j_star) - 0.531004) <= 1e-6 and spread <= 1e-9 and elapsed < 0.1
    return CheckResult("finite BSC memoryless", ok,
                       f"jStar={_bits(r.j_star):.9f} bits oracle={_bits(oracle):.9f} "
                       f"policy spread={spread:.1e} t={elapsed * 1e3:.1f}ms")


def check_information_structure(restarts: int = 3) -> CheckResult:
    """Markov J=1 policies lose nothing against full-history search on UMCO channels."""
    t0 = time.perf_counter()
    worst = 0.0
    cfg = OracleConfig(restarts=restarts)
    for seed in range(20):
        ch = random_kernel(np.random.default_rng(seed), 2, 2, M=1)
        dp = finite_horizon_dp(ch, n=2, J=1).value
        full = maximize_full_history(ch, n=2, config=cfg).value
        worst = max(worst, abs(dp - full))
    elapsed = time.perf_counter() - t0
    return CheckResult("information structure (oracle)", worst <= 1e-5 and elapsed < 30,
                       f"max|DP-oracle|={worst:.1e} over 20 channels t={elapsed:.1f}s")


# Z-channels that favour opposite inputs in the two output states; a policy
# that ignores the last output (J=0) loses about 0.022 nats at n=2
ZZ_UMCO = np.array([[[1.0, 0.0], [0.5, 0.5]], [[0.5, 0.5], [0.0, 1.0]]])


def check_restriction(J: int = 1, restarts: int = 3) -> CheckResult:
    """The best J-window policy matches full-history search; J below M is a deliberate failure."""
    ch = FiniteChannelKernel(ZZ_UMCO, M=1)
    rep = evaluate_restricted_vs_full(ch, n=2, J=J, config=OracleConfig(restarts=restarts))
    return CheckResult(f"restriction J={J} lossless", rep.gap <= 1e-5,
                       f"gap={rep.gap:.6g} nats (restricted {rep.restricted_value:.9f}, full {rep.full_value:.9f})")


def _pi_kernels(joint, n, B):
    """Output conditionals from the joint law, prefix masses alongside."""
    marg = joint.output_marginal()  # (w, b_0, ..., b_n)
    out = []
    for i in range(n + 1):
        upto = marg.sum(axis=tuple(range(i + 2, n + 2))) if i < n else marg
        prefix = upto.sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(prefix[..., None] > 0, upto / prefix[..., None], 1.0 / B)
        out.append((prefix.reshape(-1), cond.reshape(-1, B)))
    return out


def _kl_rows(p, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0) / q), 0.0)
    return t.sum(axis=-1)


def check_variational(seed: int = 0xBEEF, pairs: int = 50, kernels: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_gap = worst_eq = 0.0
    below = 0
    for _ in range(pairs):
        A, B = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        M = int(rng.integers(0, 2))
        n = int(rng.integers(0, 4 - M))
        ch = random_kernel(rng, A, B, M=M)
        pol = FullHistoryPolicy.random(rng, A, B, n, window=M)
        W = B ** M
        initial = rng.dirichlet(np.ones(W))
        di = directed_information(ch, pol, initial)
        worst_eq = max(worst_eq, abs(variational_objective(ch, pol, initial, n,
                                                           induced_output_kernels(ch, pol, initial)) - di))
        pis = _pi_kernels(build_joint(ch, pol, initial), n, B)
        for _k in range(kernels):
            V = [rng.dirichlet(np.full(B, 0.5), size=W * B ** i) for i in range(n + 1)]
            V = [np.maximum(v, 1e-3) / np.maximum(v, 1e-3).sum(axis=1, keepdims=True) for v in V]
            val = variational_objective(ch, pol, initial, n, OutputKernelSeq(tuple(V)))
            kl = sum(float(prefix @ _kl_rows(cond, v)) for (prefix, cond), v in zip(pis, V))
            below += val < di - 1e-12
            worst_gap = max(worst_gap, abs((val - di) - kl))
    ok = below == 0 and worst_gap <= 1e-10 and worst_eq <= 1e-12
    return CheckResult("variational equality", ok,
                       f"violations={below} max|gap-KL|={worst_gap:.1e} max|at Pi|={worst_eq:.1e}")


def _grid_dual(eps, kappa, p_pts=20_001, s_pts=4_001, s_hi=4.0):
    p = np.linspace(0.0, 1.0, p_pts)
    mi = _bsc_mi(p, eps)
    best = math.inf
    for chunk in np.array_split(np.linspace(0.0, s_hi, s_pts), 20):
        vals = (mi[None, :] - chunk[:, None] * (p[None, :] - kappa)).max(axis=1)
        best = min(best, float(vals.min()))
    return best


def check_constrained_duality() -> CheckResult:
    eps = 0.1
    ch = bsc(eps)
    worst_cap = worst_cost = 0.0
    convex = True
    for kappa in (0.1, 0.3, 0.5):
        cost = TransmissionCost(np.array([[0.0, 1.0]]), K=0, kappa=kappa)
        res = dual_search(ch, cost)
        worst_cap = max(worst_cap, abs(res.capacity_nats - _grid_dual(eps, kappa)))
        if res.binding:
            worst_cost = max(worst_cost, abs(res.avg_cost - kappa))
        s = np.linspace(0.0, 2.0, 20)
        f = np.array([dual_objective(ch, cost, kappa, x) for x in s])
        mid = np.array([dual_objective(ch, cost, kappa, x) for x in 0.5 * (s[1:] + s[:-1])])
        convex &= bool(np.all(mid <= 0.5 * (f[1:] + f[:-1]) + 1e-8))
    ok = worst_cap <= 1e-4 and worst_cost <= 1e-6 and convex
    return CheckResult("constrained duality", ok,
                       f"max|cap-grid|={worst_cap:.1e} max|cost-kappa|={worst_cost:.1e} convex={convex}")


UMCO_FIXTURE = np.array([[[0.9, 0.1], [0.1, 0.9]], [[0.7, 0.3], [0.3, 0.7]]])


def check_per_unit_time(n: int = 200) -> CheckResult:
    ch = FiniteChannelKernel(UMCO_FIXTURE, M=1)
    fh = finite_horizon_dp(ch, n=n).value / (n + 1)
    j = relative_value_iteration(ch).j_star
    return CheckResult("per-unit-time consistency", abs(fh - j) <= 1e-4,
                       f"FH/(n+1)={fh:.9f} jStar={j:.9f} diff={abs(fh - j):.1e}")


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# keyed by acceptance criterion number
CRITERIA: dict = {
    1: check_unstable_threshold,
    2: check_stable_degeneration,
    3: check_riccati,
    4: check_q_r_one_curve,
    5: check_bsc_memoryless,
    6: check_information_structure,
    7: check_variational,
    8: check_constrained_duality,
    9: check_per_unit_time,
}

SUITES = {
    "gaussian": (1, 2, 3, 4),
    "finite": (5, 8, 9),
    "oracle": (6,),
    "variational": (7,),
}
SUITE_NAMES = tuple(SUITES) + ("all",)


def run_suite(name: str, restrict_j: Optional[int] = None) -> list:
    """Run a suite; ``restrict_j`` adds a restriction check at that window order."""
    if name not in SUITE_NAMES:
        raise KeyError(name)
    names = tuple(SUITES) if name == "all" else (name,)
    checks: list[Callable[[], CheckResult]] = [CRITERIA[c] for s in names for c in SUITES[s]]
    if "oracle" in names:
        checks.append(lambda: check_restriction(1 if restrict_j is None else restrict_j))
    return [c() for c in checks]


def format_table(rows) -> str:
    width = max(len(r.name) for r in rows)
    return "\n".join(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}" for r in rows)
