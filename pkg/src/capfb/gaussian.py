"""Feedback capacity of the Gaussian linear channel ``B_i = C B_{i-1} + D A_i + V_i``.

The average cost is ``E[<A_i, R A_i> + <B_{i-1}, Q B_{i-1}>] <= kappa`` and
the optimal input is ``A_i = Gamma* B_{i-1} + Z_i`` with ``Z_i ~ N(0, K_Z*)``
independent of the past.  ``Gamma*`` comes from the LQ Riccati equation with
weights ``(s Q, s R)``; ``K_Z*`` maximizes the per-unit-time reward at the
Riccati solution; the multiplier ``s`` is fixed by the budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg, optimize

from .errors import ConvergenceError, DomainError, UnsupportedClosedFormError

EIG_TOL = 1e-10
BELOW_MIN = "belowMin"
ACTIVE = "active"


@dataclass(frozen=True)
class GaussianScalarParams:
    C: float
    D: float = 1.0
    R: float = 1.0
    Q: float = 0.0
    K_V: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.C, self.D, self.R, self.Q, self.K_V, self.kappa)):
            raise DomainError("Gaussian parameters must be finite")
        if self.R <= 0:
            raise DomainError("R must be > 0")
        if self.K_V <= 0:
            raise DomainError("K_V must be > 0")
        if self.Q < 0:
            raise DomainError("Q must be >= 0")
        if self.D == 0:
            raise DomainError("D must be nonzero")
        if self.kappa < 0:
            raise DomainError("kappa must be >= 0")


@dataclass(frozen=True)
class GaussianScalarSolution:
    F: float
    P: float
    gamma_star: float
    kz_star: float
    s: float
    kappa_min: float
    capacity_nats: float
    regime: str
    avg_cost: float

    @property
    def capacity_bits(self) -> float:
        return self.capacity_nats / math.log(2)


def scalar_solve(params: GaussianScalarParams) -> GaussianScalarSolution:
    """Closed-form solution of the scalar channel with ``D = 1``."""
    if params.D != 1:
        raise UnsupportedClosedFormError("closed forms need D = 1; use the matrix path")
    C, R, Q, K_V, kappa = params.C, params.R, params.Q, params.K_V, params.kappa
    F = math.sqrt((R * (C - 1) ** 2 + Q) * (R * (C + 1) ** 2 + Q))
    minus = Q - R + C * C * R + F   # 2 P / s
    plus = Q + R + C * C * R + F
    s = 1.0 / (2.0 * (kappa + K_V * R))
    P = s * minus / 2.0
    gamma = -C * minus / plus
    kappa_min = K_V * minus / 2.0
    if kappa <= kappa_min:
        kz, cap, regime = 0.0, 0.0, BELOW_MIN
    else:
        kz = max(0.0, 1.0 / (s * plus) - K_V)
        cap = max(0.0, 0.5 * math.log(2.0 * (kappa + K_V * R) / (K_V * plus)))
        regime = ACTIVE
    return GaussianScalarSolution(F, P, gamma, kz, s, kappa_min, cap, regime,
                                  scalar_average_cost(C, R, Q, K_V, gamma, kz))


def scalar_average_cost(C, R, Q, K_V, gamma, kz, D=1.0) -> float:
    """Stationary ``E[R A^2 + Q B^2]`` under ``A = gamma B_{-1} + Z``; inf if unstable."""
    pole = C + D * gamma
    if abs(pole) >= 1:
        return math.inf
    var_b = (D * D * kz + K_V) / (1.0 - pole * pole)
    return R * (gamma * gamma * var_b + kz) + Q * var_b


def scalar_capacity(params: GaussianScalarParams, kappas) -> np.ndarray:
    """Capacity in nats over a grid of budgets."""
    out = []
    for k in np.atleast_1d(kappas):
        p = GaussianScalarParams(params.C, params.D, params.R, params.Q, params.K_V, float(k))
        out.append(scalar_solve(p).capacity_nats)
    return np.array(out)


def rate_loss(stable: GaussianScalarParams, unstable: GaussianScalarParams) -> float:
    """Capacity lost to instability at a common budget (``Q = 0``, ``D = R = 1``).

    ``ln|C_u|`` once the budget covers ``kappa_min = (C_u^2 - 1) K_V``, and
    the whole stable capacity ``0.5 ln(1 + kappa/K_V)`` below it.
    """
    for p in (stable, unstable):
        if p.Q != 0 or p.R != 1 or p.D != 1:
            raise DomainError("rate loss is defined for Q = 0, D = R = 1")
    if stable.K_V != unstable.K_V or stable.kappa != unstable.kappa:
        raise DomainError("stable and unstable channels must share K_V and kappa")
    if abs(stable.C) >= 1:
        raise DomainError(f"C_s = {stable.C} is not stable")
    if abs(unstable.C) < 1:
        raise DomainError(f"C_u = {unstable.C} is not unstable")
    kappa, K_V = unstable.kappa, unstable.K_V
    kappa_min = (unstable.C ** 2 - 1.0) * K_V
    if kappa >= kappa_min:
        return math.log(abs(unstable.C))
    return 0.5 * math.log1p(kappa / K_V)


# -- matrix channel -----------------------------------------------------------------


def _sym_eigs(M, name):
    if not np.allclose(M, M.T, atol=EIG_TOL, rtol=0):
        raise DomainError(f"{name} must be symmetric")
    return np.linalg.eigvalsh(0.5 * (M + M.T))


@dataclass(frozen=True, eq=False)
class GaussianMatrixParams:
    C: np.ndarray
    D: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    K_V: np.ndarray
    kappa: float = 0.0

    def __post_init__(self):
        arrs = {k: np.atleast_2d(np.asarray(getattr(self, k), dtype=float)) for k in ("C", "D", "R", "Q", "K_V")}
        p = arrs["C"].shape[0]
        q = arrs["D"].shape[1]
        shapes = {"C": (p, p), "D": (p, q), "R": (q, q), "Q": (p, p), "K_V": (p, p)}
        for k, shp in shapes.items():
            if arrs[k].shape != shp:
                raise DomainError(f"{k} has shape {arrs[k].shape}, expected {shp}")
            if not np.all(np.isfinite(arrs[k])):
                raise DomainError(f"{k} has non-finite entries")
        if _sym_eigs(arrs["R"], "R").min() <= EIG_TOL:
            raise DomainError("R must be positive definite")
        if _sym_eigs(arrs["K_V"], "K_V").min() <= EIG_TOL:
            raise DomainError("K_V must be positive definite")
        if _sym_eigs(arrs["Q"], "Q").min() < -EIG_TOL:
            raise DomainError("Q must be positive semidefinite")
        if self.kappa < 0:
            raise DomainError("kappa must be >= 0")
        for k, v in arrs.items():
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def q(self) -> int:
        return self.D.shape[1]

    @classmethod
    def from_scalar(cls, sp: GaussianScalarParams) -> "GaussianMatrixParams":
        return cls(*(np.array([[v]]) for v in (sp.C, sp.D, sp.R, sp.Q, sp.K_V)), kappa=sp.kappa)


class RiccatiSolution(NamedTuple):
    P: np.ndarray
    gamma_star: np.ndarray
    stable: bool
    iterations: int
    residual: float


def _gain(params, P, s):
    D, C = params.D, params.C
    return -np.linalg.solve(D.T @ P @ D + s * params.R, D.T @ P @ C)


def matrix_riccati_solve(params: GaussianMatrixParams, s: float, tol: float = 1e-13,
                         max_iter: int = 100_000) -> RiccatiSolution:
    """Stabilizing solution of ``P = C'PC + sQ - C'PD (D'PD + sR)^{-1} D'PC``.

    Plain fixed-point iteration started from ``P_0 = s I`` (positive definite,
    so an unstable ``C`` with ``Q = 0`` is not trapped at the non-stabilizing
    ``P = 0``).  Stops when the max-norm step falls below
    ``tol * max(1, |P|_max)``.  ``stable`` reports whether the closed loop
    ``C + D Gamma*`` has spectral radius below ``1 - 1e-9``.
    """
    if s <= 0:
        raise DomainError("multiplier s must be > 0")
    C, D = params.C, params.D
    P = s * np.eye(params.p)
    sQ, sR = s * params.Q, s * params.R
    res = np.inf
    for it in range(1, max_iter + 1):
        CPD = C.T @ P @ D
        nxt = C.T @ P @ C + sQ - CPD @ np.linalg.solve(D.T @ P @ D + sR, CPD.T)
        nxt = 0.5 * (nxt + nxt.T)
        res = float(np.max(np.abs(nxt - P)))
        P = nxt
        if res < tol * max(1.0, float(np.max(np.abs(P)))):
            break
    else:
        raise ConvergenceError(f"Riccati iteration residual {res:.3e} after {max_iter} steps",
                               best=P, residual=res, iterations=max_iter)
    gamma = _gain(params, P, s)
    radius = float(np.max(np.abs(np.linalg.eigvals(C + D @ gamma))))
    return RiccatiSolution(P, gamma, radius < 1 - 1e-9, it, res)


def _jstar_objective(params, s, P, K):
    D, KV = params.D, params.K_V
    S = D @ K @ D.T + KV
    _, ld = np.linalg.slogdet(S)
    _, ld0 = np.linalg.slogdet(KV)
    return 0.5 * (ld - ld0) + s * params.kappa - s * np.trace(params.R @ K) - np.trace(P @ S)


def _jstar_gradient(params, s, P, K):
    D = params.D
    S = D @ K @ D.T + params.K_V
    return 0.5 * D.T @ np.linalg.solve(S, D) - s * params.R - D.T @ P @ D


def _psd_clip(K):
    w, U = np.linalg.eigh(0.5 * (K + K.T))
    return (U * np.maximum(w, 0.0)) @ U.T


def _kkt(params, s, P, K):
    G = _jstar_gradient(params, s, P, K)
    return max(float(np.linalg.eigvalsh(G).max()), 0.0) + float(np.max(np.abs(K @ G)))


def _newton_polish(params, s, P, K, steps=20):
    # the Hessian acts as dK -> -M dK M / 2 with M = D' S^{-1} D; values stop
    # resolving progress before the KKT residual does, so that is the merit
    D = params.D
    r = _kkt(params, s, P, K)
    for _ in range(steps):
        S = D @ K @ D.T + params.K_V
        M = D.T @ np.linalg.solve(S, D)
        try:
            Minv = np.linalg.inv(M)
        except np.linalg.LinAlgError:
            break
        G = _jstar_gradient(params, s, P, K)
        cand = _psd_clip(K + 2.0 * Minv @ G @ Minv)
        rc = _kkt(params, s, P, cand)
        if not rc < r:
            break
        K, r = cand, rc
    return K


class CovarianceSolution(NamedTuple):
    kz_star: np.ndarray
    j_star: float
    kkt_residual: float


def matrix_J_star(params: GaussianMatrixParams, s: float, P: np.ndarray, tol: float = 1e-7,
                  starts: int = 8, seed: int = 0) -> CovarianceSolution:
    """Optimal innovation covariance ``K_Z*`` and the per-unit-time value ``J*``.

    Maximizes ``0.5 ln|D K D' + K_V|/|K_V| + s kappa - s tr(R K) - tr(P (D K D' + K_V))``
    over ``K = L L'`` (``L`` lower triangular) from several seeded starts,
    with the analytic gradient.  The objective is concave in ``K`` so the
    starts only guard against slow convergence near the cone boundary.
    """
    if s <= 0:
        raise DomainError("multiplier s must be > 0")
    q = params.q
    rows, cols = np.tril_indices(q)

    def unpack(x):
        L = np.zeros((q, q))
        L[rows, cols] = x
        return L

    def neg(x):
        L = unpack(x)
        K = L @ L.T
        G = _jstar_gradient(params, s, P, K)
        return -_jstar_objective(params, s, P, K), -(2.0 * G @ L)[rows, cols]

    curvature = np.linalg.eigvalsh(s * params.R + params.D.T @ P @ params.D).max()
    scale = math.sqrt(0.5 / curvature)
    rng = np.random.default_rng(seed)
    best = None
    for k in range(starts):
        x0 = (np.eye(q) * scale)[rows, cols] if k == 0 else rng.normal(scale=scale, size=rows.size)
        r = optimize.minimize(neg, x0, jac=True, method="L-BFGS-B",
                              options={"gtol": 1e-15, "ftol": 0.0, "maxiter": 10_000})
        if best is None or r.fun < best.fun:
            best = r
    L = unpack(best.x)
    K = _newton_polish(params, s, P, L @ L.T)
    kkt = _kkt(params, s, P, K)
    if kkt > tol:
        raise ConvergenceError(f"K_Z ascent stopped with KKT residual {kkt:.3e}",
                               best=K, residual=kkt)
    return CovarianceSolution(K, float(_jstar_objective(params, s, P, K)), kkt)


@dataclass(frozen=True, eq=False)
class GaussianMatrixSolution:
    s: float
    P: np.ndarray
    gamma_star: np.ndarray
    kz_star: np.ndarray
    kappa_min: float
    capacity_nats: float
    regime: str
    avg_cost: float
    stable: bool
    extra: dict = field(default_factory=dict)

    @property
    def capacity_bits(self) -> float:
        return self.capacity_nats / math.log(2)


def matrix_average_cost(params: GaussianMatrixParams, gamma, K) -> float:
    """Stationary ``E[A'RA + B'QB]`` under ``A = gamma B_{-1} + Z``; inf if unstable."""
    A_cl = params.C + params.D @ gamma
    if np.max(np.abs(np.linalg.eigvals(A_cl))) >= 1:
        return math.inf
    Sigma = linalg.solve_discrete_lyapunov(A_cl, params.D @ K @ params.D.T + params.K_V)
    return float(np.trace(params.R @ (gamma @ Sigma @ gamma.T + K)) + np.trace(params.Q @ Sigma))


def matrix_solve(params: GaussianMatrixParams, tol: float = 1e-10, max_iter: int = 200) -> GaussianMatrixSolution:
    """Capacity of the matrix channel: ``inf_s J*(s)`` by bisection on its slope.

    ``P`` scales linearly in ``s`` so ``Gamma*`` does not depend on it.  The
    slope of ``J*`` is ``kappa`` minus the cost of the maximizing ``K_Z``; at
    ``K_Z = 0`` that cost is ``tr(P/s K_V)``, reported as ``kappa_min``.
    Budgets at or below it give zero capacity (regime ``belowMin``).
    """
    unit = matrix_riccati_solve(params, 1.0)
    P1, gamma = unit.P, unit.gamma_star
    kappa_min = float(np.trace(P1 @ params.K_V))
    kappa = params.kappa

    def cost_of(K):
        return float(np.trace(params.R @ K) + np.trace(P1 @ (params.D @ K @ params.D.T + params.K_V)))

    # kappa_min is iterated, so allow for its rounding at the boundary
    if kappa <= kappa_min + EIG_TOL * max(1.0, kappa_min):
        K = np.zeros((params.q, params.q))
        return GaussianMatrixSolution(math.inf, P1, gamma, K, kappa_min, 0.0, BELOW_MIN,
                                      matrix_average_cost(params, gamma, K), unit.stable)

    def slope(s):
        sol = matrix_J_star(params, s, s * P1)
        return kappa - cost_of(sol.kz_star), sol

    lo, hi = 1e-12, 1.0
    while slope(hi)[0] < 0:
        lo, hi = hi, hi * 4.0
        if hi > 1e12:
            raise ConvergenceError("could not bracket the multiplier", best=hi)
    while slope(lo)[0] > 0:
        lo *= 1e-3
        if lo < 1e-300:
            raise ConvergenceError("could not bracket the multiplier", best=lo)
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        g, sol = slope(mid)
        if abs(g) < tol * max(1.0, kappa) or hi / lo - 1 < 1e-14:
            break
        if g < 0:
            lo = mid
        else:
            hi = mid
    s = mid
    K = sol.kz_star
    return GaussianMatrixSolution(s, s * P1, gamma, K, kappa_min, max(sol.j_star, 0.0), ACTIVE,
                                  matrix_average_cost(params, gamma, K), unit.stable,
                                  {"slope": g})
