"""``capfb`` command line: capacity, sweep and verify."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys

import numpy as np

from .dp import MAX_ITER, TOL_OUTER, TOL_SPAN, dual_search, relative_value_iteration
from .errors import ConvergenceError, DomainError, ErgodicityError, UnsupportedClosedFormError
from .gaussian import GaussianMatrixParams, GaussianScalarParams, matrix_solve, scalar_solve
from .prob import decode_state
from .specio import FiniteProblem, load_spec
from .verify import SUITE_NAMES, format_table, run_suite

EXIT_OK, EXIT_VERIFY, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_ERGODICITY, EXIT_IO = range(6)
SWEEP_HEADER = ("kappa", "capacity_bits", "capacity_nats", "s_star", "kappa_min", "avg_cost", "regime")

log = logging.getLogger("capfb")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _json_num(x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else str(x)


# -- solvers behind both commands ------------------------------------------------------


def _solve_finite(prob: FiniteProblem, kappa, args):
    tol = args.tol if args.tol is not None else TOL_SPAN
    if prob.cost is None or math.isinf(kappa):
        r = relative_value_iteration(prob.channel, prob.cost, 0.0, tol, args.max_iter)
        return {
            "kappa": kappa, "capacityNats": r.j_star, "sStar": 0.0, "kappaMin": None,
            "avgCost": None, "regime": "unconstrained", "iterations": r.iterations,
            "spanResidual": r.span,
        }, r.policy
    res = dual_search(prob.channel, prob.cost, kappa,
                      tol_outer=args.tol if args.tol is not None else TOL_OUTER,
                      tol_inner=tol, max_iter=args.max_iter)
    if not res.ergodic:
        raise ErgodicityError("optimal policy induces a non-ergodic output chain")
    return {
        "kappa": kappa, "capacityNats": res.capacity_nats, "sStar": res.s_star, "kappaMin": None,
        "avgCost": res.avg_cost, "regime": "active" if res.binding else "unconstrained",
        "iterations": res.iterations, "spanResidual": res.span,
    }, res.policy


def _solve_scalar(p: GaussianScalarParams, kappa):
    p = GaussianScalarParams(p.C, p.D, p.R, p.Q, p.K_V, kappa)
    try:
        sol = scalar_solve(p)
    except UnsupportedClosedFormError:
        return _solve_matrix(GaussianMatrixParams.from_scalar(p), kappa)
    return {
        "kappa": kappa, "capacityNats": sol.capacity_nats, "sStar": sol.s, "kappaMin": sol.kappa_min,
        "avgCost": sol.avg_cost, "regime": sol.regime, "gammaStar": sol.gamma_star,
        "kZStar": sol.kz_star, "P": sol.P, "F": sol.F,
    }, None


def _solve_matrix(p: GaussianMatrixParams, kappa):
    p = GaussianMatrixParams(p.C, p.D, p.R, p.Q, p.K_V, kappa)
    sol = matrix_solve(p)
    return {
        "kappa": kappa, "capacityNats": sol.capacity_nats, "sStar": sol.s, "kappaMin": sol.kappa_min,
        "avgCost": sol.avg_cost, "regime": sol.regime, "gammaStar": sol.gamma_star.tolist(),
        "kZStar": sol.kz_star.tolist(), "stable": sol.stable,
    }, None


def _solve(doc, kappa, args):
    prob = doc.problem
    if doc.kind == "finite":
        return _solve_finite(prob, prob.kappa if kappa is None else kappa, args)
    if doc.kind == "gaussianScalar":
        return _solve_scalar(prob, prob.kappa if kappa is None else kappa)
    return _solve_matrix(prob, prob.kappa if kappa is None else kappa)


def policy_csv(policy, n_out: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state_index", "window_symbols"] + [f"prob_input_{a}" for a in range(policy.n_in)])
    for s, row in enumerate(policy.pi):
        symbols = " ".join(str(b) for b in decode_state(s, policy.J, n_out).symbols)
        w.writerow([s, symbols] + [_fmt(x) for x in row])
    return buf.getvalue()


# -- commands ----------------------------------------------------------------------


def cmd_capacity(args) -> int:
    doc = load_spec(args.spec)
    row, policy = _solve(doc, None, args)
    out = {"kind": doc.kind, "capacityBits": row["capacityNats"] / math.log(2)}
    out.update(row)
    if args.emit_policy:
        if policy is None:
            raise DomainError("--emit-policy applies to finite specs only")
        with open(args.emit_policy, "w", encoding="utf-8", newline="") as fh:
            fh.write(policy_csv(policy, doc.problem.channel.n_out))
        out["policyPath"] = args.emit_policy
    text = json.dumps({k: (_json_num(v) if isinstance(v, (float, int, np.number)) and not isinstance(v, bool) else v)
                       for k, v in out.items()}, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def sweep_rows(doc, kappas, args) -> list:
    if doc.kind == "finite" and doc.problem.cost is None:
        raise DomainError("a finite sweep needs a cost table")
    rows = []
    for k in kappas:
        r, _ = _solve(doc, float(k), args)
        rows.append((float(k), r["capacityNats"] / math.log(2), r["capacityNats"], r["sStar"],
                     r["kappaMin"], r["avgCost"], r["regime"]))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    if args.steps < 2:
        raise DomainError("--steps must be >= 2")
    if args.kappa_min > args.kappa_max:
        raise DomainError("--kappa-min must not exceed --kappa-max")
    doc = load_spec(args.spec)
    text = sweep_csv(sweep_rows(doc, np.linspace(args.kappa_min, args.kappa_max, args.steps), args))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    rows = run_suite(args.suite, restrict_j=args.restrict_j)
    print(format_table(rows))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="solver tolerance")
    common.add_argument("--max-iter", type=int, default=MAX_ITER)
    common.add_argument("--threads", type=int, default=1, help="accepted for compatibility; solvers are serial")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="capfb", description="Feedback capacity of channels with memory.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("capacity", parents=[common], help="solve one problem")
    c.add_argument("--spec", required=True)
    c.add_argument("--emit-policy", metavar="PATH")
    c.add_argument("--out", metavar="PATH", help="write the result document here instead of stdout")
    c.set_defaults(func=cmd_capacity)

    s = sub.add_parser("sweep", parents=[common], help="capacity over a budget grid, as CSV")
    s.add_argument("--spec", required=True)
    s.add_argument("--kappa-min", type=float, required=True)
    s.add_argument("--kappa-max", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--out", metavar="PATH")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", parents=[common], help="run a bundled acceptance suite")
    v.add_argument("--suite", choices=SUITE_NAMES, default="all")
    v.add_argument("--restrict-j", type=int, default=None, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DomainError, UnsupportedClosedFormError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ErgodicityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERGODICITY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
