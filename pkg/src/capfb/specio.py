"""JSON problem documents for the command line."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DomainError
from .gaussian import GaussianMatrixParams, GaussianScalarParams
from .prob import FiniteChannelKernel, TransmissionCost, check_simplex

SCHEMA_VERSION = 1
ROW_ATOL = 1e-9
KINDS = ("finite", "gaussianScalar", "gaussianMatrix")


@dataclass(frozen=True, eq=False)
class FiniteProblem:
    channel: FiniteChannelKernel
    cost: Optional[TransmissionCost] = None
    initial: Optional[np.ndarray] = None

    @property
    def kappa(self) -> Optional[float]:
        return None if self.cost is None else self.cost.kappa


@dataclass(frozen=True, eq=False)
class ChannelSpecDocument:
    kind: str
    problem: Union[FiniteProblem, GaussianScalarParams, GaussianMatrixParams]
    schema_version: int = SCHEMA_VERSION


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise DomainError(f"{where}: missing field '{key}'")
    return d[key]


def _int(v, name, lo=0):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise DomainError(f"{name} must be an integer >= {lo}, got {v!r}")
    return v


def _real(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v):
        raise DomainError(f"{name} must be a real number, got {v!r}")
    return float(v)


def _array(v, name, shape):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{name} is not a rectangular numeric array") from exc
    if a.shape != shape:
        raise DomainError(f"{name} has shape {a.shape}, expected {shape}")
    return a


def _parse_finite(doc):
    f = _require(doc, "finite", "finite spec")
    n_in = _int(_require(f, "inputSize", "finite"), "inputSize", 1)
    n_out = _int(_require(f, "outputSize", "finite"), "outputSize", 1)
    M = _int(f.get("memoryM", 0), "memoryM")
    q = _array(_require(f, "kernel", "finite"), "kernel", (n_out ** M, n_in, n_out))
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        s, a, _ = np.argwhere((q < 0) | ~np.isfinite(q))[0]
        raise DomainError(f"kernel row (state={s}, input={a}) has a negative or non-finite entry")
    sums = q.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > ROW_ATOL)
    if bad.size:
        s, a = bad[0]
        raise DomainError(f"kernel row (state={s}, input={a}) sums to {sums[s, a]:.12g}, not 1")
    channel = FiniteChannelKernel(check_simplex(q, atol=ROW_ATOL, what="kernel"), M=M)

    cost = None
    if f.get("cost") is not None:
        c = f["cost"]
        K = _int(c.get("memoryK", 0), "cost.memoryK")
        table = _array(_require(c, "table", "cost"), "cost.table", (n_out ** K, n_in))
        kappa = _real(c.get("kappa", math.inf), "cost.kappa")
        cost = TransmissionCost(table, K=K, kappa=kappa)

    initial = doc.get("initial")
    if initial is not None:
        initial = check_simplex(np.asarray(initial, dtype=float), atol=ROW_ATOL, what="initial")
    return FiniteProblem(channel, cost, initial)


def _gaussian_fields(doc):
    g = _require(doc, "gaussian", "gaussian spec")
    if "K_V" not in g and "KV" in g:
        g = dict(g, K_V=g["KV"])
    return g


def _parse_scalar(doc):
    g = _gaussian_fields(doc)
    vals = {"C": _real(_require(g, "C", "gaussian"), "C")}
    for k in ("D", "R", "Q", "K_V", "kappa"):
        if k in g:
            vals[k] = _real(g[k], k)
    return GaussianScalarParams(**vals)


def _parse_matrix(doc):
    g = _gaussian_fields(doc)
    mats = {}
    for k in ("C", "D", "R", "Q", "K_V"):
        v = _require(g, k, "gaussian")
        try:
            mats[k] = np.atleast_2d(np.array(v, dtype=float))
        except (TypeError, ValueError) as exc:
            raise DomainError(f"{k} is not a rectangular numeric matrix") from exc
    return GaussianMatrixParams(**mats, kappa=_real(g.get("kappa", 0.0), "kappa"))


def parse_spec(doc: dict) -> ChannelSpecDocument:
    if not isinstance(doc, dict):
        raise DomainError("spec document must be a JSON object")
    version = _require(doc, "schemaVersion", "spec")
    if version != SCHEMA_VERSION:
        raise DomainError(f"unsupported schemaVersion {version!r}; expected {SCHEMA_VERSION}")
    kind = _require(doc, "kind", "spec")
    if kind not in KINDS:
        raise DomainError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    parser = {"finite": _parse_finite, "gaussianScalar": _parse_scalar, "gaussianMatrix": _parse_matrix}[kind]
    return ChannelSpecDocument(kind, parser(doc))


def load_spec(path) -> ChannelSpecDocument:
    """Read and validate a spec file; ``OSError`` is left to the caller."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from exc
    return parse_spec(doc)
