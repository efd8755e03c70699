"""Additive conservation laws E with E(x) + E(y) = E(x') + E(y') whenever F(x, y) = (x', y')."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .model import ModelError, PairMap, SpinMeasure

RCOND = 1e-10


def constraint_matrix(F: PairMap) -> np.ndarray:
    m = F.m
    rows = []
    for s, t in enumerate(F.images.tolist()):
        row = np.zeros(m)
        row[s // m] += 1
        row[s % m] += 1
        row[t // m] -= 1
        row[t % m] -= 1
        if np.any(row):
            rows.append(row)
    return np.array(rows) if rows else np.zeros((0, m))


def conservation_laws(F: PairMap) -> np.ndarray:
    """Orthonormal basis of conserved functions, one per column (shape ``(m, dim)``)."""
    A = constraint_matrix(F)
    if A.shape[0] == 0:
        return np.eye(F.m)
    return null_space(A, rcond=RCOND)


@dataclass(frozen=True)
class LogMeasureResult:
    conserved: bool
    residual: float


def projection_residual(v: np.ndarray, basis: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.linalg.norm(v - basis @ (basis.T @ v)))


def verify_log_measure(nu: SpinMeasure, F: PairMap, tol: float = 1e-9) -> LogMeasureResult:
    """Whether x -> ln nu(x) lies in the span of the conservation laws."""
    if np.any(nu.probs <= 0):
        raise ModelError("log-measure law needs a strictly positive measure; reduce zero spins first")
    r = projection_residual(np.log(nu.probs), conservation_laws(F))
    return LogMeasureResult(r <= tol, r)
