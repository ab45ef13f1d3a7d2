"""Sinkhorn projection of a positive matrix toward the doubly stochastic set."""

from __future__ import annotations

import numpy as np


def sinkhorn(A, iterations: int = 50) -> np.ndarray:
    """Alternate row/column normalization; input entries must be positive."""
    A = np.asarray(A, dtype=np.float64)
    if np.any(A <= 0.0):
        raise ValueError("sinkhorn requires strictly positive entries")
    M = A.copy()
    for _ in range(iterations):
        M /= M.sum(axis=1, keepdims=True)
        M /= M.sum(axis=0, keepdims=True)
    # finish on a row pass so rows sum to 1 exactly enough for downstream checks
    M /= M.sum(axis=1, keepdims=True)
    return M


def stochastic_error(M) -> tuple[float, float]:
    """(max row-sum error, max col-sum error) from 1."""
    M = np.asarray(M, dtype=np.float64)
    return (float(np.max(np.abs(M.sum(axis=1) - 1.0))),
            float(np.max(np.abs(M.sum(axis=0) - 1.0))))
