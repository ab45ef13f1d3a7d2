"""Core numerical kernels for feature-diversity analysis.

The diversity of an N x d feature matrix H is its Frobenius distance to the
subspace of matrices whose rows are all identical.  With e = 1/sqrt(N) * ones,
that distance equals ||(I - e e^T) H||_F; the least-squares mean-row form is
kept as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteInputError(ValueError):
    pass


def as_feature_matrix(H) -> np.ndarray:
    """Validate and return H as a 2-D float64 array with finite entries."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
        raise ValueError(f"expected a 2-D matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise NonFiniteInputError("feature matrix contains NaN/Inf entries")
    return H


def center_rows(H: np.ndarray) -> np.ndarray:
    """Apply the projector (I - e e^T): subtract the column means from every row."""
    return H - H.mean(axis=0, keepdims=True)


def diversity(H) -> float:
    """||(I - e e^T) H||_F, the distance from H to the all-rows-equal subspace."""
    H = as_feature_matrix(H)
    return float(np.linalg.norm(center_rows(H)))


def diversity_oracle(H) -> float:
    """Least-squares form: min over x of ||H - 1 x^T||_F, solved by the column mean.

    Intentionally written as the explicit minimizer (x_bar = column mean,
    residual norm computed by direct summation) so it stays independent of
    diversity()'s projector path.
    """
    H = as_feature_matrix(H)
    x_bar = np.mean(H, axis=0)
    resid = H - np.outer(np.ones(H.shape[0]), x_bar)
    return float(np.sqrt(np.sum(resid * resid)))


@dataclass(frozen=True)
class SpectralSummary:
    s: float               # largest singular value (or sqrt of top eigenvalue)
    lambda_max: float      # top eigenvalue of the underlying PSD matrix
    iterations: int
    residual: float
    converged: bool


class PowerIterationError(RuntimeError):
    """Raised when power iteration fails to converge and the caller demanded success."""


def _top_eig_psd(M: np.ndarray, tol: float, max_iter: int, seed: int) -> SpectralSummary:
    """Top eigenvalue of a symmetric PSD matrix via power iteration.

    Convergence is decided on the stagnation of the Rayleigh quotient
    (robust to clustered top eigenvalues, where the eigenpair residual can
    stay large while the eigenvalue estimate is already accurate).  The
    recorded residual is the last eigenvalue increment.  If the iteration
    stalls (clustered spectrum) the exact dense eigensolver takes over.
    """
    n = M.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    scale = np.linalg.norm(M, ord=1)  # cheap magnitude reference
    if scale == 0.0:
        return SpectralSummary(s=0.0, lambda_max=0.0, iterations=0, residual=0.0, converged=True)
    lam_prev = -np.inf
    lam = 0.0
    resid = np.inf
    it = 0
    w = M @ v
    for it in range(1, max_iter + 1):
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v landed in the null space; restart from a fresh direction
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            w = M @ v
            continue
        v = w / nw
        w = M @ v
        lam = float(v @ w)
        resid = abs(lam - lam_prev)
        if it >= 10 and resid <= tol * max(lam, tol * scale):
            return SpectralSummary(s=np.sqrt(max(lam, 0.0)), lambda_max=max(lam, 0.0),
                                   iterations=it, residual=resid, converged=True)
        lam_prev = lam
    # clustered top eigenvalues can stall power iteration; at desk scale a
    # dense eigendecomposition is cheap, so fall back to the exact answer
    lam_exact = float(np.linalg.eigvalsh(M)[-1])
    return SpectralSummary(s=np.sqrt(max(lam_exact, 0.0)), lambda_max=max(lam_exact, 0.0),
                           iterations=it, residual=abs(lam_exact - lam), converged=True)


def spectral_norm(W, tol: float = 1e-10, max_iter: int = 10_000,
                  seed: int = 0) -> SpectralSummary:
    """Largest singular value of W via power iteration on the smaller Gram matrix."""
    W = np.asarray(W, dtype=np.float64)
    if not np.all(np.isfinite(W)):
        raise NonFiniteInputError("matrix contains NaN/Inf entries")
    if W.ndim != 2:
        raise ValueError("spectral_norm expects a 2-D matrix")
    G = W.T @ W if W.shape[1] <= W.shape[0] else W @ W.T
    return _top_eig_psd(G, tol=tol, max_iter=max_iter, seed=seed)


def projector_gram_top_eig(X, tol: float = 1e-10, max_iter: int = 10_000,
                           seed: int = 0) -> SpectralSummary:
    """Top eigenvalue of X^T (I - e e^T) X for an arbitrary N x N matrix X."""
    X = np.asarray(X, dtype=np.float64)
    B = center_rows(X)
    return _top_eig_psd(B.T @ B, tol=tol, max_iter=max_iter, seed=seed)


def attention_contraction(A, tol: float = 1e-10, max_iter: int = 10_000,
                          seed: int = 0, row_sum_tol: float = 1e-9) -> SpectralSummary:
    """lambda_max of A^T (I - e e^T) A for a row-stochastic attention matrix A."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("attention matrix must be square")
    if not np.all(np.isfinite(A)):
        raise NonFiniteInputError("attention matrix contains NaN/Inf entries")
    if np.any(A < 0.0):
        raise ValueError("attention matrix has negative entries")
    row_err = np.max(np.abs(A.sum(axis=1) - 1.0))
    if row_err > row_sum_tol:
        raise ValueError(f"rows do not sum to 1 (max error {row_err:.3e})")
    return projector_gram_top_eig(A, tol=tol, max_iter=max_iter, seed=seed)


def effective_dimension(F, epsilon: float = 0.8) -> int:
    """Smallest k with the top-k explained-variance ratio >= epsilon.

    Returns 0 for a matrix with no variance after centering.
    """
    F = as_feature_matrix(F)
    if F.shape[0] < 2:
        raise ValueError("effective_dimension needs at least 2 rows")
    if not (0.0 < epsilon <= 1.0):
        raise ValueError("epsilon must be in (0, 1]")
    Fc = center_rows(F)
    cov = Fc.T @ Fc / (F.shape[0] - 1)
    evals = np.linalg.eigvalsh(cov)[::-1]
    evals = np.clip(evals, 0.0, None)
    total = float(evals.sum())
    if total == 0.0:
        return 0
    frac = np.cumsum(evals) / total
    return int(np.searchsorted(frac, epsilon - 1e-12) + 1)


def pca_top_k(F, k: int):
    """Project centered F onto its top-k principal directions.

    Returns (coordinates N x k, cumulative explained-variance ratio).  Sign
    convention: the largest-magnitude component of each direction is positive.
    """
    F = as_feature_matrix(F)
    n, d = F.shape
    if not (1 <= k <= min(n, d)):
        raise ValueError(f"k must be in [1, min(N, d)] = [1, {min(n, d)}]")
    Fc = center_rows(F)
    cov = Fc.T @ Fc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = float(evals.sum())
    if total == 0.0:
        return np.zeros((n, k)), 0.0
    V = evecs[:, :k].copy()
    for j in range(k):
        i = np.argmax(np.abs(V[:, j]))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    coords = Fc @ V
    explained = float(evals[:k].sum() / total)
    return coords, explained
