"""Dense linear-algebra helpers: jittered factorizations and block inverse updates."""

from __future__ import annotations

import numpy as np
import scipy.linalg

# Jitter ladder: start at 1e-10 * mean(diag), escalate x100 at most 3 times.
JITTER_BASE = 1e-10
JITTER_GROWTH = 100.0
JITTER_RETRIES = 3


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix stays non-positive-definite after jitter retries."""


def _jitter_ladder(M: np.ndarray):
    base = JITTER_BASE * max(float(np.mean(np.diag(M))), np.finfo(float).tiny)
    yield 0.0
    for k in range(JITTER_RETRIES):
        yield base * JITTER_GROWTH**k


def cholesky_jittered(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding diagonal jitter if the plain attempt fails."""
    M = np.asarray(M, dtype=float)
    for jitter in _jitter_ladder(M):
        try:
            return np.linalg.cholesky(M + jitter * np.eye(M.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise SingularMatrixError("matrix not positive definite after jitter retries")


def inv_psd(M: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    L = cholesky_jittered(M)
    inv = scipy.linalg.cho_solve((L, True), np.eye(M.shape[0]))
    return 0.5 * (inv + inv.T)


def logdet_psd(M: np.ndarray) -> float:
    """log det of a symmetric positive-definite matrix via Cholesky."""
    L = cholesky_jittered(M)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def block_inverse_update(M_inv: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Inverse of [[M, B], [B.T, C]] from a cached M_inv.

    Uses the Schur complement S = C - B.T M_inv B of the appended block, so the
    update costs O(n^2 d) instead of a full O(n^3) re-inversion.
    """
    n = M_inv.shape[0]
    d = C.shape[0]
    if n == 0:
        return inv_psd(C)
    MB = M_inv @ B
    S = C - B.T @ MB
    S_inv = inv_psd(0.5 * (S + S.T))
    out = np.empty((n + d, n + d))
    out[:n, :n] = M_inv + MB @ S_inv @ MB.T
    out[:n, n:] = -MB @ S_inv
    out[n:, :n] = out[:n, n:].T
    out[n:, n:] = S_inv
    return out
