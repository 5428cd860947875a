"""Dense matrix primitives: pairwise geometry, Gaussian similarity, SVD.

Everything here works on float64 numpy arrays and is a pure function of
its inputs.  Summation order is fixed, so results are reproducible run to
run on the same machine.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BatchTooSmallError,
    DegenerateError,
    InvalidInputError,
    InvalidParameterError,
)

# Cap on the n*blk*d temporary used by the exact distance computation.
_BLOCK_ELEMS = 1 << 22

JACOBI_TOL = 1e-10
JACOBI_MAX_SWEEPS = 80


def as_matrix(X, name="X") -> np.ndarray:
    """Validate and return ``X`` as a finite 2-D float64 array."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputError(f"{name} is empty (shape {A.shape})")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class DistanceMatrix:
    """Squared and plain Euclidean distances between the rows of a matrix."""

    d2: np.ndarray
    dist: np.ndarray

    @property
    def n(self) -> int:
        return self.d2.shape[0]


def pairwise_distances(X) -> DistanceMatrix:
    """Euclidean distances between all rows of ``X``.

    Differences are formed explicitly (no Gram-matrix expansion), so the
    result is exactly symmetric, has an exact zero diagonal, and keeps full
    relative accuracy for nearby points.
    """
    A = as_matrix(X)
    n, d = A.shape
    d2 = np.empty((n, n))
    blk = max(1, _BLOCK_ELEMS // max(1, n * d))
    for start in range(0, n, blk):
        stop = min(n, start + blk)
        diff = A[start:stop, None, :] - A[None, :, :]
        d2[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, 0.0)
    return DistanceMatrix(d2=d2, dist=np.sqrt(d2))


def l2_normalize_rows(X) -> np.ndarray:
    A = as_matrix(X)
    norms = np.sqrt(np.einsum("ij,ij->i", A, A))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateError(f"row {int(zero[0])} has zero norm and cannot be normalized")
    return A / norms[:, None]


def gaussian_weights(D: DistanceMatrix, sigma: float) -> np.ndarray:
    """Relaxed relation labels ``exp(-d2 / sigma)`` with a unit diagonal."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    W = np.exp(-D.d2 / sigma)
    np.fill_diagonal(W, 1.0)
    return W


def anchor_means(dist: np.ndarray) -> np.ndarray:
    """Per-anchor mean distance ``mu_i = (1/n) sum_k dist[i, k]`` (self-pair included)."""
    n = dist.shape[0]
    if n < 3:
        raise BatchTooSmallError(f"relative distances need at least 3 samples, got {n}")
    mu = dist.sum(axis=1) / n
    bad = np.flatnonzero(mu == 0.0)
    if bad.size:
        raise DegenerateError(
            f"anchor {int(bad[0])} coincides with every other sample (mean distance 0)"
        )
    return mu


def relative_distances(D: DistanceMatrix) -> np.ndarray:
    """Distances divided by the anchor's batch-mean distance (row-wise, not symmetric)."""
    mu = anchor_means(D.dist)
    return D.dist / mu[:, None]


def _round_robin(m: int):
    """Tournament schedule: m-1 rounds of m/2 disjoint index pairs (m even)."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        half = m // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def singular_values(X) -> np.ndarray:
    """Singular values of ``X`` in descending order, via one-sided Jacobi.

    Tall inputs are first reduced to their square QR factor.  Column pairs
    are then orthogonalised in round-robin order, with all disjoint pairs of
    a round rotated at once.  Iteration stops once every pair's
    cosine falls below ``JACOBI_TOL``.
    """
    A = as_matrix(X)
    if A.shape[1] > A.shape[0]:
        A = A.T
    if A.shape[0] > A.shape[1]:
        # R of a QR factorisation has the same singular values and is square.
        A = np.linalg.qr(A, mode="r")
    A = np.array(A, copy=True)
    k = A.shape[1]
    if k == 1:
        return np.array([np.linalg.norm(A[:, 0])])
    m = k + (k % 2)
    if m != k:
        A = np.hstack([A, np.zeros((A.shape[0], 1))])
    rounds = _round_robin(m)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = 0.0
        for p, q in rounds:
            ap, aq = A[:, p], A[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            scale = np.sqrt(alpha * beta)
            live = scale > 0
            cosines = np.zeros_like(gamma)
            cosines[live] = np.abs(gamma[live]) / scale[live]
            off = max(off, float(cosines.max(initial=0.0)))
            rot = cosines > JACOBI_TOL
            if not rot.any():
                continue
            g = gamma[rot]
            zeta = (beta[rot] - alpha[rot]) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            P, Q = p[rot], q[rot]
            colp, colq = A[:, P], A[:, Q]
            A[:, P] = c * colp - s * colq
            A[:, Q] = s * colp + c * colq
        if off <= JACOBI_TOL:
            break
    sv = np.sqrt(np.einsum("ij,ij->j", A, A))[:k]
    return np.sort(sv)[::-1]
