"""Training objectives with closed-form gradients w.r.t. their inputs.

Pair losses take a batch of embeddings ``X`` (n x d) and an n x n matrix of
relation labels, either binary class equivalence ``y`` or relaxed weights
``W`` in [0, 1].  Each returns a :class:`LossResult` carrying the scalar
value and ``dL/dX``.

All pair losses share the same backward structure: the loss is first
differentiated w.r.t. the (ordered) distance entries ``dist[i, j]`` and the
result is pushed through ``dist[i, j] = ||x_i - x_j||`` by
:func:`_distance_backward`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore
from .errors import InvalidInputError, InvalidParameterError

_SYM_TOL = 1e-12


@dataclass(frozen=True)
class LossConfig:
    delta: float = 1.0
    sigma: float = 1.0
    alpha: float = 1.0
    beta: float = 4.0
    temperature: float = 4.0

    def __post_init__(self):
        for name in ("delta", "sigma", "alpha", "beta", "temperature"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be a positive finite number, got {value}")


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: np.ndarray


def _relation_matrix(R, n: int, name: str, binary: bool) -> np.ndarray:
    M = np.asarray(R, dtype=np.float64)
    if M.shape != (n, n):
        raise InvalidInputError(f"{name} must be {n}x{n} to match the batch, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    if np.max(np.abs(M - M.T)) > _SYM_TOL:
        raise InvalidInputError(f"{name} is not symmetric")
    if binary:
        if not np.all((M == 0.0) | (M == 1.0)):
            raise InvalidInputError(f"{name} must be binary (entries 0 or 1)")
        if not np.all(np.diag(M) == 1.0):
            raise InvalidInputError(f"{name} must have a unit diagonal")
    elif M.min() < 0.0 or M.max() > 1.0:
        raise InvalidInputError(f"{name} entries must lie in [0, 1]")
    return M


def _check_delta(delta: float):
    if not (np.isfinite(delta) and delta > 0):
        raise InvalidParameterError(f"delta must be > 0, got {delta}")


def _distance_backward(X: np.ndarray, dist: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Map ``G[i, j] = dL/d dist[i, j]`` onto ``dL/dX``.

    Coincident off-diagonal pairs get a zero (sub)gradient.
    """
    S = G + G.T
    B = np.zeros_like(S)
    pos = dist > 0
    B[pos] = S[pos] / dist[pos]
    np.fill_diagonal(B, 0.0)
    return B.sum(axis=1)[:, None] * X - B @ X


def _relative_backward(X, dist, mu, G_r):
    """Backward through ``r[i, j] = dist[i, j] / mu_i`` with ``mu_i`` itself a
    mean of row ``i`` of ``dist``."""
    n = dist.shape[0]
    dmu = -(G_r * dist).sum(axis=1) / mu**2
    G = G_r / mu[:, None] + dmu[:, None] / n
    return _distance_backward(X, dist, G)


def _hinge_pair_terms(r, W, delta):
    gap = np.maximum(delta - r, 0.0)
    terms = W * r * r + (1.0 - W) * gap * gap
    dterms = 2.0 * W * r - 2.0 * (1.0 - W) * gap
    return terms, dterms


def contrastive_grad_wrt_distance(d: float, y: int, delta: float, n: int) -> float:
    """Derivative of the contrastive loss w.r.t. one ordered distance entry."""
    if y == 1:
        return 2.0 / n * d
    if d < delta:
        return 2.0 / n * (d - delta)
    return 0.0


def relaxed_grad_wrt_distance(d: float, w: float, delta: float, n: int) -> float:
    """Derivative of the relaxed (absolute-distance) loss w.r.t. one distance entry.

    Zero at ``d = delta * (1 - w)`` when ``d < delta``; equals
    ``2/n * w * d`` beyond the margin.
    """
    gap = max(delta - d, 0.0)
    return (2.0 * w * d - 2.0 * (1.0 - w) * gap) / n


def _absolute_pair_loss(X, R, delta, name, binary) -> LossResult:
    X = numcore.as_matrix(X)
    _check_delta(delta)
    n = X.shape[0]
    R = _relation_matrix(R, n, name, binary)
    dist = numcore.pairwise_distances(X).dist
    terms, dterms = _hinge_pair_terms(dist, R, delta)
    value = float(np.sum(terms)) / n
    grad = _distance_backward(X, dist, dterms / n)
    return LossResult(value, grad)


def contrastive(X, y, delta: float = 1.0) -> LossResult:
    """Original contrastive loss on (caller-normalized) embeddings with binary labels."""
    return _absolute_pair_loss(X, y, delta, "y", binary=True)


def relaxed_contrastive_abs(X, W, delta: float = 1.0) -> LossResult:
    """Contrastive loss with binary labels replaced by relaxed weights ``W``."""
    return _absolute_pair_loss(X, W, delta, "W", binary=False)


def _relative_pair_loss(X, R, delta, name, binary) -> LossResult:
    X = numcore.as_matrix(X)
    _check_delta(delta)
    n = X.shape[0]
    R = _relation_matrix(R, n, name, binary)
    dist = numcore.pairwise_distances(X).dist
    mu = numcore.anchor_means(dist)
    r = dist / mu[:, None]
    terms, dterms = _hinge_pair_terms(r, R, delta)
    value = float(np.sum(terms)) / n
    grad = _relative_backward(X, dist, mu, dterms / n)
    return LossResult(value, grad)


def relaxed_contrastive(X, W, delta: float = 1.0) -> LossResult:
    """Relaxed contrastive loss on relative distances.

    Target embeddings are used unnormalized: every distance is divided by
    the mean distance of its anchor, which makes the loss invariant to a
    global rescaling of ``X``.
    """
    return _relative_pair_loss(X, W, delta, "W", binary=False)


def unrelaxed_relative(X, y, delta: float = 1.0) -> LossResult:
    """Ablation: relative-distance loss driven by binary class labels."""
    return _relative_pair_loss(X, y, delta, "y", binary=True)


def relaxed_ms(X, W, cfg: LossConfig = LossConfig()) -> LossResult:
    """Multi-similarity loss with relaxed labels and relative distances.

    Both log-sum terms skip the self-pair and are evaluated in shifted
    (log-sum-exp) form so large ``alpha * r`` cannot overflow.
    """
    X = numcore.as_matrix(X)
    n = X.shape[0]
    W = _relation_matrix(W, n, "W", binary=False)
    dist = numcore.pairwise_distances(X).dist
    mu = numcore.anchor_means(dist)
    r = dist / mu[:, None]
    off = ~np.eye(n, dtype=bool)
    a, b, delta = cfg.alpha, cfg.beta, cfg.delta

    def log1p_weighted(weights, expo):
        # log(1 + sum_j weights_ij * exp(expo_ij)) per row, plus softmax-style shares.
        live = off & (weights > 0)
        e = np.where(live, expo, -np.inf)
        shift = np.maximum(e.max(axis=1), 0.0)
        scaled = np.where(live, weights * np.exp(e - shift[:, None]), 0.0)
        denom = np.exp(-shift) + scaled.sum(axis=1)
        return shift + np.log(denom), scaled / denom[:, None]

    pos_log, pos_share = log1p_weighted(W, a * r)
    neg_log, neg_share = log1p_weighted(1.0 - W, b * (delta - r))
    value = float(np.sum(pos_log / a + neg_log / b)) / n
    G_r = (pos_share - neg_share) / n
    grad = _relative_backward(X, dist, mu, G_r)
    return LossResult(value, grad)


def _log_softmax(Z):
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def hkd_kl(student_logits, teacher_logits, temperature: float = 4.0) -> LossResult:
    """Soft-target distillation: ``T^2 * mean_i KL(p_teacher || p_student)`` at temperature T.

    The gradient is taken w.r.t. the student logits only.
    """
    S = numcore.as_matrix(student_logits, "student_logits")
    Tl = numcore.as_matrix(teacher_logits, "teacher_logits")
    if S.shape != Tl.shape:
        raise InvalidInputError(f"logit shapes differ: {S.shape} vs {Tl.shape}")
    if not temperature > 0:
        raise InvalidParameterError(f"temperature must be > 0, got {temperature}")
    T = float(temperature)
    n = S.shape[0]
    log_p = _log_softmax(Tl / T)
    log_q = _log_softmax(S / T)
    p = np.exp(log_p)
    kl = np.sum(p * (log_p - log_q), axis=1)
    value = max(float(np.sum(kl)) * T * T / n, 0.0)
    grad = T * (np.exp(log_q) - p) / n
    return LossResult(value, grad)


def cross_entropy(logits, labels) -> LossResult:
    Z = numcore.as_matrix(logits, "logits")
    n, C = Z.shape
    y = np.asarray(labels)
    if y.shape != (n,):
        raise InvalidInputError(f"expected {n} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidInputError("labels must be integer class ids")
    if y.min() < 0 or y.max() >= C:
        bad = int(np.flatnonzero((y < 0) | (y >= C))[0])
        raise InvalidInputError(f"label {int(y[bad])} at row {bad} is outside [0, {C})")
    log_q = _log_softmax(Z)
    rows = np.arange(n)
    value = -float(np.sum(log_q[rows, y])) / n
    grad = np.exp(log_q)
    grad[rows, y] -= 1.0
    return LossResult(value, grad / n)


def class_equivalence(labels) -> np.ndarray:
    """Binary ``y[i, j] = 1`` iff samples i and j share a label."""
    lab = np.asarray(labels)
    return (lab[:, None] == lab[None, :]).astype(np.float64)
