"""Finite-difference verification of every analytical gradient in the package.

Relative error of an instance is ``max|analytic - numeric| / max(max|numeric|, 1e-8)``
with central differences at step ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses, numcore
from .model import backward, forward, init

STEP = 1e-5
TOLERANCE = 1e-4


def numeric_grad(f, X, h=STEP):
    X = np.array(X, dtype=np.float64)
    g = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        orig = X[idx]
        X[idx] = orig + h
        up = f(X)
        X[idx] = orig - h
        down = f(X)
        X[idx] = orig
        g[idx] = (up - down) / (2.0 * h)
    return g


def relative_error(analytic, numeric) -> float:
    scale = max(float(np.max(np.abs(numeric))), 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _relaxed_weights(rng, n, d):
    src = numcore.l2_normalize_rows(rng.standard_normal((n, d)))
    return numcore.gaussian_weights(numcore.pairwise_distances(src), rng.choice([0.5, 1.0, 2.0]))


def _labels(rng, n):
    return rng.integers(0, max(2, n // 3), size=n)


# Each case builder returns (loss_fn, point) with loss_fn -> LossResult.
def _case_contrastive(rng, n, d):
    X = numcore.l2_normalize_rows(rng.standard_normal((n, d)))
    y = losses.class_equivalence(_labels(rng, n))
    f = lambda Z: losses.contrastive(Z, y, 1.0)
    return f, X


def _case_relaxed_abs(rng, n, d):
    X = numcore.l2_normalize_rows(rng.standard_normal((n, d)))
    W = _relaxed_weights(rng, n, d)
    return (lambda Z: losses.relaxed_contrastive_abs(Z, W, 1.0)), X


def _case_relaxed(rng, n, d):
    X = rng.standard_normal((n, d)) * rng.uniform(0.2, 5.0)
    W = _relaxed_weights(rng, n, d)
    return (lambda Z: losses.relaxed_contrastive(Z, W, 1.0)), X


def _case_unrelaxed(rng, n, d):
    X = rng.standard_normal((n, d))
    y = losses.class_equivalence(_labels(rng, n))
    return (lambda Z: losses.unrelaxed_relative(Z, y, 1.0)), X


def _case_ms(rng, n, d):
    X = rng.standard_normal((n, d))
    W = _relaxed_weights(rng, n, d)
    cfg = losses.LossConfig(alpha=1.0, beta=4.0)
    return (lambda Z: losses.relaxed_ms(Z, W, cfg)), X


def _case_hkd(rng, n, d):
    C = d
    teacher = 2.0 * rng.standard_normal((n, C))
    T = rng.choice([1.0, 2.0, 4.0])
    return (lambda S: losses.hkd_kl(S, teacher, T)), 2.0 * rng.standard_normal((n, C))


def _case_ce(rng, n, d):
    C = d
    y = rng.integers(0, C, size=n)
    return (lambda Z: losses.cross_entropy(Z, y)), 2.0 * rng.standard_normal((n, C))


OPS = {
    "contrastive": _case_contrastive,
    "relaxed_contrastive_abs": _case_relaxed_abs,
    "relaxed_contrastive": _case_relaxed,
    "unrelaxed_relative": _case_unrelaxed,
    "relaxed_ms": _case_ms,
    "hkd_kl": _case_hkd,
    "cross_entropy": _case_ce,
}


def _check_loss(name, rng, corrupt):
    n = int(rng.integers(3, 17))
    d = int(rng.integers(2, 9))
    f, X = OPS[name](rng, n, d)
    analytic = f(X).grad
    if corrupt:
        analytic = analytic * 1.01
    return relative_error(analytic, numeric_grad(lambda Z: f(Z).value, X))


def _check_mlp(rng, corrupt):
    """End-to-end: relaxed contrastive on MLP outputs, checked over every parameter."""
    n = int(rng.integers(3, 17))
    d_out = int(rng.integers(2, 9))
    dims = [int(rng.integers(2, 7)), int(rng.integers(2, 9)), d_out]
    model = init(dims, rng)
    for b in model.biases:
        b[:] = 0.1 * rng.standard_normal(b.shape)
    X = rng.standard_normal((n, dims[0]))
    W = _relaxed_weights(rng, n, d_out)

    def loss_of(m):
        out, _ = forward(m, X)
        return losses.relaxed_contrastive(out, W, 1.0).value

    out, trace = forward(model, X)
    g = backward(model, trace, losses.relaxed_contrastive(out, W, 1.0).grad).params()
    analytic, numeric = [], []
    for k, p in enumerate(model.params()):
        def f(P, k=k):
            trial = model.copy()
            ps = trial.params()
            ps[k] = P
            trial.set_params(ps)
            return loss_of(trial)

        analytic.append(g[k].ravel() * (1.01 if corrupt else 1.0))
        numeric.append(numeric_grad(f, p).ravel())
    # Pooled over all parameters: the output bias gradient is identically zero
    # (the loss is translation invariant), so per-tensor ratios are meaningless.
    return relative_error(np.concatenate(analytic), np.concatenate(numeric))


@dataclass(frozen=True)
class OpResult:
    op: str
    max_error: float
    worst_trial: int
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def run(seed=0, trials=100, corrupt=None):
    """Check every loss and the MLP backward; ``corrupt`` names an op whose
    analytic gradient is deliberately perturbed (failure-path testing)."""
    results = []
    for k, name in enumerate(list(OPS) + ["mlp_backward"]):
        worst, worst_trial = -1.0, 0
        for t in range(trials):
            rng = np.random.default_rng([seed, k, t])
            bad = corrupt == name
            err = _check_mlp(rng, bad) if name == "mlp_backward" else _check_loss(name, rng, bad)
            if err > worst:
                worst, worst_trial = err, t
        results.append(OpResult(name, worst, worst_trial, trials))
    return results
