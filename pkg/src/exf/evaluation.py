"""Retrieval and generalization diagnostics for embedding matrices."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numcore
from .errors import DegenerateError, InvalidInputError, InvalidParameterError


@dataclass(frozen=True)
class RetrievalReport:
    k_values: list
    recall: list
    n_queries: int

    def to_dict(self):
        return asdict(self)

    def at(self, k: int) -> float:
        return self.recall[self.k_values.index(k)]


def neighbor_order(E) -> np.ndarray:
    """Per query, all other indices sorted by distance (ties by index)."""
    D = numcore.pairwise_distances(E).dist
    np.fill_diagonal(D, np.inf)
    return np.argsort(D, axis=1, kind="stable")[:, :-1]


def recall_at_k(E, labels, k_values=(1, 2, 4, 8), normalize=False) -> RetrievalReport:
    """Fraction of queries with a same-class sample among their K nearest neighbors.

    Each query is excluded from its own neighbor list.
    """
    E = numcore.as_matrix(E, "embeddings")
    labels = np.asarray(labels)
    n = E.shape[0]
    if n < 2:
        raise InvalidInputError("recall needs at least two samples")
    if labels.shape != (n,):
        raise InvalidInputError(f"{n} embeddings but labels of shape {labels.shape}")
    ks = [int(k) for k in k_values]
    for k in ks:
        if not 1 <= k < n:
            raise InvalidParameterError(f"K={k} must satisfy 1 <= K < n={n}")
    if normalize:
        E = numcore.l2_normalize_rows(E)
    order = neighbor_order(E)
    match = labels[order] == labels[:, None]
    first_hit = np.where(match.any(axis=1), match.argmax(axis=1), n)
    recall = [float(np.mean(first_hit < k)) for k in ks]
    return RetrievalReport(ks, recall, n)


@dataclass(frozen=True)
class SpectralReport:
    rho: float
    spectrum: list

    def to_dict(self):
        return asdict(self)


def spectral_decay(E) -> SpectralReport:
    """KL divergence of the normalized singular-value spectrum from uniform.

    The embedding matrix is mean-centered first; the spectrum has one entry
    per embedding dimension (zero-padded when rank deficient).
    """
    E = numcore.as_matrix(E, "embeddings")
    n, d = E.shape
    if n < 2:
        raise InvalidInputError("spectral decay needs at least two samples")
    centered = E - E.mean(axis=0)
    sv = np.zeros(d)
    vals = numcore.singular_values(centered)
    sv[: vals.size] = vals
    total = sv.sum()
    if not total > 0:
        raise DegenerateError("all embeddings are identical; the spectrum is undefined")
    p = sv / total
    nz = p > 0
    rho = float(np.sum(p[nz] * np.log(p[nz] * d)))
    return SpectralReport(max(rho, 0.0), p.tolist())


@dataclass(frozen=True)
class PairEntry:
    i: int
    j: int
    weight: float
    same_class: bool


@dataclass(frozen=True)
class PairRanking:
    top: list
    bottom: list

    def to_dict(self):
        return {"top": [asdict(e) for e in self.top], "bottom": [asdict(e) for e in self.bottom]}

    def to_text(self) -> str:
        lines = []
        for title, entries in (("top", self.top), ("bottom", self.bottom)):
            lines.append(f"{title} pairs by weight")
            lines.append(f"{'rank':>4}  {'i':>5}  {'j':>5}  {'weight':>10}  same_class")
            for rank, e in enumerate(entries, start=1):
                lines.append(
                    f"{rank:>4}  {e.i:>5}  {e.j:>5}  {e.weight:>10.6f}  {'yes' if e.same_class else 'no'}"
                )
        return "\n".join(lines)


def rank_pairs_by_weight(W, labels, top=5) -> PairRanking:
    """Highest- and lowest-weight unordered pairs (i < j) with class agreement.

    Equal weights are ordered by (i, j).
    """
    W = np.asarray(W, dtype=np.float64)
    labels = np.asarray(labels)
    n = W.shape[0]
    if W.shape != (n, n) or labels.shape != (n,):
        raise InvalidInputError("W must be n x n with n labels")
    count = n * (n - 1) // 2
    if not 1 <= top <= count:
        raise InvalidParameterError(f"top={top} must lie in [1, {count}]")
    iu, ju = np.triu_indices(n, k=1)
    w = W[iu, ju]
    desc = np.lexsort((ju, iu, -w))[:top]
    asc = np.lexsort((ju, iu, w))[:top]

    def entries(sel):
        return [
            PairEntry(int(iu[s]), int(ju[s]), float(w[s]), bool(labels[iu[s]] == labels[ju[s]]))
            for s in sel
        ]

    return PairRanking(entries(desc), entries(asc))
