"""Exact (flat) k-nearest-neighbor search over the corpus.

The index stores a float64 copy of the corpus embeddings and answers
queries by exhaustive scoring, so results are exact by construction:
the top-k equals the full argsort under the ordering key
(descending similarity, ascending row index). Scoring in float64 keeps
the fast batched path and any independent per-row oracle in agreement.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class NeighborList:
    """Top-k result: unique doc indices ordered by non-increasing similarity."""

    doc_indices: np.ndarray
    similarities: np.ndarray


@dataclass(frozen=True)
class Index:
    """Read-only flat index; safe for concurrent queries.

    Keeps a float32 copy alongside the float64 scoring matrix for bulk
    counting passes that do not feed reported statistics.
    """

    embeddings: np.ndarray  # float64, N x D
    embeddings_f32: np.ndarray
    metric: str

    @property
    def n_docs(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


def build_index(corpus: Corpus) -> Index:
    """Build a flat index answering queries for exactly the corpus rows."""
    if corpus.n_docs == 0:
        raise ParameterError("cannot build an index over an empty corpus")
    return Index(
        embeddings=corpus.embeddings.astype(np.float64),
        embeddings_f32=corpus.embeddings.astype(np.float32),
        metric=corpus.metric,
    )


def _order_full(sims: np.ndarray) -> np.ndarray:
    """Order all columns of a similarity batch by (-sim, index).

    A stable descending sort over columns already in ascending index order
    breaks similarity ties toward the lower index.
    """
    return np.argsort(-sims, axis=1, kind="stable")


def knn_batch(index: Index, queries: np.ndarray, k: int):
    """Exact top-k for a batch of queries.

    Parameters
    ----------
    queries : (B, D) array
    k : int, >= 1; truncated to N when k > N.

    Returns
    -------
    (indices, sims) : (B, k') int64 and float64 arrays, k' = min(k, N),
        each row ordered by descending similarity, ties by ascending index.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[1] != index.dim:
        raise ShapeError(f"query dim {q.shape[1]} != index dim {index.dim}")

    n = index.n_docs
    k_eff = min(k, n)
    sims = q @ index.embeddings.T  # (B, N)

    if k_eff == n:
        order = _order_full(sims)
        return order.astype(np.int64), np.take_along_axis(sims, order, axis=1)

    # Unordered top-k candidates; ties at the k-th value may pick wrong rows.
    cand = np.argpartition(sims, n - k_eff, axis=1)[:, n - k_eff:]
    cand.sort(axis=1)  # ascending index so the stable sort breaks ties low
    cand_sims = np.take_along_axis(sims, cand, axis=1)
    order = np.argsort(-cand_sims, axis=1, kind="stable")
    top_idx = np.take_along_axis(cand, order, axis=1)
    top_sims = np.take_along_axis(cand_sims, order, axis=1)

    # Correct rows where the tie group at the boundary value extends past k:
    # the selected members of that group must be the lowest corpus indices.
    boundary = top_sims[:, -1]
    eq_total = (sims == boundary[:, None]).sum(axis=1)
    eq_selected = (top_sims == boundary[:, None]).sum(axis=1)
    for row in np.flatnonzero(eq_total > eq_selected):
        row_sims = sims[row]
        thr = boundary[row]
        greater = np.flatnonzero(row_sims > thr)
        greater = greater[np.argsort(-row_sims[greater], kind="stable")]
        equal = np.flatnonzero(row_sims == thr)[: k_eff - greater.size]
        top_idx[row] = np.concatenate([greater, equal])
        top_sims[row] = row_sims[top_idx[row]]

    return top_idx.astype(np.int64), top_sims


def knn(index: Index, query: np.ndarray, k: int) -> NeighborList:
    """Exact top-k for one query vector."""
    idx, sims = knn_batch(index, np.asarray(query), k)
    return NeighborList(doc_indices=idx[0], similarities=sims[0])
