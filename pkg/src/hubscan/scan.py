"""Retrieval execution and weighted, bucketed hit accumulation.

One pass over the sampled queries retrieves top-k neighbors for each and
credits every retrieved document with a weight that favors top ranks and
high similarities. Optional buckets split the tallies by query domain, by
query modality (tracking cross-modal hits), and by query cluster.

Determinism: the query set is always processed in fixed-size batches and
batch accumulators are merged left-to-right in batch order, so the float
sums are byte-identical regardless of how many workers computed them.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .clustering import ClusterModel, assign_clusters
from .corpus import QuerySet
from .errors import ConfigurationError, MergeError, ParameterError, ScopeError
from .index import Index, knn_batch

RANK_WEIGHT_UNIFORM = "uniform"
RANK_WEIGHT_INVERSE_LOG = "inverse_log_rank"
DIST_WEIGHT_UNIFORM = "uniform"
DIST_WEIGHT_SIMILARITY = "similarity"

WEIGHT_FLOOR = 1e-6
DEFAULT_BATCH_SIZE = 256


@dataclass(frozen=True)
class HitWeighting:
    """Weight of a retrieval hit at rank r (1-based) with similarity s.

    uniform rank weight: 1; inverse_log_rank: 1 / log2(r + 1) (DCG-style).
    uniform distance weight: 1; similarity: s clamped into [1e-6, 1].
    All weights land in (0, 1].
    """

    rank_weight_kind: str = RANK_WEIGHT_INVERSE_LOG
    dist_weight_kind: str = DIST_WEIGHT_SIMILARITY

    def rank_weights(self, k: int) -> np.ndarray:
        if self.rank_weight_kind == RANK_WEIGHT_UNIFORM:
            return np.ones(k, dtype=np.float64)
        if self.rank_weight_kind == RANK_WEIGHT_INVERSE_LOG:
            ranks = np.arange(1, k + 1, dtype=np.float64)
            return 1.0 / np.log2(ranks + 1.0)
        raise ParameterError(f"unknown rank weight kind {self.rank_weight_kind!r}")

    def dist_weights(self, sims: np.ndarray) -> np.ndarray:
        if self.dist_weight_kind == DIST_WEIGHT_UNIFORM:
            return np.ones_like(sims)
        if self.dist_weight_kind == DIST_WEIGHT_SIMILARITY:
            return np.clip(sims, WEIGHT_FLOOR, 1.0)
        raise ParameterError(f"unknown dist weight kind {self.dist_weight_kind!r}")


@dataclass
class BucketedAccumulator:
    """Per-document hit totals, mergeable across scan shards.

    ``per_domain_hits`` buckets weighted hits by the *query's* domain label;
    ``per_cluster_hits`` is a dense (N, n_clusters) matrix of raw counts by
    query cluster; ``per_modality_hits`` buckets weighted hits by query
    modality, and ``cross_modal_hits`` totals hits whose query modality
    differs from the document's (pairs with a missing label are skipped).
    """

    n_docs: int
    total_weighted_hits: np.ndarray
    raw_hit_counts: np.ndarray
    n_queries_processed: int = 0
    per_domain_hits: Optional[dict] = None
    n_queries_per_domain: Optional[dict] = None
    per_cluster_hits: Optional[np.ndarray] = None
    per_modality_hits: Optional[dict] = None
    cross_modal_hits: Optional[np.ndarray] = None

    @classmethod
    def empty(
        cls,
        n_docs: int,
        by_domain: bool = False,
        n_clusters: Optional[int] = None,
        by_modality: bool = False,
    ) -> "BucketedAccumulator":
        return cls(
            n_docs=n_docs,
            total_weighted_hits=np.zeros(n_docs, dtype=np.float64),
            raw_hit_counts=np.zeros(n_docs, dtype=np.int64),
            per_domain_hits={} if by_domain else None,
            n_queries_per_domain={} if by_domain else None,
            per_cluster_hits=(
                np.zeros((n_docs, n_clusters), dtype=np.float64)
                if n_clusters is not None
                else None
            ),
            per_modality_hits={} if by_modality else None,
            cross_modal_hits=np.zeros(n_docs, dtype=np.float64) if by_modality else None,
        )

    def schema(self) -> tuple:
        return (
            self.n_docs,
            self.per_domain_hits is not None,
            None if self.per_cluster_hits is None else self.per_cluster_hits.shape[1],
            self.per_modality_hits is not None,
        )


@dataclass(frozen=True)
class HubRates:
    """Weighted hits normalized by the query count of the chosen scope."""

    rates: np.ndarray
    scope: str  # "global" or a domain label
    n_queries_basis: int


def merge_accumulators(a: BucketedAccumulator, b: BucketedAccumulator) -> BucketedAccumulator:
    """Field-wise sum of two accumulators with identical schemas."""
    if a.schema() != b.schema():
        raise MergeError(f"accumulator schemas differ: {a.schema()} vs {b.schema()}")
    out = BucketedAccumulator(
        n_docs=a.n_docs,
        total_weighted_hits=a.total_weighted_hits + b.total_weighted_hits,
        raw_hit_counts=a.raw_hit_counts + b.raw_hit_counts,
        n_queries_processed=a.n_queries_processed + b.n_queries_processed,
    )
    if a.per_domain_hits is not None:
        domains = sorted(set(a.per_domain_hits) | set(b.per_domain_hits))
        out.per_domain_hits = {}
        out.n_queries_per_domain = {}
        zeros = np.zeros(a.n_docs, dtype=np.float64)
        for d in domains:
            out.per_domain_hits[d] = a.per_domain_hits.get(d, zeros) + b.per_domain_hits.get(
                d, zeros
            )
            out.n_queries_per_domain[d] = a.n_queries_per_domain.get(
                d, 0
            ) + b.n_queries_per_domain.get(d, 0)
    if a.per_cluster_hits is not None:
        out.per_cluster_hits = a.per_cluster_hits + b.per_cluster_hits
    if a.per_modality_hits is not None:
        mods = sorted(set(a.per_modality_hits) | set(b.per_modality_hits))
        zeros = np.zeros(a.n_docs, dtype=np.float64)
        out.per_modality_hits = {
            m: a.per_modality_hits.get(m, zeros) + b.per_modality_hits.get(m, zeros)
            for m in mods
        }
        out.cross_modal_hits = a.cross_modal_hits + b.cross_modal_hits
    return out


def _scan_batch(
    index: Index,
    queries: QuerySet,
    rows: np.ndarray,
    k: int,
    weighting: HitWeighting,
    by_domain: bool,
    query_clusters: Optional[np.ndarray],
    n_clusters: Optional[int],
    by_modality: bool,
    doc_modalities: Optional[list],
) -> BucketedAccumulator:
    acc = BucketedAccumulator.empty(
        index.n_docs, by_domain=by_domain, n_clusters=n_clusters, by_modality=by_modality
    )
    idx, sims = knn_batch(index, queries.embeddings[rows], k)
    k_eff = idx.shape[1]
    weights = weighting.rank_weights(k_eff)[None, :] * weighting.dist_weights(sims)

    flat_idx = idx.ravel()
    flat_w = weights.ravel()
    np.add.at(acc.total_weighted_hits, flat_idx, flat_w)
    np.add.at(acc.raw_hit_counts, flat_idx, 1)
    acc.n_queries_processed = len(rows)

    if by_domain:
        batch_domains = [queries.domains[q] for q in rows]
        for d in sorted({x for x in batch_domains if x is not None}):
            mask = np.array([x == d for x in batch_domains])
            bucket = np.zeros(index.n_docs, dtype=np.float64)
            np.add.at(bucket, idx[mask].ravel(), weights[mask].ravel())
            acc.per_domain_hits[d] = bucket
            acc.n_queries_per_domain[d] = int(mask.sum())

    if n_clusters is not None:
        cl = query_clusters[rows]
        np.add.at(
            acc.per_cluster_hits,
            (flat_idx, np.repeat(cl, k_eff)),
            1.0,
        )

    if by_modality:
        batch_mods = [queries.modalities[q] for q in rows]
        doc_mods = np.array(
            [m if m is not None else "" for m in doc_modalities], dtype=object
        )
        for m in sorted({x for x in batch_mods if x is not None}):
            mask = np.array([x == m for x in batch_mods])
            bucket = np.zeros(index.n_docs, dtype=np.float64)
            np.add.at(bucket, idx[mask].ravel(), weights[mask].ravel())
            acc.per_modality_hits[m] = bucket
            # Cross-modal: document has a label and it differs from m.
            hit_doc_mods = doc_mods[idx[mask]]
            cross = (hit_doc_mods != "") & (hit_doc_mods != m)
            np.add.at(
                acc.cross_modal_hits, idx[mask][cross].ravel(), weights[mask][cross].ravel()
            )
    return acc


def execute_scan(
    index: Index,
    queries: QuerySet,
    k: int,
    weighting: HitWeighting = HitWeighting(),
    by_domain: bool = False,
    by_modality: bool = False,
    doc_modalities: Optional[list] = None,
    by_query_cluster: Optional[ClusterModel] = None,
    workers: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> BucketedAccumulator:
    """Run retrieval for every query and accumulate bucketed hits.

    The batch size is part of the arithmetic (it fixes the float summation
    grouping); the worker count only parallelizes batches and never changes
    the result. Modality bucketing needs ``doc_modalities``, the per-row
    document modality labels (None entries are skipped, not guessed).
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    if by_domain and queries.domains is None:
        raise ConfigurationError("by_domain requested but queries carry no domain labels")
    if by_modality and queries.modalities is None:
        raise ConfigurationError(
            "by_modality requested but queries carry no modality labels"
        )
    if by_modality and doc_modalities is None:
        raise ConfigurationError(
            "by_modality requested but no document modality labels were supplied"
        )

    query_clusters = None
    n_clusters = None
    if by_query_cluster is not None:
        query_clusters = assign_clusters(by_query_cluster, queries.embeddings)
        n_clusters = by_query_cluster.n_clusters

    q = queries.n_queries
    batches = [
        np.arange(start, min(start + batch_size, q)) for start in range(0, q, batch_size)
    ]

    def run(rows):
        return _scan_batch(
            index,
            queries,
            rows,
            k,
            weighting,
            by_domain,
            query_clusters,
            n_clusters,
            by_modality,
            doc_modalities,
        )

    if workers <= 1 or len(batches) <= 1:
        parts = [run(rows) for rows in batches]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, batches))

    acc = BucketedAccumulator.empty(
        index.n_docs, by_domain=by_domain, n_clusters=n_clusters, by_modality=by_modality
    )
    for part in parts:  # fixed left-to-right merge order
        acc = merge_accumulators(acc, part)
    return acc


def compute_hub_rates(acc: BucketedAccumulator, domain: Optional[str] = None) -> HubRates:
    """Normalize weighted hits into per-document hub rates.

    Global scope divides by the total processed queries; a domain scope
    divides that domain's weighted hits by that domain's query count (the
    domain-scoped scanning primitive).
    """
    if domain is None:
        basis = acc.n_queries_processed
        rates = acc.total_weighted_hits / basis if basis else np.zeros(acc.n_docs)
        return HubRates(rates=rates, scope="global", n_queries_basis=basis)
    if acc.per_domain_hits is None or domain not in acc.per_domain_hits:
        raise ScopeError(f"domain {domain!r} not present in accumulator")
    basis = acc.n_queries_per_domain[domain]
    rates = acc.per_domain_hits[domain] / basis if basis else np.zeros(acc.n_docs)
    return HubRates(rates=rates, scope=domain, n_queries_basis=basis)
