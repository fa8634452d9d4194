"""Detectors mapping scan output to per-document suspicion scores.

Six detectors, each reading a different signature of hub behavior:

* hubness - robust z-score of the weighted hub rates (the core signal).
* cluster_spread - normalized entropy of a document's hits over query
  clusters; broad-coverage hubs light up many unrelated clusters.
* stability - retention of hit counts under Gaussian query perturbation;
  geometrically central items keep their hits.
* dedup - duplicate-cluster membership by text hash and embedding
  near-duplicates, with boilerplate damping.
* domain_hub - maximum per-domain hub z-score plus Gini concentration,
  exposing items dominant inside one semantic domain.
* cross_modal - robust z-score of hits whose query modality differs from
  the document's.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .clustering import fit_minibatch_kmeans
from .corpus import Corpus, QuerySet
from .errors import ParameterError
from .index import Index, knn_batch
from .scan import (
    BucketedAccumulator,
    HitWeighting,
    HubRates,
    RANK_WEIGHT_UNIFORM,
    DIST_WEIGHT_UNIFORM,
    compute_hub_rates,
    execute_scan,
)
from .seeds import derive_rng
from .stats import gini, robust_zscore

DETECTOR_HUBNESS = "hubness"
DETECTOR_CLUSTER_SPREAD = "cluster_spread"
DETECTOR_STABILITY = "stability"
DETECTOR_DEDUP = "dedup"
DETECTOR_DOMAIN = "domain_hub"
DETECTOR_CROSS_MODAL = "cross_modal"

ALL_DETECTORS = (
    DETECTOR_HUBNESS,
    DETECTOR_CLUSTER_SPREAD,
    DETECTOR_STABILITY,
    DETECTOR_DEDUP,
    DETECTOR_DOMAIN,
    DETECTOR_CROSS_MODAL,
)

METHOD_VECTOR = "vector"
METHOD_HYBRID = "hybrid"
METHOD_LEXICAL = "lexical"
VALID_METHODS = (METHOD_VECTOR, METHOD_HYBRID, METHOD_LEXICAL)

# Detectors that need semantic query embeddings; lexical retrieval skips them.
SEMANTIC_ONLY = (DETECTOR_CLUSTER_SPREAD, DETECTOR_STABILITY)

DEFAULT_SPREAD_CLUSTERS = 50
DEFAULT_STABILITY_CANDIDATES = 200
DEFAULT_STABILITY_PERTURBATIONS = 5
DEFAULT_STABILITY_SIGMA = 0.01
DEFAULT_NEAR_DUP_THRESHOLD = 0.98
DEFAULT_BOILERPLATE_MIN_CLUSTER = 10


@dataclass
class DetectorOutput:
    detector_id: str
    raw_scores: np.ndarray
    aux: dict = field(default_factory=dict)
    skipped: bool = False
    skip_reason: Optional[str] = None

    @classmethod
    def skip(cls, detector_id: str, n_docs: int, reason: str) -> "DetectorOutput":
        return cls(
            detector_id=detector_id,
            raw_scores=np.zeros(n_docs, dtype=np.float64),
            skipped=True,
            skip_reason=reason,
        )


def gate_detectors(method: str, requested) -> set:
    """Drop detectors incompatible with the configured retrieval method.

    Hubness and dedup work with vector, hybrid, and lexical retrieval;
    cluster spread and stability require semantic query embeddings and are
    skipped for lexical-only pipelines.
    """
    if method not in VALID_METHODS:
        raise ParameterError(f"unknown retrieval method {method!r}")
    requested = set(requested)
    unknown = requested - set(ALL_DETECTORS)
    if unknown:
        raise ParameterError(f"unknown detectors {sorted(unknown)}")
    if method == METHOD_LEXICAL:
        return requested - set(SEMANTIC_ONLY)
    return requested


def hubness_detect(rates: HubRates) -> DetectorOutput:
    """Robust z-score of hub rates; the primary anomaly signal."""
    rz = robust_zscore(rates.rates)
    return DetectorOutput(
        detector_id=DETECTOR_HUBNESS,
        raw_scores=rz.zscores,
        aux={
            "median": rz.median,
            "mad_scaled": rz.mad_scaled,
            "degenerate": rz.degenerate,
            "scope": rates.scope,
        },
    )


def cluster_spread_detect(
    index: Index,
    queries: QuerySet,
    n_clusters: int = DEFAULT_SPREAD_CLUSTERS,
    k: int = 20,
    seed: int = 0,
    acc: Optional[BucketedAccumulator] = None,
    retrieval_method: str = METHOD_VECTOR,
) -> DetectorOutput:
    """Normalized entropy of each document's hits across query clusters.

    Reuses ``acc.per_cluster_hits`` when the scan already bucketed by query
    cluster; otherwise fits a query cluster model and runs its own retrieval
    pass. Documents with zero hits score 0.
    """
    if retrieval_method == METHOD_LEXICAL:
        return DetectorOutput.skip(
            DETECTOR_CLUSTER_SPREAD, index.n_docs, "requires semantic query embeddings"
        )

    if acc is not None and acc.per_cluster_hits is not None:
        cluster_hits = acc.per_cluster_hits
    else:
        n_fit = min(n_clusters, queries.n_queries)
        model = fit_minibatch_kmeans(
            queries.embeddings, n_fit, seed=seed, spherical=index.metric == "cosine"
        )
        pass_acc = execute_scan(
            index,
            queries,
            k,
            weighting=HitWeighting(RANK_WEIGHT_UNIFORM, DIST_WEIGHT_UNIFORM),
            by_query_cluster=model,
        )
        cluster_hits = pass_acc.per_cluster_hits

    totals = cluster_hits.sum(axis=1)
    scores = np.zeros(index.n_docs, dtype=np.float64)
    hit = np.flatnonzero(totals > 0)
    if hit.size:
        p = cluster_hits[hit] / totals[hit, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.where(p > 0, np.log(p), 0.0)
        h = -(p * logp).sum(axis=1)
        scores[hit] = h / np.log(cluster_hits.shape[1])
    return DetectorOutput(
        detector_id=DETECTOR_CLUSTER_SPREAD,
        raw_scores=scores,
        aux={"total_cluster_hits": totals},
    )


def _count_candidate_hits(
    index: Index, query_matrix: np.ndarray, k: int, candidates: np.ndarray
) -> np.ndarray:
    """Top-k membership counts restricted to candidate docs.

    Works in float32 with a values-only partition for the per-query k-th
    similarity: a candidate is in the top-k when it beats that threshold
    (boundary ties fall back to an exact per-row rank check).
    """
    emb = index.embeddings_f32
    n = index.n_docs
    k_eff = min(k, n)
    q = np.asarray(query_matrix, dtype=np.float32)
    counts = np.zeros(candidates.size, dtype=np.int64)
    batch = 512
    for start in range(0, q.shape[0], batch):
        sims = q[start : start + batch] @ emb.T
        if k_eff >= n:
            counts += sims.shape[0]
            continue
        thr = np.partition(sims, n - k_eff, axis=1)[:, n - k_eff]
        cand_sims = sims[:, candidates]
        counts += (cand_sims > thr[:, None]).sum(axis=0)
        tie_rows, tie_cols = np.nonzero(cand_sims == thr[:, None])
        for row, col in zip(tie_rows, tie_cols):
            doc = candidates[col]
            row_sims = sims[row]
            greater = int((row_sims > row_sims[doc]).sum())
            equal_below = int(
                (row_sims[:doc] == row_sims[doc]).sum()
            )
            if greater + equal_below < k_eff:
                counts[col] += 1
    return counts


def stability_detect(
    index: Index,
    queries: QuerySet,
    candidates,
    n_perturbations: int = DEFAULT_STABILITY_PERTURBATIONS,
    sigma: float = DEFAULT_STABILITY_SIGMA,
    k: int = 20,
    seed: int = 0,
    original_hits: Optional[np.ndarray] = None,
    retrieval_method: str = METHOD_VECTOR,
) -> DetectorOutput:
    """Hit retention of candidate docs under Gaussian query perturbation.

    For each perturbation round the full query set is jittered with
    N(0, sigma^2 I) noise, renormalized, and re-scanned; a candidate's raw
    score is the mean perturbed/original hit ratio, clamped to [0, 1.5] and
    capped at 1. Zero-hit candidates score 0 rather than dividing by zero.
    ``original_hits`` (full-length raw counts from the unperturbed scan) can
    be supplied to avoid a redundant pass.
    """
    if retrieval_method == METHOD_LEXICAL:
        return DetectorOutput.skip(
            DETECTOR_STABILITY, index.n_docs, "requires semantic query embeddings"
        )
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size == 0:
        raise ParameterError("stability_detect requires a non-empty candidate list")

    if original_hits is None:
        base = _count_candidate_hits(index, queries.embeddings, k, cand)
    else:
        base = np.asarray(original_hits)[cand]

    # sigma is the expected noise-vector norm: per-coordinate std sigma/sqrt(D)
    # keeps the perturbation angle dimension-independent. A literal
    # per-coordinate sigma of 0.15 in high dimension would replace the query
    # wholesale instead of jittering it.
    coord_sigma = sigma / np.sqrt(queries.embeddings.shape[1])
    ratios = np.zeros((n_perturbations, cand.size), dtype=np.float64)
    perturbed_means = np.zeros(cand.size, dtype=np.float64)
    for p in range(n_perturbations):
        rng = derive_rng(seed, "stability", p)
        noise = rng.normal(0.0, coord_sigma, size=queries.embeddings.shape)
        perturbed = queries.embeddings.astype(np.float64) + noise
        norms = np.linalg.norm(perturbed, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        perturbed /= norms
        hits = _count_candidate_hits(index, perturbed, k, cand)
        perturbed_means += hits / n_perturbations
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[p] = np.where(base > 0, hits / np.maximum(base, 1), 0.0)

    mean_ratio = ratios.mean(axis=0)
    clamped = np.minimum(np.clip(mean_ratio, 0.0, 1.5), 1.0)
    clamped[base == 0] = 0.0

    scores = np.zeros(index.n_docs, dtype=np.float64)
    scores[cand] = clamped
    return DetectorOutput(
        detector_id=DETECTOR_STABILITY,
        raw_scores=scores,
        aux={
            "candidates": cand,
            "original_hits": base,
            "mean_perturbed_hits": perturbed_means,
            "mean_ratio_unclipped": mean_ratio,
            "sigma": sigma,
        },
    )


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Smaller root wins, keeping cluster ids deterministic.
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def dedup_detect(
    corpus: Corpus,
    index: Index,
    near_dup_threshold: float = DEFAULT_NEAR_DUP_THRESHOLD,
    boilerplate_min_cluster: int = DEFAULT_BOILERPLATE_MIN_CLUSTER,
) -> DetectorOutput:
    """Duplicate-cluster scores from text hashes and embedding near-dups.

    Documents sharing a text_hash are grouped exactly, then pairs with
    cosine similarity >= the threshold are unioned in. A doc in a cluster
    of size s >= 2 scores log2(s); clusters at or above
    ``boilerplate_min_cluster`` are damped by 1/log2(s) (templated content
    should not dominate the ranking). Singletons score 0.
    """
    if not 0.0 < near_dup_threshold <= 1.0:
        raise ParameterError(f"near_dup_threshold {near_dup_threshold} outside (0, 1]")
    n = corpus.n_docs
    uf = _UnionFind(n)

    by_hash: dict = {}
    for i, m in enumerate(corpus.metadata):
        if m.text_hash is not None:
            by_hash.setdefault(m.text_hash, []).append(i)
    for members in by_hash.values():
        for j in members[1:]:
            uf.union(members[0], j)

    # Embedding near-duplicates: batched exact similarity over the upper
    # triangle only (pair (i, j) is only ever examined once).
    emb = corpus.embeddings
    batch = 512
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        sims = emb[start:stop] @ emb[start:].T
        for row in range(stop - start):
            i = start + row
            close = np.flatnonzero(sims[row, row + 1 :] >= near_dup_threshold)
            for offset in close:
                uf.union(i, i + 1 + int(offset))

    cluster_ids = np.array([uf.find(i) for i in range(n)], dtype=np.int64)
    sizes_by_root: dict = {}
    for r in cluster_ids:
        sizes_by_root[r] = sizes_by_root.get(r, 0) + 1
    sizes = np.array([sizes_by_root[r] for r in cluster_ids], dtype=np.int64)

    scores = np.zeros(n, dtype=np.float64)
    multi = sizes >= 2
    scores[multi] = np.log2(sizes[multi])
    boiler = sizes >= boilerplate_min_cluster
    scores[boiler] = scores[boiler] / np.log2(sizes[boiler])

    return DetectorOutput(
        detector_id=DETECTOR_DEDUP,
        raw_scores=scores,
        aux={"cluster_ids": cluster_ids, "cluster_sizes": sizes},
    )


def domain_detect(acc: BucketedAccumulator, domains=None) -> DetectorOutput:
    """Per-domain hubness: max domain z-score, dominant domain, and Gini.

    For each domain, hub rates are computed over that domain's queries and
    standardized across the documents actually hit by them (the vector's
    support); documents with no hits in a domain take z = 0 there. The raw
    score is the maximum domain-level z across domains.
    """
    if acc.per_domain_hits is None:
        return DetectorOutput.skip(
            DETECTOR_DOMAIN, acc.n_docs, "scan was not bucketed by domain"
        )
    labels = sorted(domains) if domains is not None else sorted(acc.per_domain_hits)
    labels = [d for d in labels if acc.n_queries_per_domain.get(d, 0) > 0]
    if len(labels) < 2:
        return DetectorOutput.skip(
            DETECTOR_DOMAIN, acc.n_docs, "fewer than 2 domains with queries"
        )

    n = acc.n_docs
    rate_matrix = np.zeros((len(labels), n), dtype=np.float64)
    z_matrix = np.zeros((len(labels), n), dtype=np.float64)
    for row, d in enumerate(labels):
        rates = compute_hub_rates(acc, domain=d).rates
        rate_matrix[row] = rates
        support = np.flatnonzero(rates > 0)
        if support.size:
            z_matrix[row, support] = robust_zscore(rates[support]).zscores

    max_z = z_matrix.max(axis=0)
    dominant_row = rate_matrix.argmax(axis=0)  # ties -> lowest label by sort order
    dominant = np.array([labels[r] for r in dominant_row], dtype=object)
    dominant[rate_matrix.sum(axis=0) == 0] = None

    totals = rate_matrix.sum(axis=0)
    ginis = np.zeros(n, dtype=np.float64)
    hit = np.flatnonzero(totals > 0)
    for i in hit:
        ginis[i] = gini(rate_matrix[:, i])

    return DetectorOutput(
        detector_id=DETECTOR_DOMAIN,
        raw_scores=max_z,
        aux={
            "max_domain_z": max_z,
            "dominant_domain": dominant,
            "gini_concentration": ginis,
            "domains": labels,
        },
    )


def crossmodal_detect(acc: BucketedAccumulator) -> DetectorOutput:
    """Robust z-score over cross-modal hit rates.

    The cross-modal rate is cross-modal weighted hits divided by total
    queries; aux reports each doc's cross-modal share of its total hits and
    the query modality contributing most of its hits.
    """
    if acc.per_modality_hits is None or acc.cross_modal_hits is None:
        return DetectorOutput.skip(
            DETECTOR_CROSS_MODAL, acc.n_docs, "no modality metadata in scan"
        )
    basis = max(acc.n_queries_processed, 1)
    rates = acc.cross_modal_hits / basis
    rz = robust_zscore(rates)

    ratio = acc.cross_modal_hits / np.maximum(acc.total_weighted_hits, 1.0)
    mods = sorted(acc.per_modality_hits)
    stacked = np.stack([acc.per_modality_hits[m] for m in mods])
    dominant = np.array([mods[r] for r in stacked.argmax(axis=0)], dtype=object)
    dominant[stacked.sum(axis=0) == 0] = None

    return DetectorOutput(
        detector_id=DETECTOR_CROSS_MODAL,
        raw_scores=rz.zscores,
        aux={
            "cross_modal_ratio": ratio,
            "dominant_query_modality": dominant,
            "degenerate": rz.degenerate,
        },
    )
