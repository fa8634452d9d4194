"""Scan query construction: mixed centroid / random-document / real sampling.

Centroid queries come from MiniBatch K-Means over the item embeddings and
inherit the majority domain label of their cluster members, so that
domain-bucketed statistics stay meaningful for synthesized queries.
Random-document queries are corpus rows (without replacement until the
corpus is exhausted) and inherit the source document's labels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .clustering import assign_clusters, fit_minibatch_kmeans
from .corpus import METRIC_COSINE, Corpus, QuerySet
from .errors import ParameterError
from .seeds import derive_rng

PROVENANCE_CENTROID = "centroid"
PROVENANCE_RANDOM_DOC = "random_doc"
PROVENANCE_REAL = "real"

FRACTION_SUM_TOL = 1e-9


@dataclass
class SamplingConfig:
    total: int
    frac_centroid: float = 0.5
    frac_random: float = 0.5
    frac_real: float = 0.0
    n_centroid_clusters: Optional[int] = None  # default min(256, 4 * floor(sqrt(N)))
    kmeans_batch_size: int = 1024
    kmeans_max_iters: int = 25
    # Fit the centroid k-means on at most this many rows (deterministic
    # subsample); keeps centroid sampling tractable on very large corpora.
    fit_sample_cap: int = 25_000
    seed: int = 0


def default_centroid_clusters(n_docs: int) -> int:
    return max(1, min(256, int(np.sqrt(n_docs)) * 4))


def _largest_remainder_counts(total: int, fractions) -> list:
    """Integer counts summing exactly to ``total`` (largest-remainder method).

    Remainder ties break toward the earlier strategy, keeping the split
    deterministic.
    """
    raw = [total * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    short = total - sum(counts)
    remainders = sorted(
        range(len(fractions)), key=lambda i: (-(raw[i] - counts[i]), i)
    )
    for i in remainders[:short]:
        counts[i] += 1
    return counts


def _majority_label(labels: list) -> Optional[str]:
    present = [x for x in labels if x is not None]
    if not present:
        return None
    counts: dict = {}
    for x in present:
        counts[x] = counts.get(x, 0) + 1
    best = max(counts.values())
    return sorted(x for x, c in counts.items() if c == best)[0]


def sample_queries(
    corpus: Corpus,
    real_queries: Optional[QuerySet],
    config: SamplingConfig,
) -> QuerySet:
    """Build exactly ``config.total`` scan queries with provenance tags.

    Fractions must sum to 1; ``frac_real`` requires a real query set. When
    fewer real queries exist than requested, all of them are used and the
    shortfall is reassigned to the random-document pool. Deterministic for
    a fixed seed.
    """
    if config.total < 1:
        raise ParameterError("total must be >= 1")
    frac_sum = config.frac_centroid + config.frac_random + config.frac_real
    if abs(frac_sum - 1.0) > FRACTION_SUM_TOL:
        raise ParameterError(f"fractions sum to {frac_sum}, expected 1.0")
    if config.frac_real > 0 and (real_queries is None or real_queries.n_queries == 0):
        raise ParameterError("frac_real > 0 but no real queries were provided")

    n_centroid, n_random, n_real = _largest_remainder_counts(
        config.total, [config.frac_centroid, config.frac_random, config.frac_real]
    )
    if real_queries is not None and n_real > real_queries.n_queries:
        n_random += n_real - real_queries.n_queries
        n_real = real_queries.n_queries

    n = corpus.n_docs
    blocks = []
    modalities: list = []
    domains: list = []
    provenance: list = []

    if n_centroid > 0:
        k = config.n_centroid_clusters or default_centroid_clusters(n)
        k = min(k, n)
        if n > config.fit_sample_cap:
            fit_rng = derive_rng(config.seed, "sampling", "kmeans_fit")
            fit_rows = np.sort(fit_rng.choice(n, size=config.fit_sample_cap, replace=False))
            fit_points = corpus.embeddings[fit_rows]
        else:
            fit_points = corpus.embeddings
        model = fit_minibatch_kmeans(
            fit_points,
            min(k, fit_points.shape[0]),
            batch_size=config.kmeans_batch_size,
            max_iters=config.kmeans_max_iters,
            seed=config.seed,
            spherical=corpus.metric == METRIC_COSINE,
        )
        k = model.n_clusters
        # Majority domain of each cluster's member documents.
        member_labels = assign_clusters(model, corpus.embeddings)
        cluster_domain = []
        for c in range(k):
            members = np.flatnonzero(member_labels == c)
            cluster_domain.append(
                _majority_label([corpus.metadata[i].domain for i in members])
            )
        rng = derive_rng(config.seed, "sampling", "centroid")
        if n_centroid <= k:
            chosen = rng.choice(k, size=n_centroid, replace=False)
        else:
            # Repetition only once the distinct centroids are exhausted,
            # keeping per-centroid multiplicity as even as possible.
            full_rounds = n_centroid // k
            remainder = n_centroid - full_rounds * k
            chosen = np.concatenate(
                [np.tile(np.arange(k), full_rounds),
                 rng.choice(k, size=remainder, replace=False)]
            )
        blocks.append(model.centroids[chosen])
        domains.extend(cluster_domain[c] for c in chosen)
        modalities.extend([None] * n_centroid)
        provenance.extend([PROVENANCE_CENTROID] * n_centroid)

    if n_random > 0:
        rng = derive_rng(config.seed, "sampling", "random_doc")
        if n_random <= n:
            chosen = rng.choice(n, size=n_random, replace=False)
        else:
            extra = rng.choice(n, size=n_random - n, replace=True)
            chosen = np.concatenate([np.arange(n), extra])
        blocks.append(corpus.embeddings[chosen].astype(np.float64))
        domains.extend(corpus.metadata[i].domain for i in chosen)
        modalities.extend(corpus.metadata[i].modality for i in chosen)
        provenance.extend([PROVENANCE_RANDOM_DOC] * n_random)

    if n_real > 0:
        rng = derive_rng(config.seed, "sampling", "real")
        if n_real < real_queries.n_queries:
            chosen = np.sort(rng.choice(real_queries.n_queries, size=n_real, replace=False))
        else:
            chosen = np.arange(real_queries.n_queries)
        blocks.append(real_queries.embeddings[chosen].astype(np.float64))
        for i in chosen:
            domains.append(
                real_queries.domains[i] if real_queries.domains is not None else None
            )
            modalities.append(
                real_queries.modalities[i] if real_queries.modalities is not None else None
            )
        provenance.extend([PROVENANCE_REAL] * n_real)

    embeddings = np.vstack(blocks).astype(np.float32)
    if corpus.metric == METRIC_COSINE:
        # Renormalize only rows meaningfully off unit norm: random-doc
        # queries must stay bit-identical to their source corpus rows.
        norms = np.linalg.norm(embeddings, axis=1)
        off = np.abs(norms - 1.0) > 1e-4
        if off.any():
            embeddings[off] = embeddings[off] / norms[off, None]

    return QuerySet(
        embeddings=embeddings,
        modalities=modalities if any(m is not None for m in modalities) else None,
        domains=domains if any(d is not None for d in domains) else None,
        provenance=provenance,
    )
