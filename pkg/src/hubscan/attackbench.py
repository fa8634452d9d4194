"""Adversarial hub synthesis and benchmark corpus construction.

Three hub variants:

* universal - momentum gradient ascent of sum-of-similarities to a diverse
  target query set, constrained to the unit sphere.
* domain_targeted - same objective plus a repulsion term penalizing
  similarity to out-of-domain negatives (weight lambda_neg).
* centroid - a weighted average of document embeddings, renormalized;
  geometrically planted rather than optimized, hence brittle.

The synthetic corpus generator samples a mixture of concentrated
components on the unit sphere. A shared "cone" direction with tunable
strength models the anisotropy of real embedding spaces, which is what
makes broad-coverage hub attacks effective in the first place; component
sizes can be skewed so that some semantic regions are much more popular
than others.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import METRIC_COSINE, Corpus, DocumentMeta
from .errors import DegenerateHubError, ParameterError, SafetyError, ShapeError
from .seeds import derive_rng

VARIANT_UNIVERSAL = "universal"
VARIANT_DOMAIN = "domain_targeted"
VARIANT_CENTROID = "centroid"
VALID_VARIANTS = (VARIANT_UNIVERSAL, VARIANT_DOMAIN, VARIANT_CENTROID)

SCHEDULE_COSINE_LR = "cosine_lr"


@dataclass
class HubRecipe:
    """Parameters of one synthesized hub."""

    variant: str
    target_queries: np.ndarray
    negative_queries: Optional[np.ndarray] = None
    lambda_neg: float = 3.0
    momentum: float = 0.9
    learning_rate: float = 0.12
    steps: int = 1000
    schedule: str = SCHEDULE_COSINE_LR
    seed: int = 0
    target_domain: Optional[str] = None

    def summary(self) -> dict:
        """Metadata-safe description (matrices reduced to shapes)."""
        return {
            "variant": self.variant,
            "n_targets": int(self.target_queries.shape[0]),
            "n_negatives": (
                0 if self.negative_queries is None else int(self.negative_queries.shape[0])
            ),
            "lambda_neg": self.lambda_neg,
            "momentum": self.momentum,
            "learning_rate": self.learning_rate,
            "steps": self.steps,
            "schedule": self.schedule,
            "seed": self.seed,
            "target_domain": self.target_domain,
        }


@dataclass
class SyntheticCorpusSpec:
    n_docs: int
    dim: int
    n_clusters: int
    intra_cluster_concentration: float = 4.0
    cone_strength: float = 0.0
    cluster_weights: Optional[list] = None
    seed: int = 0


def _check_unit_rows(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ParameterError(f"{what} must be a non-empty 2-D matrix")
    norms = np.linalg.norm(m, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-4):
        raise ParameterError(f"{what} rows must be unit-norm")
    return m


def optimize_hub(recipe: HubRecipe, track_objective: bool = False):
    """Momentum gradient ascent of the hub objective on the unit sphere.

    Maximizes sum of similarities to the targets, minus ``lambda_neg`` times
    the sum of similarities to the negatives for the domain variant. The
    learning rate follows a cosine schedule; the iterate is renormalized
    after every step, and during the final 10% of steps an update is kept
    only if it does not decrease the objective, so the tail trajectory is
    non-decreasing. Deterministic for a fixed recipe.
    """
    if recipe.variant not in VALID_VARIANTS:
        raise ParameterError(f"unknown hub variant {recipe.variant!r}")
    if recipe.schedule != SCHEDULE_COSINE_LR:
        raise ParameterError(f"unknown schedule {recipe.schedule!r}")
    targets = _check_unit_rows(recipe.target_queries, "target_queries")

    grad = targets.sum(axis=0)
    use_negatives = (
        recipe.variant == VARIANT_DOMAIN
        and recipe.negative_queries is not None
        and recipe.lambda_neg != 0.0
    )
    if use_negatives:
        negatives = _check_unit_rows(recipe.negative_queries, "negative_queries")
        grad = grad - recipe.lambda_neg * negatives.sum(axis=0)

    # Warm start at the normalized target mean.
    h = targets.mean(axis=0)
    norm = np.linalg.norm(h)
    if norm < 1e-12:
        h = targets[0].copy()
    else:
        h = h / norm

    def objective(v: np.ndarray) -> float:
        return float(v @ grad)

    velocity = np.zeros_like(h)
    obj = objective(h)
    tail_start = int(np.ceil(0.9 * recipe.steps))
    trajectory = [obj] if track_objective else None

    for t in range(recipe.steps):
        eta = recipe.learning_rate * (1.0 + np.cos(np.pi * t / recipe.steps)) / 2.0
        velocity = recipe.momentum * velocity + grad
        candidate = h + eta * velocity
        candidate = candidate / np.linalg.norm(candidate)
        cand_obj = objective(candidate)
        if t >= tail_start and cand_obj < obj:
            # Keep the better iterate; the schedule keeps shrinking so the
            # tail objective is exactly non-decreasing.
            if track_objective:
                trajectory.append(obj)
            continue
        h = candidate
        obj = cand_obj
        if track_objective:
            trajectory.append(obj)

    if track_objective:
        return h, np.array(trajectory)
    return h


def centroid_hub(doc_embeddings, weights=None) -> np.ndarray:
    """Weighted average of document embeddings, renormalized to unit norm."""
    docs = np.asarray(doc_embeddings, dtype=np.float64)
    if docs.ndim != 2 or docs.shape[0] < 2:
        raise ParameterError("centroid_hub requires at least 2 documents")
    if weights is None:
        mean = docs.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (docs.shape[0],):
            raise ParameterError("weights length must match document count")
        if np.any(w < 0):
            raise ParameterError("weights must be non-negative")
        total = w.sum()
        if total <= 0:
            raise ParameterError("weights must not all be zero")
        mean = (docs * w[:, None]).sum(axis=0) / total
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        raise DegenerateHubError("weighted mean collapsed to the zero vector")
    return mean / norm


def plant_hubs(
    corpus: Corpus,
    hubs,
    mark_adversarial: bool = True,
    allow_non_benchmark: bool = False,
    id_prefix: str = "hub",
) -> Corpus:
    """Append hub rows to a corpus and return the poisoned benchmark copy.

    ``hubs`` is a list of (embedding, recipe) pairs; each recipe may be a
    HubRecipe or None. Planted rows carry ``is_planted_hub`` equal to
    ``mark_adversarial`` (benign decoys are planted unmarked) and the recipe
    summary in their metadata. Refuses to modify a corpus that is not
    benchmark-marked unless explicitly overridden.
    """
    if not corpus.is_benchmark and not allow_non_benchmark:
        raise SafetyError(
            "refusing to plant hubs into a non-benchmark corpus "
            "(pass allow_non_benchmark=True to override)"
        )
    existing = set(corpus.doc_ids())
    rows = [corpus.embeddings]
    metadata = list(corpus.metadata)
    for i, (embedding, recipe) in enumerate(hubs):
        emb = np.asarray(embedding, dtype=np.float64)
        if emb.shape != (corpus.dim,):
            raise ShapeError(f"hub {i} has dim {emb.shape}, corpus dim {corpus.dim}")
        doc_id = f"{id_prefix}_{i:04d}"
        while doc_id in existing:
            doc_id = f"{id_prefix}_{i:04d}x"
        existing.add(doc_id)
        domain = None
        recipe_summary = None
        if isinstance(recipe, HubRecipe):
            recipe_summary = recipe.summary()
            domain = recipe.target_domain
        elif isinstance(recipe, dict):
            recipe_summary = recipe
            domain = recipe.get("target_domain")
        rows.append(emb.astype(np.float32)[None, :])
        metadata.append(
            DocumentMeta(
                doc_id=doc_id,
                domain=domain,
                is_planted_hub=bool(mark_adversarial),
                hub_recipe=recipe_summary,
            )
        )
    return Corpus(
        embeddings=np.vstack(rows).astype(np.float32),
        metadata=metadata,
        metric=corpus.metric,
        is_benchmark=True,
        n_renormalized=corpus.n_renormalized,
    )


def _component_counts(n_docs: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder apportionment of docs to mixture components."""
    raw = n_docs * weights
    counts = np.floor(raw).astype(np.int64)
    short = n_docs - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def zipf_weights(n_clusters: int, exponent: float) -> np.ndarray:
    """Zipf-like component weights; exponent 0 is uniform."""
    ranks = np.arange(1, n_clusters + 1, dtype=np.float64)
    w = ranks**-exponent
    return w / w.sum()


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> Corpus:
    """Sample a unit-sphere mixture corpus with domain labels.

    Each component direction is drawn around a shared cone axis with
    ``cone_strength`` weight (0 disables the cone); documents scatter
    around their component with spread 1/intra_cluster_concentration.
    Component ids become domain labels. The output is benchmark-marked:
    synthetic corpora exist to be planted with ground-truth hubs.
    """
    if spec.dim < 2:
        raise ParameterError("dim must be >= 2")
    if not 1 <= spec.n_clusters <= spec.n_docs:
        raise ParameterError("need 1 <= n_clusters <= n_docs")
    if spec.intra_cluster_concentration <= 0:
        raise ParameterError("intra_cluster_concentration must be positive")
    rng = derive_rng(spec.seed, "synthetic_corpus")

    axis = rng.normal(size=spec.dim)
    axis /= np.linalg.norm(axis)

    # Component centers sit on an exact cone shell around the shared axis:
    # cos(center, axis) = cone / sqrt(1 + cone^2) for every component.
    perp = rng.normal(size=(spec.n_clusters, spec.dim))
    perp -= (perp @ axis)[:, None] * axis[None, :]
    perp /= np.linalg.norm(perp, axis=1, keepdims=True)
    if spec.cone_strength > 0:
        c = spec.cone_strength
        centers = (c * axis[None, :] + perp) / np.sqrt(1.0 + c * c)
    else:
        centers = perp

    if spec.cluster_weights is not None:
        weights = np.asarray(spec.cluster_weights, dtype=np.float64)
        if weights.shape != (spec.n_clusters,) or np.any(weights <= 0):
            raise ParameterError("cluster_weights must be positive, one per cluster")
        weights = weights / weights.sum()
    else:
        weights = np.full(spec.n_clusters, 1.0 / spec.n_clusters)
    counts = _component_counts(spec.n_docs, weights)
    if np.any(counts == 0):
        raise ParameterError("cluster weights leave some component empty")

    # Every document sits at the exact same angle to its component center:
    # cos(doc, center) = conc / sqrt(1 + conc^2). The noise direction is
    # orthogonalized against both the component center and the cone axis,
    # so within-component popularity is exchangeable (no document is "more
    # central" or "more apex" by sampling luck). This keeps clean hub-rate
    # tails light while preserving recoverable cluster structure.
    conc = spec.intra_cluster_concentration
    cos_theta = conc / np.sqrt(1.0 + conc * conc)
    sin_theta = 1.0 / np.sqrt(1.0 + conc * conc)
    component = np.repeat(np.arange(spec.n_clusters), counts)
    own = centers[component]
    own_perp = perp[component]
    noise = rng.normal(size=(spec.n_docs, spec.dim))
    noise -= np.sum(noise * axis, axis=1, keepdims=True) * axis[None, :]
    noise -= np.sum(noise * own_perp, axis=1, keepdims=True) * own_perp
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    docs = cos_theta * own + sin_theta * noise

    order = rng.permutation(spec.n_docs)
    docs = docs[order]
    component = component[order]

    width = max(2, len(str(spec.n_clusters - 1)))
    metadata = [
        DocumentMeta(doc_id=f"doc_{i:06d}", domain=f"domain_{component[i]:0{width}d}")
        for i in range(spec.n_docs)
    ]
    return Corpus(
        embeddings=docs.astype(np.float32),
        metadata=metadata,
        metric=METRIC_COSINE,
        is_benchmark=True,
    )
