"""Detection-quality evaluation: alert budgets, AUC, sweeps, distributions.

The alert-budget protocol scores detection inside a fixed review budget:
with N items and budget fraction b, only the top K = ceil(b * N) items by
combined score are examined. Recall is the fraction of true hubs inside the
top K, precision the fraction of the top K that are true hubs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attackbench import (
    HubRecipe,
    VARIANT_UNIVERSAL,
    optimize_hub,
    plant_hubs,
)
from .corpus import Corpus
from .errors import EvaluationError, ParameterError
from .stats import nearest_rank_percentile


@dataclass
class BudgetEval:
    budget_fraction: Optional[float]
    k: int
    precision: float
    recall: float
    flagged_ids: list


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest scores, ties broken by ascending index."""
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:k]


def alert_budget_eval(combined, truth, budget: Optional[float] = None, k: Optional[int] = None) -> BudgetEval:
    """Precision/recall of true hubs within an alert budget.

    Exactly one of ``budget`` (a fraction of the corpus) or ``k`` (an
    explicit review count) selects the cutoff; a fraction maps to
    K = ceil(budget * N).
    """
    scores = np.asarray(combined, dtype=np.float64)
    labels = np.asarray(truth, dtype=bool)
    if scores.shape != labels.shape:
        raise ParameterError("scores and truth must have the same length")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise EvaluationError("truth vector has no positives to recall")
    if (budget is None) == (k is None):
        raise ParameterError("provide exactly one of budget or k")
    if k is None:
        if not 0.0 < budget <= 1.0:
            raise ParameterError(f"budget {budget} outside (0, 1]")
        k = int(np.ceil(budget * scores.size))
    if k < 1:
        raise ParameterError("k must be >= 1")
    k = min(k, scores.size)

    flagged = top_k_indices(scores, k)
    hits = int(labels[flagged].sum())
    return BudgetEval(
        budget_fraction=budget,
        k=k,
        precision=hits / k,
        recall=hits / n_pos,
        flagged_ids=flagged.tolist(),
    )


def auc_roc(scores, labels) -> float:
    """AUC-ROC via the Mann-Whitney U statistic with tie correction.

    Equals the probability that a random positive outscores a random
    negative, ties counting one half; invariant under strictly monotone
    transforms of the scores.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos = int(y.sum())
    n_neg = int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("auc_roc requires both classes present")

    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1

    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class SweepConfig:
    """Scan/attack parameters shared by every point of a fraction sweep."""

    k: int = 20
    n_queries: int = 10_000
    n_targets: int = 200
    steps: int = 1000
    learning_rate: float = 0.12
    momentum: float = 0.9
    seed: int = 0
    query_pool_size: int = 2000


def fraction_sweep(base_corpus: Corpus, fractions, config: SweepConfig) -> list:
    """Hubness-only AUC at increasing adversarial corpus fractions.

    For each fraction f, plants round(f * N / (1 - f)) universal hubs (so
    the poisoned corpus is an f fraction adversarial), scans, and evaluates
    AUC of the hubness z-score against the planted-truth labels. Every
    sweep point owns fresh derived seeds and shares no state with the
    others. Returns a list of dicts with fraction, n_hubs, and auc.
    """
    from .detectors import hubness_detect
    from .index import build_index
    from .sampling import SamplingConfig, sample_queries
    from .scan import HitWeighting, compute_hub_rates, execute_scan
    from .seeds import derive_rng, derive_seed

    results = []
    n = base_corpus.n_docs
    for f in fractions:
        if not 0.0 < f <= 0.5:
            raise ParameterError(f"fraction {f} outside (0, 0.5]")
        n_hubs = max(1, round(f * n / (1.0 - f)))
        point_seed = derive_seed(config.seed, "sweep", f"{f:.6f}")

        pool = sample_queries(
            base_corpus,
            None,
            SamplingConfig(total=config.query_pool_size, seed=point_seed),
        )
        rng = derive_rng(point_seed, "targets")
        hubs = []
        for h in range(n_hubs):
            chosen = rng.choice(pool.n_queries, size=config.n_targets, replace=False)
            recipe = HubRecipe(
                variant=VARIANT_UNIVERSAL,
                target_queries=pool.embeddings[chosen].astype(np.float64),
                momentum=config.momentum,
                learning_rate=config.learning_rate,
                steps=config.steps,
                seed=derive_seed(point_seed, "hub", h),
            )
            hubs.append((optimize_hub(recipe), recipe))

        poisoned = plant_hubs(base_corpus, hubs)
        index = build_index(poisoned)
        queries = sample_queries(
            poisoned,
            None,
            SamplingConfig(total=config.n_queries, seed=derive_seed(point_seed, "scan")),
        )
        acc = execute_scan(index, queries, config.k, weighting=HitWeighting())
        z = hubness_detect(compute_hub_rates(acc)).raw_scores
        truth = np.zeros(poisoned.n_docs, dtype=bool)
        truth[poisoned.planted_hub_indices()] = True
        results.append({"fraction": f, "n_hubs": n_hubs, "auc": auc_roc(z, truth)})
    return results


def score_distribution_summary(combined, truth=None) -> dict:
    """Nearest-rank score percentiles, split by truth labels when present.

    With truth labels, percentiles are computed over the clean subset and
    the separation factor is min adversarial score / clean 99th percentile.
    """
    scores = np.asarray(combined, dtype=np.float64)
    out: dict = {}
    if truth is None:
        out["p99"] = nearest_rank_percentile(scores, 99.0)
        out["p99_9"] = nearest_rank_percentile(scores, 99.9)
        return out
    labels = np.asarray(truth, dtype=bool)
    clean = scores[~labels]
    adversarial = scores[labels]
    if clean.size == 0:
        raise EvaluationError("no clean documents in summary input")
    out["p99"] = nearest_rank_percentile(clean, 99.0)
    out["p99_9"] = nearest_rank_percentile(clean, 99.9)
    out["max_clean"] = float(clean.max())
    if adversarial.size:
        out["min_adversarial"] = float(adversarial.min())
        if out["p99"] > 0:
            out["separation_factor"] = out["min_adversarial"] / out["p99"]
        else:
            out["separation_factor"] = float("inf")
    return out
