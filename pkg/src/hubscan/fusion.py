"""Score normalization, weighted fusion, verdicts, and re-rank mitigation.

Each detector's raw scores are mapped into [0, 1] (z-type detectors are
clipped at ``z_clip`` and rescaled; entropy/stability scores pass through;
dedup divides by log2(N)), then combined as a weighted sum. Verdicts are
assigned by nearest-rank percentile of the combined score.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .detectors import (
    ALL_DETECTORS,
    DETECTOR_CLUSTER_SPREAD,
    DETECTOR_CROSS_MODAL,
    DETECTOR_DEDUP,
    DETECTOR_DOMAIN,
    DETECTOR_HUBNESS,
    DETECTOR_STABILITY,
    DetectorOutput,
)
from .errors import ConfigurationError, ParameterError
from .index import NeighborList
from .stats import nearest_rank_percentile

VERDICT_HIGH = "HIGH"
VERDICT_MEDIUM = "MEDIUM"
VERDICT_LOW = "LOW"

Z_TYPE_DETECTORS = (DETECTOR_HUBNESS, DETECTOR_DOMAIN, DETECTOR_CROSS_MODAL)
UNIT_TYPE_DETECTORS = (DETECTOR_CLUSTER_SPREAD, DETECTOR_STABILITY)


def default_weights() -> dict:
    return {
        DETECTOR_HUBNESS: 1.0,
        DETECTOR_DOMAIN: 0.5,
        DETECTOR_CROSS_MODAL: 0.5,
        DETECTOR_CLUSTER_SPREAD: 0.3,
        DETECTOR_STABILITY: 0.2,
    }


@dataclass
class FusionConfig:
    weights: dict = field(default_factory=default_weights)
    z_clip: float = 10.0
    high_percentile: float = 99.0
    medium_percentile: float = 98.0

    def __post_init__(self):
        if self.high_percentile <= self.medium_percentile:
            raise ParameterError("high_percentile must exceed medium_percentile")
        unknown = set(self.weights) - set(ALL_DETECTORS)
        if unknown:
            raise ConfigurationError(f"weights reference unknown detectors {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigurationError("detector weights must be >= 0")


@dataclass
class VerdictReport:
    combined: np.ndarray
    verdicts: list
    high_threshold: float
    medium_threshold: float
    counts: dict


def normalize_score(detector_id: str, raw, config: FusionConfig, n_docs: int):
    """Map raw detector scores into [0, 1].

    z-type scores (hubness, domain_hub, cross_modal) are clamped to
    [0, z_clip] and divided by z_clip; cluster spread and stability are
    already unit-scaled and pass through; dedup divides by log2(N) so the
    largest possible duplicate cluster tops out at 1.
    """
    x = np.asarray(raw, dtype=np.float64)
    if detector_id in Z_TYPE_DETECTORS:
        return np.clip(x, 0.0, config.z_clip) / config.z_clip
    if detector_id in UNIT_TYPE_DETECTORS:
        return x
    if detector_id == DETECTOR_DEDUP:
        denom = max(np.log2(n_docs), 1.0)
        return x / denom
    raise ConfigurationError(f"unknown detector {detector_id!r}")


def fuse_scores(outputs, config: FusionConfig) -> np.ndarray:
    """Weighted sum of normalized detector scores; skipped detectors add 0."""
    active = [o for o in outputs if not o.skipped]
    if not active:
        raise ParameterError("no active detector outputs to fuse")
    n = active[0].raw_scores.shape[0]
    for o in active:
        if o.raw_scores.shape[0] != n:
            raise ParameterError("detector outputs disagree on document count")
    combined = np.zeros(n, dtype=np.float64)
    for o in active:
        weight = config.weights.get(o.detector_id, 0.0)
        if weight:
            combined += weight * normalize_score(o.detector_id, o.raw_scores, config, n)
    return combined


def normalized_outputs(outputs, config: FusionConfig) -> dict:
    """Per-detector normalized score vectors (zeros for skipped detectors)."""
    result = {}
    for o in outputs:
        n = o.raw_scores.shape[0]
        if o.skipped:
            result[o.detector_id] = np.zeros(n, dtype=np.float64)
        else:
            result[o.detector_id] = normalize_score(o.detector_id, o.raw_scores, config, n)
    return result


def assign_verdicts(combined, config: FusionConfig) -> VerdictReport:
    """Percentile-rank verdicts over the combined scores.

    Docs at or above the high-percentile threshold are HIGH, else at or
    above the medium threshold MEDIUM, else LOW. Equal scores always get
    equal verdicts; an all-equal score vector makes every doc HIGH.
    """
    x = np.asarray(combined, dtype=np.float64)
    if x.size < 1:
        raise ParameterError("assign_verdicts requires at least one score")
    hi = nearest_rank_percentile(x, config.high_percentile)
    med = nearest_rank_percentile(x, config.medium_percentile)
    verdicts = []
    for v in x:
        if v >= hi:
            verdicts.append(VERDICT_HIGH)
        elif v >= med:
            verdicts.append(VERDICT_MEDIUM)
        else:
            verdicts.append(VERDICT_LOW)
    counts = {
        VERDICT_HIGH: verdicts.count(VERDICT_HIGH),
        VERDICT_MEDIUM: verdicts.count(VERDICT_MEDIUM),
        VERDICT_LOW: verdicts.count(VERDICT_LOW),
    }
    return VerdictReport(
        combined=x,
        verdicts=verdicts,
        high_threshold=hi,
        medium_threshold=med,
        counts=counts,
    )


def rerank_filter(results: NeighborList, flagged, penalty: float) -> NeighborList:
    """Push flagged docs down a result list by subtracting a similarity penalty.

    The multiset of returned doc indices never changes, only the order; the
    re-sort is stable so prior order breaks ties and unflagged docs keep
    their relative order.
    """
    if penalty < 0:
        raise ParameterError("penalty must be >= 0")
    flagged = set(int(i) for i in flagged)
    sims = results.similarities.astype(np.float64).copy()
    for pos, doc in enumerate(results.doc_indices):
        if int(doc) in flagged:
            sims[pos] -= penalty
    order = np.argsort(-sims, kind="stable")
    return NeighborList(
        doc_indices=results.doc_indices[order],
        similarities=sims[order],
    )
