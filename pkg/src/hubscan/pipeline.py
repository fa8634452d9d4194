"""End-to-end scan pipeline: load, sample, scan, detect, fuse, report.

The pipeline owns the effective configuration (every default resolved) and
embeds it in the report so any run can be reproduced from its own output.
Reports are byte-identical for identical configurations and seeds,
regardless of worker count.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .clustering import assign_clusters, fit_minibatch_kmeans
from .corpus import METRIC_COSINE, Corpus, QuerySet
from .detectors import (
    ALL_DETECTORS,
    DEFAULT_BOILERPLATE_MIN_CLUSTER,
    DEFAULT_NEAR_DUP_THRESHOLD,
    DEFAULT_SPREAD_CLUSTERS,
    DEFAULT_STABILITY_CANDIDATES,
    DEFAULT_STABILITY_PERTURBATIONS,
    DEFAULT_STABILITY_SIGMA,
    DETECTOR_CLUSTER_SPREAD,
    DETECTOR_CROSS_MODAL,
    DETECTOR_DEDUP,
    DETECTOR_DOMAIN,
    DETECTOR_HUBNESS,
    DETECTOR_STABILITY,
    METHOD_VECTOR,
    DetectorOutput,
    cluster_spread_detect,
    crossmodal_detect,
    dedup_detect,
    domain_detect,
    gate_detectors,
    hubness_detect,
    stability_detect,
)
from .errors import ScopeError
from .fusion import (
    FusionConfig,
    VerdictReport,
    assign_verdicts,
    default_weights,
    fuse_scores,
    normalized_outputs,
)
from .index import Index, build_index
from .sampling import SamplingConfig, sample_queries
from .scan import (
    DEFAULT_BATCH_SIZE,
    BucketedAccumulator,
    HitWeighting,
    compute_hub_rates,
    execute_scan,
)
from .seeds import derive_seed
from .stats import nearest_rank_percentile

SCHEMA_VERSION = 1

DETECTOR_ORDER = list(ALL_DETECTORS)


@dataclass
class ScanConfig:
    """Every knob of a scan run; defaults resolve to the standard profile."""

    k: int = 20
    n_queries: int = 10_000
    seed: int = 0
    workers: int = 1
    scan_batch_size: int = DEFAULT_BATCH_SIZE
    retrieval_method: str = METHOD_VECTOR
    detectors: list = field(default_factory=lambda: list(ALL_DETECTORS))
    domain_scope: Optional[str] = None
    # query sampling
    frac_centroid: float = 0.5
    frac_random: float = 0.5
    frac_real: float = 0.0
    n_centroid_clusters: Optional[int] = None
    # hit weighting
    rank_weight: str = "inverse_log_rank"
    dist_weight: str = "similarity"
    # detector parameters
    spread_clusters: int = DEFAULT_SPREAD_CLUSTERS
    stability_candidates: int = DEFAULT_STABILITY_CANDIDATES
    stability_perturbations: int = DEFAULT_STABILITY_PERTURBATIONS
    stability_sigma: float = DEFAULT_STABILITY_SIGMA
    near_dup_threshold: float = DEFAULT_NEAR_DUP_THRESHOLD
    boilerplate_min_cluster: int = DEFAULT_BOILERPLATE_MIN_CLUSTER
    domain_contrast_min_z: float = 5.0
    domain_contrast_min_gini: float = 0.5
    # fusion
    weights: dict = field(default_factory=default_weights)
    z_clip: float = 10.0
    high_percentile: float = 99.0
    medium_percentile: float = 98.0

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(
            weights=dict(self.weights),
            z_clip=self.z_clip,
            high_percentile=self.high_percentile,
            medium_percentile=self.medium_percentile,
        )

    def effective_dict(self) -> dict:
        d = asdict(self)
        d["detectors"] = sorted(self.detectors)
        return d


@dataclass
class ScanResult:
    corpus: Corpus
    queries: QuerySet
    index: Index
    accumulator: BucketedAccumulator
    outputs: list
    combined: np.ndarray
    verdict_report: VerdictReport
    report: dict
    config: ScanConfig


def corpus_fingerprint(corpus: Corpus) -> str:
    """Stable hash of the corpus shape, metric, and metadata stream."""
    h = hashlib.sha256()
    manifest = {
        "n_docs": corpus.n_docs,
        "dim": corpus.dim,
        "metric": corpus.metric,
        "is_benchmark": corpus.is_benchmark,
    }
    h.update(json.dumps(manifest, sort_keys=True).encode("utf-8"))
    for m in corpus.metadata:
        h.update(json.dumps(m.to_json_dict(), sort_keys=True).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def _fallback_domains(corpus: Corpus, queries: QuerySet, seed: int) -> list:
    """Label queries by clustering when no domain metadata exists."""
    n_domains = max(2, min(32, int(np.sqrt(corpus.n_docs))))
    n_domains = min(n_domains, queries.n_queries)
    model = fit_minibatch_kmeans(
        queries.embeddings,
        n_domains,
        seed=derive_seed(seed, "domain_fallback"),
        spherical=corpus.metric == METRIC_COSINE,
    )
    labels = assign_clusters(model, queries.embeddings)
    width = len(str(n_domains - 1))
    return [f"cluster_{c:0{width}d}" for c in labels]


def run_scan(
    corpus: Corpus,
    config: ScanConfig,
    real_queries: Optional[QuerySet] = None,
) -> ScanResult:
    """Execute the full detection pipeline over an in-memory corpus."""
    index = build_index(corpus)

    queries = sample_queries(
        corpus,
        real_queries,
        SamplingConfig(
            total=config.n_queries,
            frac_centroid=config.frac_centroid,
            frac_random=config.frac_random,
            frac_real=config.frac_real,
            n_centroid_clusters=config.n_centroid_clusters,
            seed=derive_seed(config.seed, "sampling"),
        ),
    )

    active = gate_detectors(config.retrieval_method, config.detectors)

    # Domain labels: metadata when present, else clustering fallback.
    need_domains = DETECTOR_DOMAIN in active or config.domain_scope is not None
    if need_domains and queries.domains is None:
        queries.domains = _fallback_domains(corpus, queries, config.seed)

    if config.domain_scope is not None:
        present = {d for d in queries.domains if d is not None}
        if config.domain_scope not in present:
            raise ScopeError(
                f"domain scope {config.domain_scope!r} matches no sampled query"
            )
        keep = [
            i for i, d in enumerate(queries.domains) if d == config.domain_scope
        ]
        queries = QuerySet(
            embeddings=queries.embeddings[keep],
            modalities=(
                [queries.modalities[i] for i in keep] if queries.modalities else None
            ),
            domains=[queries.domains[i] for i in keep],
            provenance=[queries.provenance[i] for i in keep],
        )

    doc_modalities = [m.modality for m in corpus.metadata]
    modality_ready = (
        DETECTOR_CROSS_MODAL in active
        and queries.modalities is not None
        and any(m is not None for m in doc_modalities)
    )

    spread_model = None
    if DETECTOR_CLUSTER_SPREAD in active:
        spread_model = fit_minibatch_kmeans(
            queries.embeddings,
            min(config.spread_clusters, queries.n_queries),
            seed=derive_seed(config.seed, "spread_kmeans"),
            spherical=corpus.metric == METRIC_COSINE,
        )

    weighting = HitWeighting(config.rank_weight, config.dist_weight)
    acc = execute_scan(
        index,
        queries,
        config.k,
        weighting=weighting,
        by_domain=need_domains and queries.domains is not None,
        by_modality=modality_ready,
        doc_modalities=doc_modalities if modality_ready else None,
        by_query_cluster=spread_model,
        workers=config.workers,
        batch_size=config.scan_batch_size,
    )

    rates = compute_hub_rates(acc)
    outputs: list = []

    hub_out = hubness_detect(rates)
    outputs.append(
        hub_out
        if DETECTOR_HUBNESS in active
        else DetectorOutput.skip(DETECTOR_HUBNESS, corpus.n_docs, "disabled")
    )

    if DETECTOR_CLUSTER_SPREAD in active:
        outputs.append(
            cluster_spread_detect(
                index,
                queries,
                n_clusters=config.spread_clusters,
                k=config.k,
                seed=derive_seed(config.seed, "spread"),
                acc=acc,
            )
        )
    else:
        outputs.append(
            DetectorOutput.skip(
                DETECTOR_CLUSTER_SPREAD,
                corpus.n_docs,
                "requires semantic query embeddings"
                if config.retrieval_method == "lexical"
                else "disabled",
            )
        )

    if DETECTOR_STABILITY in active:
        n_cand = min(config.stability_candidates, corpus.n_docs)
        candidates = np.lexsort((np.arange(corpus.n_docs), -hub_out.raw_scores))[:n_cand]
        outputs.append(
            stability_detect(
                index,
                queries,
                candidates,
                n_perturbations=config.stability_perturbations,
                sigma=config.stability_sigma,
                k=config.k,
                seed=derive_seed(config.seed, "stability"),
                original_hits=acc.raw_hit_counts,
            )
        )
    else:
        outputs.append(
            DetectorOutput.skip(
                DETECTOR_STABILITY,
                corpus.n_docs,
                "requires semantic query embeddings"
                if config.retrieval_method == "lexical"
                else "disabled",
            )
        )

    if DETECTOR_DEDUP in active:
        outputs.append(
            dedup_detect(
                corpus,
                index,
                near_dup_threshold=config.near_dup_threshold,
                boilerplate_min_cluster=config.boilerplate_min_cluster,
            )
        )
    else:
        outputs.append(DetectorOutput.skip(DETECTOR_DEDUP, corpus.n_docs, "disabled"))

    if DETECTOR_DOMAIN in active:
        outputs.append(domain_detect(acc))
    else:
        outputs.append(DetectorOutput.skip(DETECTOR_DOMAIN, corpus.n_docs, "disabled"))

    if DETECTOR_CROSS_MODAL in active and modality_ready:
        outputs.append(crossmodal_detect(acc))
    else:
        outputs.append(
            DetectorOutput.skip(
                DETECTOR_CROSS_MODAL,
                corpus.n_docs,
                "disabled" if DETECTOR_CROSS_MODAL not in active else "no modality metadata",
            )
        )

    fusion_cfg = config.fusion_config()
    combined = fuse_scores(outputs, fusion_cfg)
    verdict_report = assign_verdicts(combined, fusion_cfg)

    report = build_report(corpus, queries, acc, outputs, combined, verdict_report, config)
    return ScanResult(
        corpus=corpus,
        queries=queries,
        index=index,
        accumulator=acc,
        outputs=outputs,
        combined=combined,
        verdict_report=verdict_report,
        report=report,
        config=config,
    )


def _aux_value(aux: dict, key: str, i: int):
    arr = aux.get(key)
    if arr is None:
        return None
    v = arr[i]
    if v is None:
        return None
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    return str(v)


def build_report(
    corpus: Corpus,
    queries: QuerySet,
    acc: BucketedAccumulator,
    outputs: list,
    combined: np.ndarray,
    verdicts: VerdictReport,
    config: ScanConfig,
) -> dict:
    """Assemble the serializable scan report."""
    by_id = {o.detector_id: o for o in outputs}
    norm = normalized_outputs(outputs, config.fusion_config())
    n = corpus.n_docs

    domain_out = by_id.get(DETECTOR_DOMAIN)
    dedup_out = by_id.get(DETECTOR_DEDUP)
    cross_out = by_id.get(DETECTOR_CROSS_MODAL)

    per_doc = []
    for i in range(n):
        detectors = {}
        for det_id in DETECTOR_ORDER:
            o = by_id.get(det_id)
            if o is None:
                continue
            detectors[det_id] = {
                "raw": float(o.raw_scores[i]),
                "normalized": float(norm[det_id][i]),
            }
        aux: dict = {
            "raw_hits": int(acc.raw_hit_counts[i]),
            "weighted_hits": float(acc.total_weighted_hits[i]),
        }
        if domain_out is not None and not domain_out.skipped:
            aux["dominant_domain"] = _aux_value(domain_out.aux, "dominant_domain", i)
            aux["gini_concentration"] = _aux_value(
                domain_out.aux, "gini_concentration", i
            )
            max_z = float(domain_out.aux["max_domain_z"][i])
            gini_i = float(domain_out.aux["gini_concentration"][i])
            aux["domain_contrast_flag"] = bool(
                max_z >= config.domain_contrast_min_z
                and gini_i >= config.domain_contrast_min_gini
            )
        if dedup_out is not None and not dedup_out.skipped:
            aux["dedup_cluster_id"] = _aux_value(dedup_out.aux, "cluster_ids", i)
            aux["dedup_cluster_size"] = _aux_value(dedup_out.aux, "cluster_sizes", i)
        if cross_out is not None and not cross_out.skipped:
            aux["cross_modal_ratio"] = _aux_value(cross_out.aux, "cross_modal_ratio", i)
            aux["dominant_query_modality"] = _aux_value(
                cross_out.aux, "dominant_query_modality", i
            )
        entry = {
            "doc_id": corpus.metadata[i].doc_id,
            "combined": float(combined[i]),
            "verdict": verdicts.verdicts[i],
            "detectors": detectors,
            "aux": aux,
        }
        if corpus.metadata[i].is_planted_hub is not None:
            entry["is_planted_hub"] = bool(corpus.metadata[i].is_planted_hub)
        per_doc.append(entry)

    provenance_counts: dict = {}
    for p in queries.provenance:
        provenance_counts[p] = provenance_counts.get(p, 0) + 1

    summary = {
        "verdict_counts": verdicts.counts,
        "high_threshold": verdicts.high_threshold,
        "medium_threshold": verdicts.medium_threshold,
        "combined_p99": nearest_rank_percentile(combined, 99.0),
        "combined_p99_9": nearest_rank_percentile(combined, 99.9),
        "n_queries_processed": acc.n_queries_processed,
        "query_provenance": provenance_counts,
        "skipped_detectors": {
            o.detector_id: o.skip_reason for o in outputs if o.skipped
        },
    }
    hub_out = by_id.get(DETECTOR_HUBNESS)
    if hub_out is not None and not hub_out.skipped:
        summary["hub_rate_median"] = float(hub_out.aux["median"])
        summary["hub_rate_mad_scaled"] = float(hub_out.aux["mad_scaled"])
        summary["hub_rate_degenerate"] = bool(hub_out.aux["degenerate"])

    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.effective_dict(),
        "corpus_fingerprint": corpus_fingerprint(corpus),
        "n_docs": n,
        "n_queries": queries.n_queries,
        "per_doc": per_doc,
        "summary": summary,
    }


def report_to_json(report: dict) -> str:
    """Canonical JSON text: sorted keys, newline-terminated."""
    return json.dumps(report, sort_keys=True, separators=(",", ": "), indent=1) + "\n"


CSV_AUX_COLUMNS = [
    "raw_hits",
    "weighted_hits",
    "dominant_domain",
    "gini_concentration",
    "domain_contrast_flag",
    "dedup_cluster_id",
    "dedup_cluster_size",
    "cross_modal_ratio",
    "dominant_query_modality",
]


def report_to_csv(report: dict) -> str:
    """One row per document in a stable column order."""
    buf = io.StringIO()
    columns = ["doc_id", "combined", "verdict"]
    for det_id in DETECTOR_ORDER:
        columns += [f"{det_id}_raw", f"{det_id}_normalized"]
    columns += CSV_AUX_COLUMNS
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for entry in report["per_doc"]:
        row = [entry["doc_id"], repr(entry["combined"]), entry["verdict"]]
        for det_id in DETECTOR_ORDER:
            d = entry["detectors"].get(det_id)
            if d is None:
                row += ["", ""]
            else:
                row += [repr(d["raw"]), repr(d["normalized"])]
        for col in CSV_AUX_COLUMNS:
            v = entry["aux"].get(col)
            row.append("" if v is None else (repr(v) if isinstance(v, float) else v))
        writer.writerow(row)
    return buf.getvalue()
