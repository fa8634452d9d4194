"""Corpus bundle data model, loading, and validation.

A corpus bundle is a directory with three files:

* ``manifest.json`` - keys: n_docs, dim, metric, dtype ("f32"),
  normalize_on_load, is_benchmark.
* ``embeddings.bin`` - raw little-endian float32, row-major, no header.
* ``metadata.jsonl`` - one JSON object per line, aligned to blob row order;
  optional fields are simply absent.

Query files use the same conventions (``queries.bin`` + ``queries.jsonl``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BundleError, CorruptBlobError, IntegrityError, ParameterError, ShapeError

METRIC_COSINE = "cosine"
METRIC_INNER_PRODUCT = "inner_product"
VALID_METRICS = (METRIC_COSINE, METRIC_INNER_PRODUCT)

# Rows further than this from unit norm count as violations and are
# renormalized at load time; upstream exporters commonly emit near-unit rows.
NORM_TOLERANCE = 1e-4
ZERO_NORM_EPS = 1e-12


@dataclass
class DocumentMeta:
    """Per-document metadata, aligned to the embedding row of the same index."""

    doc_id: str
    domain: Optional[str] = None
    modality: Optional[str] = None
    text_hash: Optional[int] = None
    is_planted_hub: Optional[bool] = None
    hub_recipe: Optional[dict] = None

    def to_json_dict(self) -> dict:
        out: dict = {"doc_id": self.doc_id}
        if self.domain is not None:
            out["domain"] = self.domain
        if self.modality is not None:
            out["modality"] = self.modality
        if self.text_hash is not None:
            out["text_hash"] = self.text_hash
        if self.is_planted_hub is not None:
            out["is_planted_hub"] = self.is_planted_hub
        if self.hub_recipe is not None:
            out["hub_recipe"] = self.hub_recipe
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "DocumentMeta":
        return cls(
            doc_id=str(d["doc_id"]),
            domain=d.get("domain"),
            modality=d.get("modality"),
            text_hash=d.get("text_hash"),
            is_planted_hub=d.get("is_planted_hub"),
            hub_recipe=d.get("hub_recipe"),
        )


@dataclass
class Corpus:
    """Document embeddings plus aligned metadata.

    Immutable after construction by convention; the scan engine shares it
    read-only across worker threads.
    """

    embeddings: np.ndarray
    metadata: list
    metric: str = METRIC_COSINE
    is_benchmark: bool = False
    n_renormalized: int = 0

    @property
    def n_docs(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def doc_ids(self) -> list:
        return [m.doc_id for m in self.metadata]

    def domains(self) -> list:
        """Sorted distinct domain labels present in the metadata."""
        return sorted({m.domain for m in self.metadata if m.domain is not None})

    def planted_hub_indices(self) -> np.ndarray:
        return np.array(
            [i for i, m in enumerate(self.metadata) if m.is_planted_hub], dtype=np.int64
        )

    def __post_init__(self):
        if self.embeddings.ndim != 2:
            raise ShapeError("embeddings must be a 2-D matrix")
        if self.embeddings.shape[1] < 2:
            raise ShapeError("embedding dimension must be >= 2")
        if self.embeddings.shape[0] != len(self.metadata):
            raise IntegrityError(
                f"{self.embeddings.shape[0]} embedding rows but "
                f"{len(self.metadata)} metadata records"
            )
        if self.metric not in VALID_METRICS:
            raise ParameterError(f"unknown metric {self.metric!r}")


@dataclass
class QuerySet:
    """Query embeddings with optional per-query labels and provenance tags."""

    embeddings: np.ndarray
    modalities: Optional[list] = None
    domains: Optional[list] = None
    provenance: list = field(default_factory=list)

    @property
    def n_queries(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class ValidationReport:
    row_count: int
    dim: int
    norm_violations: int
    duplicate_ids: list
    missing_field_counts: dict


def _normalize_rows(rows: np.ndarray, tolerance: float):
    """Renormalize rows outside ``tolerance`` of unit norm.

    Returns (normalized rows, violation count). Zero-norm rows are an
    integrity error because their direction is undefined.
    """
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms < ZERO_NORM_EPS)
    if zero.size:
        raise IntegrityError(f"zero-norm embedding rows at indices {zero[:8].tolist()}")
    off = np.abs(norms - 1.0) > tolerance
    n_viol = int(off.sum())
    if n_viol:
        rows = rows.copy()
        rows[off] = rows[off] / norms[off, None]
    return rows, n_viol


def _read_manifest(bundle_path: Path) -> dict:
    manifest_path = bundle_path / "manifest.json"
    if not manifest_path.exists():
        raise BundleError(f"bundle incomplete: missing {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        return json.load(f)


def _read_blob(path: Path, n_rows: int, dim: int) -> np.ndarray:
    if not path.exists():
        raise BundleError(f"bundle incomplete: missing {path}")
    expected = n_rows * dim * 4
    actual = path.stat().st_size
    if actual != expected:
        raise CorruptBlobError(
            f"{path.name}: expected {expected} bytes for {n_rows}x{dim} f32, got {actual}"
        )
    data = np.fromfile(path, dtype="<f4")
    return data.reshape(n_rows, dim)


def _read_jsonl(path: Path) -> list:
    if not path.exists():
        raise BundleError(f"bundle incomplete: missing {path}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def load_corpus(bundle_path) -> Corpus:
    """Load and validate a corpus bundle directory.

    Rows are L2-normalized when the manifest metric is cosine and
    ``normalize_on_load`` is true; rows off unit norm by more than 1e-4 are
    renormalized (not rejected) and counted in ``Corpus.n_renormalized``.
    """
    bundle = Path(bundle_path)
    manifest = _read_manifest(bundle)
    n_docs = int(manifest["n_docs"])
    dim = int(manifest["dim"])
    metric = manifest.get("metric", METRIC_COSINE)
    if metric not in VALID_METRICS:
        raise ParameterError(f"manifest metric {metric!r} not in {VALID_METRICS}")
    if manifest.get("dtype", "f32") != "f32":
        raise ParameterError("only f32 embedding blobs are supported")

    rows = _read_blob(bundle / "embeddings.bin", n_docs, dim)
    records = _read_jsonl(bundle / "metadata.jsonl")
    if len(records) != n_docs:
        raise IntegrityError(
            f"metadata.jsonl has {len(records)} records, manifest says {n_docs}"
        )
    metadata = [DocumentMeta.from_json_dict(r) for r in records]

    seen: set = set()
    for m in metadata:
        if m.doc_id in seen:
            raise IntegrityError(f"duplicate doc_id {m.doc_id!r}")
        seen.add(m.doc_id)

    n_renorm = 0
    if metric == METRIC_COSINE and manifest.get("normalize_on_load", True):
        rows, n_renorm = _normalize_rows(rows, NORM_TOLERANCE)

    return Corpus(
        embeddings=rows.astype(np.float32, copy=False),
        metadata=metadata,
        metric=metric,
        is_benchmark=bool(manifest.get("is_benchmark", False)),
        n_renormalized=n_renorm,
    )


def save_corpus(corpus: Corpus, bundle_path) -> None:
    """Write a corpus as a bundle directory (inverse of load_corpus)."""
    bundle = Path(bundle_path)
    bundle.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n_docs": corpus.n_docs,
        "dim": corpus.dim,
        "metric": corpus.metric,
        "dtype": "f32",
        "normalize_on_load": corpus.metric == METRIC_COSINE,
        "is_benchmark": corpus.is_benchmark,
    }
    with open(bundle / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
    corpus.embeddings.astype("<f4").tofile(bundle / "embeddings.bin")
    with open(bundle / "metadata.jsonl", "w", encoding="utf-8") as f:
        for m in corpus.metadata:
            f.write(json.dumps(m.to_json_dict(), sort_keys=True))
            f.write("\n")


def load_queries(path, corpus: Corpus) -> QuerySet:
    """Load a real-query file (``<stem>.bin`` + ``<stem>.jsonl``) for a corpus.

    The metadata sidecar is optional; when present it supplies per-query
    ``modality`` and ``domain`` labels. All rows are tagged provenance
    "real". An empty file yields a legal zero-row QuerySet.
    """
    bin_path = Path(path)
    if bin_path.suffix != ".bin":
        bin_path = bin_path.with_suffix(".bin")
    if not bin_path.exists():
        raise BundleError(f"missing query blob {bin_path}")
    data = np.fromfile(bin_path, dtype="<f4")
    if data.size % corpus.dim != 0:
        raise ShapeError(
            f"query blob size {data.size} floats is not a multiple of corpus dim {corpus.dim}"
        )
    rows = data.reshape(-1, corpus.dim)
    n = rows.shape[0]

    modalities = None
    domains = None
    sidecar = bin_path.with_suffix(".jsonl")
    if sidecar.exists():
        records = _read_jsonl(sidecar)
        if len(records) != n:
            raise IntegrityError(
                f"{sidecar.name} has {len(records)} records for {n} query rows"
            )
        if any("modality" in r for r in records):
            modalities = [r.get("modality") for r in records]
        if any("domain" in r for r in records):
            domains = [r.get("domain") for r in records]

    if n and corpus.metric == METRIC_COSINE:
        rows, _ = _normalize_rows(rows, NORM_TOLERANCE)

    return QuerySet(
        embeddings=rows.astype(np.float32, copy=False),
        modalities=modalities,
        domains=domains,
        provenance=["real"] * n,
    )


def save_queries(queries: QuerySet, path) -> None:
    """Write a query set as ``<stem>.bin`` + ``<stem>.jsonl``."""
    bin_path = Path(path)
    if bin_path.suffix != ".bin":
        bin_path = bin_path.with_suffix(".bin")
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    queries.embeddings.astype("<f4").tofile(bin_path)
    with open(bin_path.with_suffix(".jsonl"), "w", encoding="utf-8") as f:
        for i in range(queries.n_queries):
            rec: dict = {}
            if queries.modalities is not None and queries.modalities[i] is not None:
                rec["modality"] = queries.modalities[i]
            if queries.domains is not None and queries.domains[i] is not None:
                rec["domain"] = queries.domains[i]
            f.write(json.dumps(rec, sort_keys=True))
            f.write("\n")


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Compute an integrity report; pure function, never raises."""
    norms = np.linalg.norm(corpus.embeddings, axis=1)
    if corpus.metric == METRIC_COSINE:
        norm_violations = int((np.abs(norms - 1.0) > NORM_TOLERANCE).sum())
    else:
        norm_violations = 0

    counts: dict = {}
    dupes = []
    for m in corpus.metadata:
        counts[m.doc_id] = counts.get(m.doc_id, 0) + 1
    for doc_id, c in counts.items():
        if c > 1:
            dupes.append(doc_id)

    missing = {
        "domain": sum(1 for m in corpus.metadata if m.domain is None),
        "modality": sum(1 for m in corpus.metadata if m.modality is None),
        "text_hash": sum(1 for m in corpus.metadata if m.text_hash is None),
    }
    return ValidationReport(
        row_count=corpus.n_docs,
        dim=corpus.dim,
        norm_violations=norm_violations,
        duplicate_ids=sorted(dupes),
        missing_field_counts=missing,
    )
