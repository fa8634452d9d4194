"""hubscan: statistical detection of adversarial hubs in vector-retrieval corpora."""

from .corpus import (
    Corpus,
    DocumentMeta,
    QuerySet,
    ValidationReport,
    load_corpus,
    load_queries,
    save_corpus,
    save_queries,
    validate_corpus,
)
from .index import Index, NeighborList, build_index, knn, knn_batch
from .clustering import ClusterModel, assign_cluster, assign_clusters, fit_minibatch_kmeans
from .sampling import SamplingConfig, sample_queries
from .scan import (
    BucketedAccumulator,
    HitWeighting,
    HubRates,
    compute_hub_rates,
    execute_scan,
    merge_accumulators,
)
from .stats import RobustZ, gini, normalized_entropy, robust_zscore
from .detectors import (
    DetectorOutput,
    cluster_spread_detect,
    crossmodal_detect,
    dedup_detect,
    domain_detect,
    gate_detectors,
    hubness_detect,
    stability_detect,
)
from .fusion import (
    FusionConfig,
    VerdictReport,
    assign_verdicts,
    fuse_scores,
    normalize_score,
    rerank_filter,
)
from .attackbench import (
    HubRecipe,
    SyntheticCorpusSpec,
    centroid_hub,
    generate_synthetic_corpus,
    optimize_hub,
    plant_hubs,
)
from .evalharness import (
    BudgetEval,
    SweepConfig,
    alert_budget_eval,
    auc_roc,
    fraction_sweep,
    score_distribution_summary,
)
from .pipeline import ScanConfig, ScanResult, run_scan

__version__ = "0.1.0"
