"""Command-line driver.

Subcommands:

* ``scan``  - run the detection pipeline over a corpus bundle and write a
  report (JSON, optionally CSV). Exit 0 on success, 2 when any HIGH
  verdict exists (machine-readable alarm), 1 on error.
* ``bench`` - build a benchmark bundle: synthetic or loaded corpus with
  optimized hubs planted and ground truth recorded.
* ``eval``  - score a report against a benchmark bundle: alert budgets,
  AUC, score-distribution summary, optional fraction sweep.

A JSON config file can pre-set any scan flag; explicit flags override it.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .attackbench import (
    HubRecipe,
    SyntheticCorpusSpec,
    VARIANT_CENTROID,
    VARIANT_DOMAIN,
    VARIANT_UNIVERSAL,
    centroid_hub,
    generate_synthetic_corpus,
    optimize_hub,
    plant_hubs,
    zipf_weights,
)
from .corpus import load_corpus, load_queries, save_corpus, validate_corpus
from .errors import HubScanError
from .evalharness import (
    SweepConfig,
    alert_budget_eval,
    auc_roc,
    fraction_sweep,
    score_distribution_summary,
)
from .fusion import VERDICT_HIGH, default_weights
from .pipeline import ScanConfig, report_to_csv, report_to_json, run_scan
from .sampling import SamplingConfig, sample_queries
from .seeds import derive_rng, derive_seed

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ALARM = 2


def _parse_kv_spec(text: str) -> dict:
    """Parse ``n=5000,dim=128,clusters=20`` style compact specs."""
    out: dict = {}
    for part in text.split(","):
        if not part:
            continue
        key, _, value = part.partition("=")
        out[key.strip()] = value.strip()
    return out


def _add_scan_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True, help="corpus bundle directory")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--k", type=int, help="neighbors per query (default 20)")
    p.add_argument("--queries", type=int, help="queries to sample (default 10000)")
    p.add_argument("--queries-file", help="real query file (<stem>.bin)")
    p.add_argument("--frac-real", type=float, help="fraction of real queries")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--workers", type=int, help="scan worker threads (default 1)")
    p.add_argument(
        "--detectors",
        help="comma-separated detector subset (default: all six)",
    )
    p.add_argument("--domain-scope", help="restrict scan queries to one domain label")
    p.add_argument(
        "--retrieval-method",
        choices=["vector", "hybrid", "lexical"],
        help="retrieval mode driving detector gating (default vector)",
    )
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="also write a per-document CSV summary")


def _scan_config_from_args(args) -> ScanConfig:
    file_cfg: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            file_cfg = json.load(f)
    cfg = ScanConfig(**file_cfg)
    if args.k is not None:
        cfg.k = args.k
    if args.queries is not None:
        cfg.n_queries = args.queries
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.detectors is not None:
        cfg.detectors = [d.strip() for d in args.detectors.split(",") if d.strip()]
        # Ablations zero the weight of anything not requested.
        cfg.weights = {
            k: v for k, v in default_weights().items() if k in cfg.detectors
        }
    if args.domain_scope is not None:
        cfg.domain_scope = args.domain_scope
    if args.retrieval_method is not None:
        cfg.retrieval_method = args.retrieval_method
    if args.frac_real is not None:
        cfg.frac_real = args.frac_real
        remaining = max(0.0, 1.0 - cfg.frac_real)
        cfg.frac_centroid = remaining / 2.0
        cfg.frac_random = remaining / 2.0
    return cfg


def cmd_scan(args) -> int:
    corpus = load_corpus(args.corpus)
    cfg = _scan_config_from_args(args)
    real = None
    if args.queries_file:
        real = load_queries(args.queries_file, corpus)
        if cfg.frac_real == 0.0 and real.n_queries:
            cfg.frac_real = 0.2
            cfg.frac_centroid = 0.4
            cfg.frac_random = 0.4
    result = run_scan(corpus, cfg, real_queries=real)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report_to_json(result.report), encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report_to_csv(result.report), encoding="utf-8")

    counts = result.verdict_report.counts
    print(
        f"scanned {corpus.n_docs} docs with {result.report['n_queries']} queries: "
        f"{counts[VERDICT_HIGH]} HIGH, {counts['MEDIUM']} MEDIUM, {counts['LOW']} LOW"
    )
    return EXIT_ALARM if counts[VERDICT_HIGH] > 0 else EXIT_OK


def _build_base_corpus(args):
    if args.synthetic:
        kv = _parse_kv_spec(args.synthetic)
        weights = None
        n_clusters = int(kv.get("clusters", 20))
        if "skew" in kv and float(kv["skew"]) > 0:
            weights = zipf_weights(n_clusters, float(kv["skew"])).tolist()
        spec = SyntheticCorpusSpec(
            n_docs=int(kv.get("n", 5000)),
            dim=int(kv.get("dim", 128)),
            n_clusters=n_clusters,
            intra_cluster_concentration=float(kv.get("concentration", 4.0)),
            cone_strength=float(kv.get("cone", 0.0)),
            cluster_weights=weights,
            seed=args.seed,
        )
        return generate_synthetic_corpus(spec)
    if args.base:
        return load_corpus(args.base)
    raise HubScanError("bench requires --synthetic or --base")


def build_benchmark(
    corpus,
    variant: str,
    n_hubs: int,
    seed: int,
    n_targets: int = 200,
    steps: int = 1000,
    learning_rate: float = 0.12,
    momentum: float = 0.9,
    lambda_neg: float = 3.0,
    target_domain=None,
    centroid_pool: int = 50,
    query_pool_size: int = 2000,
):
    """Optimize ``n_hubs`` hubs of one variant against a sampled query pool.

    Returns a list of (embedding, HubRecipe) pairs ready for plant_hubs.
    Universal hubs draw diverse targets; domain hubs draw targets from the
    target domain and negatives from outside it; centroid hubs average a
    random document subset.
    """
    pool = sample_queries(
        corpus, None, SamplingConfig(total=query_pool_size, seed=derive_seed(seed, "pool"))
    )
    rng = derive_rng(seed, "bench")
    hubs = []
    for h in range(n_hubs):
        if variant == VARIANT_CENTROID:
            chosen = rng.choice(corpus.n_docs, size=min(centroid_pool, corpus.n_docs), replace=False)
            emb = centroid_hub(corpus.embeddings[chosen].astype(np.float64))
            recipe = {"variant": VARIANT_CENTROID, "n_docs_averaged": int(chosen.size)}
            hubs.append((emb, recipe))
            continue

        if variant == VARIANT_DOMAIN:
            if target_domain is None:
                raise HubScanError("domain variant requires a target domain")
            in_dom = [
                i for i, d in enumerate(pool.domains or []) if d == target_domain
            ]
            out_dom = [
                i
                for i, d in enumerate(pool.domains or [])
                if d is not None and d != target_domain
            ]
            if not in_dom:
                raise HubScanError(
                    f"query pool has no queries for domain {target_domain!r}"
                )
            take = min(n_targets, len(in_dom))
            t_idx = rng.choice(in_dom, size=take, replace=False)
            n_idx = rng.choice(out_dom, size=min(take, len(out_dom)), replace=False)
            recipe = HubRecipe(
                variant=VARIANT_DOMAIN,
                target_queries=pool.embeddings[t_idx].astype(np.float64),
                negative_queries=pool.embeddings[n_idx].astype(np.float64),
                lambda_neg=lambda_neg,
                momentum=momentum,
                learning_rate=learning_rate,
                steps=steps,
                seed=derive_seed(seed, "hub", h),
                target_domain=target_domain,
            )
        else:
            chosen = rng.choice(pool.n_queries, size=min(n_targets, pool.n_queries), replace=False)
            recipe = HubRecipe(
                variant=VARIANT_UNIVERSAL,
                target_queries=pool.embeddings[chosen].astype(np.float64),
                momentum=momentum,
                learning_rate=learning_rate,
                steps=steps,
                seed=derive_seed(seed, "hub", h),
            )
        hubs.append((optimize_hub(recipe), recipe))
    return hubs


def cmd_bench(args) -> int:
    corpus = _build_base_corpus(args)
    n = corpus.n_docs
    n_hubs = args.hubs
    if args.fraction is not None:
        n_hubs = max(1, round(args.fraction * n / (1.0 - args.fraction)))
    if n_hubs is None:
        n_hubs = 10

    variant = {
        "universal": VARIANT_UNIVERSAL,
        "domain": VARIANT_DOMAIN,
        "centroid": VARIANT_CENTROID,
    }[args.variant]

    target_domain = args.target_domain
    if variant == VARIANT_DOMAIN and target_domain is not None:
        labels = corpus.domains()
        if target_domain not in labels and target_domain.isdigit():
            idx = int(target_domain)
            if idx < len(labels):
                target_domain = labels[idx]

    hubs = build_benchmark(
        corpus,
        variant,
        n_hubs,
        seed=args.seed,
        lambda_neg=args.lambda_neg,
        target_domain=target_domain,
    )
    bench = plant_hubs(corpus, hubs, allow_non_benchmark=args.force_plant)

    if args.benign_hubs:
        # Benign universal decoys: centroids of the most popular domains.
        labels = [m.domain for m in corpus.metadata]
        counts: dict = {}
        for d in labels:
            if d is not None:
                counts[d] = counts.get(d, 0) + 1
        by_size = sorted(counts, key=lambda d: (-counts[d], d))
        decoys = []
        for j in range(args.benign_hubs):
            dom = by_size[j % len(by_size)]
            members = [i for i, d in enumerate(labels) if d == dom]
            emb = centroid_hub(bench.embeddings[members].astype(np.float64))
            decoys.append((emb, {"variant": "benign_centroid", "source_domain": dom}))
        bench = plant_hubs(
            bench, decoys, mark_adversarial=False, id_prefix="benign"
        )

    save_corpus(bench, args.out)
    report = validate_corpus(bench)
    truth = int(bench.planted_hub_indices().size)
    print(
        f"wrote benchmark bundle {args.out}: {bench.n_docs} docs, "
        f"{truth} ground-truth hubs, {report.norm_violations} norm violations"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    with open(args.report, "r", encoding="utf-8") as f:
        report = json.load(f)
    bench = load_corpus(args.bundle)

    ids = [entry["doc_id"] for entry in report["per_doc"]]
    if ids != bench.doc_ids():
        print("error: report and bundle document ids disagree", file=sys.stderr)
        return EXIT_ERROR
    combined = np.array([entry["combined"] for entry in report["per_doc"]])
    truth = np.zeros(bench.n_docs, dtype=bool)
    truth[bench.planted_hub_indices()] = True

    results: dict = {"n_docs": bench.n_docs, "n_hubs": int(truth.sum())}
    if truth.any():
        budgets = []
        if args.k_list:
            for k in args.k_list.split(","):
                ev = alert_budget_eval(combined, truth, k=int(k))
                budgets.append(
                    {"k": ev.k, "precision": ev.precision, "recall": ev.recall}
                )
        if args.budgets:
            for b in args.budgets.split(","):
                ev = alert_budget_eval(combined, truth, budget=float(b))
                budgets.append(
                    {
                        "budget": float(b),
                        "k": ev.k,
                        "precision": ev.precision,
                        "recall": ev.recall,
                    }
                )
        results["alert_budgets"] = budgets
        results["auc_roc"] = auc_roc(combined, truth)
        results["distribution"] = score_distribution_summary(combined, truth)
    else:
        results["distribution"] = score_distribution_summary(combined)

    if args.sweep:
        fractions = [float(x) for x in args.sweep.split(",")]
        sweep_cfg = SweepConfig(seed=args.seed)
        base = bench
        if truth.any():
            keep = np.flatnonzero(~truth)
            from .corpus import Corpus

            base = Corpus(
                embeddings=bench.embeddings[keep],
                metadata=[bench.metadata[i] for i in keep],
                metric=bench.metric,
                is_benchmark=True,
            )
        results["fraction_sweep"] = fraction_sweep(base, fractions, sweep_cfg)

    text = json.dumps(results, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hubscan", description="Adversarial hub scanner for vector-retrieval corpora"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_scan = sub.add_parser("scan", help="scan a corpus bundle for hubs")
    _add_scan_args(p_scan)
    p_scan.set_defaults(func=cmd_scan)

    p_bench = sub.add_parser("bench", help="build a hub benchmark bundle")
    p_bench.add_argument("--synthetic", help="e.g. n=5000,dim=128,clusters=20,cone=0.55")
    p_bench.add_argument("--base", help="existing corpus bundle to poison")
    p_bench.add_argument("--hubs", type=int, help="number of hubs to plant")
    p_bench.add_argument(
        "--fraction", type=float, help="adversarial corpus fraction instead of --hubs"
    )
    p_bench.add_argument(
        "--variant",
        choices=["universal", "domain", "centroid"],
        default="universal",
    )
    p_bench.add_argument("--lambda-neg", type=float, default=3.0)
    p_bench.add_argument("--target-domain", help="domain label or index for domain attacks")
    p_bench.add_argument(
        "--benign-hubs",
        type=int,
        default=0,
        help="also plant N benign high-popularity centroid decoys",
    )
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument(
        "--force-plant",
        action="store_true",
        help="allow planting into a non-benchmark bundle",
    )
    p_bench.add_argument("--out", required=True, help="output bundle directory")
    p_bench.set_defaults(func=cmd_bench)

    p_eval = sub.add_parser("eval", help="evaluate a report against ground truth")
    p_eval.add_argument("--report", required=True)
    p_eval.add_argument("--bundle", required=True)
    p_eval.add_argument("--k-list", help="comma-separated explicit K values")
    p_eval.add_argument("--budgets", help="comma-separated budget fractions")
    p_eval.add_argument("--sweep", help="comma-separated adversarial fractions")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", help="write metrics JSON here")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HubScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
