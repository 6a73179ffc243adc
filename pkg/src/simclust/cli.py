"""Command-line pipeline: every stage reads and writes explicit artifact
files, so stages are independently runnable, resumable and testable.

    simclust synth   spec.json -> manifest + FVEC files + ground truth
    simclust simmat  store -> similarity CSV + centroid FVEC (+ heatmap)
    simclust split   similarity CSV -> split JSON (+ dendrogram figure)
    simclust train   store + split -> head JSON files
    simclust route   query FVEC -> routing decision JSON
    simclust predict query FVEC -> class predictions JSON
    simclust eval    store -> evaluation report JSON (+ figures)
    simclust extend  new-class FVEC -> updated artifact set in a new directory

Exit codes: 0 success, 1 usage error, 2 validation error, 3 I/O error.
Logs go to stderr; artifacts only ever go to files.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import clustering, evaluation, routing, similarity, store, synth
from .errors import SimclustError, ValidationError
from .heads import HEAD_KINDS, TrainConfig, fit_head, load_head, save_head
from .routing import AGGREGATE_MODES
from .similarity import CentroidSet


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract says 1
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class CliConfig:
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    aggregate_mode: str = "mean"
    head_kind: str = "nearest_centroid"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.aggregate_mode not in AGGREGATE_MODES:
            raise ValidationError(f"aggregate_mode must be one of {AGGREGATE_MODES}")
        if self.head_kind not in HEAD_KINDS:
            raise ValidationError(f"head_kind must be one of {HEAD_KINDS}")


def _load_config(args) -> CliConfig:
    """Precedence: explicit flags > --config file > SIMCLUST_THREADS env > defaults."""
    cfg = CliConfig()
    env_threads = os.environ.get("SIMCLUST_THREADS")
    if env_threads:
        try:
            cfg = replace(cfg, threads=int(env_threads))
        except ValueError:
            raise UsageError(f"SIMCLUST_THREADS must be an integer, got {env_threads!r}")
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path) as f:
            doc = json.load(f)
        train = TrainConfig(**doc.get("train", {}))
        cfg = CliConfig(
            threads=doc.get("threads", cfg.threads),
            aggregate_mode=doc.get("aggregate_mode", cfg.aggregate_mode),
            head_kind=doc.get("head_kind", cfg.head_kind),
            train=train,
        )
    for name in ("threads", "aggregate_mode", "head_kind"):
        value = getattr(args, name, None)
        if value is not None:
            cfg = replace(cfg, **{name: value})
    train_overrides = {
        k: getattr(args, k)
        for k in ("epochs", "lr0", "step_size", "gamma", "l2", "seed")
        if getattr(args, k, None) is not None
    }
    if train_overrides:
        cfg = replace(cfg, train=replace(cfg.train, **train_overrides))
    return cfg


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _open_artifact(path, stage: str, loader):
    """Load an artifact file, turning a missing file into a message that
    names the stage that should have produced it."""
    try:
        return loader(path)
    except FileNotFoundError:
        raise FileNotFoundError(
            f"missing artifact '{path}': run `simclust {stage}` first"
        ) from None


def _load_cluster_centroids(
    split_path, centroids_path
) -> tuple[store.ClusterSplit, CentroidSet, dict[int, CentroidSet]]:
    cluster_split = _open_artifact(split_path, "split", store.load_split)
    dim, rows = _open_artifact(centroids_path, "simmat", store.load_fvec)
    names = list(cluster_split.assignments)
    if len(names) != rows.shape[0]:
        raise ValidationError(
            f"centroid file holds {rows.shape[0]} rows, split lists {len(names)} classes"
        )
    centroids = CentroidSet(dim, dict(zip(names, rows.astype(np.float64))))
    return cluster_split, centroids, clustering.cluster_centroid_sets(cluster_split, centroids)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args, cfg: CliConfig) -> int:
    spec = synth.SynthSpec.from_json(args.spec)
    dataset, ground_truth = synth.generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store.save_store(dataset, out / "manifest.json")
    synth.save_ground_truth(ground_truth, out / "ground_truth.json")
    _log(f"wrote store with {dataset.n_classes} classes to {out}")
    return 0


def _cmd_simmat(args, cfg: CliConfig) -> int:
    dataset = _open_artifact(args.store, "synth", store.load_store)
    centroids, simmat = similarity.build_similarity_matrix(dataset)
    similarity.save_matrix_csv(simmat, args.out_csv)
    store.save_fvec(centroids.matrix(), args.out_centroids)
    _log(f"wrote {simmat.n}x{simmat.n} matrix to {args.out_csv}")
    if args.heatmap:
        from . import report

        report.render_similarity_heatmap(simmat, args.heatmap)
        _log(f"wrote heatmap to {args.heatmap}")
    return 0


def _cmd_split(args, cfg: CliConfig) -> int:
    simmat = _open_artifact(args.simmat, "simmat", similarity.load_matrix_csv)
    split, dendro = clustering.ward_cluster(simmat, args.k)
    store.save_split(split, args.out)
    _log(f"split {simmat.n} classes into {split.k} clusters, sizes {sorted(split.sizes())}")
    if args.dendrogram:
        from . import report

        report.render_dendrogram(dendro, args.dendrogram)
        _log(f"wrote dendrogram to {args.dendrogram}")
    return 0


def _fit_cluster_head(dataset, member_names, kind, train_cfg):
    data = [dataset.class_by_name(n) for n in member_names]
    return fit_head(kind, data, train_cfg)


def _cmd_train(args, cfg: CliConfig) -> int:
    dataset = _open_artifact(args.store, "synth", store.load_store)
    if args.monolithic:
        head = fit_head(cfg.head_kind, list(dataset.classes), cfg.train)
        save_head(head, args.out)
        _log(f"trained monolithic {cfg.head_kind} head on {dataset.n_classes} classes")
        return 0

    split = _open_artifact(args.split, "split", store.load_split)
    missing = set(split.assignments) ^ set(dataset.class_names)
    if missing:
        raise ValidationError(f"split and store disagree on classes: {sorted(missing)}")
    if args.cluster is not None:
        if not 0 <= args.cluster < split.k:
            raise ValidationError(f"cluster id {args.cluster} outside [0, {split.k})")
        head = _fit_cluster_head(dataset, split.members(args.cluster), cfg.head_kind, cfg.train)
        save_head(head, args.out)
        _log(f"trained head for cluster {args.cluster} ({len(head.classes)} classes)")
        return 0

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = {
            cid: pool.submit(
                _fit_cluster_head, dataset, split.members(cid), cfg.head_kind, cfg.train
            )
            for cid in range(split.k)
        }
        for cid in range(split.k):
            save_head(futures[cid].result(), out_dir / f"cluster_{cid}.json")
    _log(f"trained {split.k} cluster heads into {out_dir}")
    return 0


def _cmd_route(args, cfg: CliConfig) -> int:
    _, _, by_cluster = _load_cluster_centroids(args.split, args.centroids)
    _, queries = _open_artifact(args.query, "simmat", store.load_fvec)
    decisions = [
        routing.select_cluster(q, by_cluster, cfg.aggregate_mode).to_dict() for q in queries
    ]
    with open(args.out, "w") as f:
        json.dump(decisions, f, indent=2)
        f.write("\n")
    _log(f"routed {len(decisions)} queries")
    return 0


def _cmd_predict(args, cfg: CliConfig) -> int:
    split, _, by_cluster = _load_cluster_centroids(args.split, args.centroids)
    heads = {
        cid: _open_artifact(Path(args.heads_dir) / f"cluster_{cid}.json", "train", load_head)
        for cid in range(split.k)
    }
    _, queries = _open_artifact(args.query, "simmat", store.load_fvec)
    results = []
    for q in queries:
        name, decision = routing.predict_class(q, split, by_cluster, heads, cfg.aggregate_mode)
        results.append({"class": name, "decision": decision.to_dict()})
    with open(args.out, "w") as f:
        json.dump(results, f, indent=2)
        f.write("\n")
    _log(f"predicted {len(results)} queries")
    return 0


def _train_pipeline_heads(train_store, split, cfg: CliConfig):
    """Per-cluster heads plus the all-classes baseline, trained concurrently."""
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = {
            cid: pool.submit(
                _fit_cluster_head, train_store, split.members(cid), cfg.head_kind, cfg.train
            )
            for cid in range(split.k)
        }
        mono_future = pool.submit(fit_head, cfg.head_kind, list(train_store.classes), cfg.train)
        heads = {cid: futures[cid].result() for cid in range(split.k)}
        monolithic = mono_future.result()
    return heads, monolithic


def _cmd_eval(args, cfg: CliConfig) -> int:
    if (args.split is None) == (args.k is None):
        raise UsageError("eval needs exactly one of --split or -k")
    dataset = _open_artifact(args.store, "synth", store.load_store)
    train_store, test_set = evaluation.split_train_test(dataset, args.test_fraction, args.eval_seed)
    centroids, simmat = similarity.build_similarity_matrix(train_store)
    if args.split is not None:
        split = _open_artifact(args.split, "split", store.load_split)
        missing = set(split.assignments) ^ set(dataset.class_names)
        if missing:
            raise ValidationError(f"split and store disagree on classes: {sorted(missing)}")
    else:
        split, _ = clustering.ward_cluster(simmat, args.k)

    heads, monolithic = _train_pipeline_heads(train_store, split, cfg)
    if args.heads_out:
        heads_dir = Path(args.heads_out)
        heads_dir.mkdir(parents=True, exist_ok=True)
        for cid, head in heads.items():
            save_head(head, heads_dir / f"cluster_{cid}.json")
        save_head(monolithic, heads_dir / "monolithic.json")

    artifacts = evaluation.PipelineArtifacts(
        split=split,
        centroids=centroids,
        heads=heads,
        monolithic=monolithic,
        aggregate_mode=cfg.aggregate_mode,
    )
    rep = evaluation.evaluate(artifacts, test_set)
    rep.notes.extend(_resource_notes(train_store, split))
    rep.notes.append(f"head_kind={cfg.head_kind} k={split.k} test_fraction={args.test_fraction}")
    rep.save(args.out)
    _log(
        f"routing={rep.routing_accuracy:.4f} end_to_end={rep.end_to_end_top1:.4f} "
        f"monolithic={rep.monolithic_top1:.4f} (n={rep.n_eval})"
    )
    if args.figures:
        from . import report

        written = report.render_eval_figures(rep, args.figures)
        _log("wrote figures: " + ", ".join(str(p) for p in written))
    return 0


def _resource_notes(train_store, split) -> list[str]:
    per_cluster = {cid: 0 for cid in range(split.k)}
    for c in train_store.classes:
        per_cluster[split.assignments[c.class_name]] += c.n
    total = sum(per_cluster.values())
    biggest = max(per_cluster.values())
    mib = train_store.dim * 8 / 2**20  # float64 bytes per cached vector
    # run-varying measurements (like RSS) go to the log, not the report,
    # so identical inputs keep producing identical report bytes
    try:
        import resource

        peak_kib = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
        _log(f"peak RSS {peak_kib / 1024:.1f} MiB (whole process, informational)")
    except ImportError:
        pass
    return [
        "training-set cache: largest cluster holds "
        f"{biggest} vectors ({biggest * mib:.2f} MiB), "
        f"monolithic holds all {total} ({total * mib:.2f} MiB)"
    ]


def _cmd_extend(args, cfg: CliConfig) -> int:
    dataset = _open_artifact(args.store, "synth", store.load_store)
    split = _open_artifact(args.split, "split", store.load_split)
    missing = set(split.assignments) ^ set(dataset.class_names)
    if missing:
        raise ValidationError(f"split and store disagree on classes: {sorted(missing)}")
    heads_dir = Path(args.heads_dir)
    heads = {
        cid: _open_artifact(heads_dir / f"cluster_{cid}.json", "train", load_head)
        for cid in range(split.k)
    }
    dim, vectors = _open_artifact(args.new, "synth", store.load_fvec)
    new_class = store.ClassEmbeddings(args.name, vectors)

    centroids = similarity.compute_centroids(dataset)
    artifacts = evaluation.PipelineArtifacts(
        split=split,
        centroids=centroids,
        heads=heads,
        monolithic=heads[0],  # placeholder, unused by the extension path
        aggregate_mode=cfg.aggregate_mode,
    )
    new_store, new_artifacts, ext_report = evaluation.extend_and_retrain(
        new_class, dataset, artifacts, cfg.head_kind, cfg.train
    )

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store.save_store(new_store, out / "manifest.json")
    store.save_split(new_artifacts.split, out / "split.json")
    store.save_fvec(new_artifacts.centroids.matrix(), out / "centroids.fvec")
    out_heads = out / "heads"
    out_heads.mkdir(exist_ok=True)
    for cid in range(split.k):
        if cid == ext_report.target_cluster:
            save_head(new_artifacts.heads[cid], out_heads / f"cluster_{cid}.json")
        else:
            # untouched heads are carried over byte-for-byte
            shutil.copyfile(heads_dir / f"cluster_{cid}.json", out_heads / f"cluster_{cid}.json")
    with open(out / "extension_report.json", "w") as f:
        json.dump(ext_report.to_dict(), f, indent=2)
        f.write("\n")
    _log(
        f"class {args.name!r} joined cluster {ext_report.target_cluster}; retrained "
        f"{ext_report.retrained_classes} of {ext_report.total_classes} classes"
    )
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="optional JSON config file")
    p.add_argument("--threads", type=int, help="worker threads for head training")
    p.add_argument("--aggregate-mode", dest="aggregate_mode", choices=AGGREGATE_MODES,
                   help="cluster score aggregation (default mean)")
    p.add_argument("--head", dest="head_kind", choices=HEAD_KINDS,
                   help="classifier head kind (default nearest_centroid)")
    for flag, typ in (("--epochs", int), ("--lr0", float), ("--step-size", int),
                      ("--gamma", float), ("--l2", float), ("--seed", int)):
        p.add_argument(flag, type=typ, help="linear head training parameter")


def build_parser() -> _Parser:
    parser = _Parser(prog="simclust", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic embedding store")
    p.add_argument("--spec", required=True, help="SynthSpec JSON file")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("simmat", help="similarity matrix + centroids from a store")
    p.add_argument("--store", required=True, help="store manifest JSON")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-centroids", required=True)
    p.add_argument("--heatmap", help="also render a heatmap PNG")
    p.set_defaults(func=_cmd_simmat)

    p = sub.add_parser("split", help="cluster classes from a similarity matrix")
    p.add_argument("--simmat", required=True, help="similarity matrix CSV")
    p.add_argument("-k", type=int, required=True, help="number of clusters (>= 1)")
    p.add_argument("--out", required=True)
    p.add_argument("--dendrogram", help="also render a dendrogram PNG")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train cluster heads or the monolithic baseline")
    p.add_argument("--store", required=True)
    p.add_argument("--split")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--cluster", type=int, help="train the head of one cluster")
    group.add_argument("--monolithic", action="store_true", help="train on all classes")
    group.add_argument("--all-clusters", action="store_true", help="train every cluster head")
    p.add_argument("--out", help="output head JSON (single head)")
    p.add_argument("--out-dir", help="output directory (--all-clusters)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("route", help="choose a cluster for each query vector")
    p.add_argument("--centroids", required=True, help="centroid FVEC from simmat")
    p.add_argument("--split", required=True)
    p.add_argument("--query", required=True, help="query FVEC file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_route)

    p = sub.add_parser("predict", help="route and classify each query vector")
    p.add_argument("--centroids", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--heads-dir", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="run the full pipeline on a held-out split")
    p.add_argument("--store", required=True)
    p.add_argument("--split", help="existing split JSON")
    p.add_argument("-k", type=int, help="cluster count (computed from the train portion)")
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--eval-seed", type=int, default=0, help="train/test split seed")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--figures", help="directory for report figures")
    p.add_argument("--heads-out", help="also save the trained heads here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("extend", help="add one class and retrain only its cluster")
    p.add_argument("--store", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--heads-dir", required=True)
    p.add_argument("--new", required=True, help="FVEC file with the new class's vectors")
    p.add_argument("--name", required=True, help="new class name")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_extend)

    for p in sub.choices.values():
        _add_common(p)
    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate_args(args)
        cfg = _load_config(args)
        return args.func(args, cfg)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SimclustError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 3


def _validate_args(args) -> None:
    if getattr(args, "k", None) is not None and args.k < 1:
        raise UsageError("simclust: -k must be >= 1")
    if getattr(args, "test_fraction", None) is not None and not 0 < args.test_fraction < 1:
        raise UsageError("simclust: --test-fraction must be in (0, 1)")
    if args.command == "train":
        if args.all_clusters and not args.out_dir:
            raise UsageError("simclust train --all-clusters needs --out-dir")
        if not args.all_clusters and not args.out:
            raise UsageError("simclust train needs --out")
        if (args.cluster is not None or args.all_clusters) and not args.split:
            raise UsageError("simclust train needs --split unless --monolithic")


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
