"""Command-line entry point: data generation, ensemble building, runs,
benchmarks, metrics reports and the curation service.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Stochastic
subcommands have no wall-clock seed fallback; --seed is explicit.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datagen, engine, metrics, oracle, treegen


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {exc}")


def _csv_names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfar",
        description=(
            "Flatten ensembles of hierarchical clustering trees into a single "
            "partition by asking pairwise same/different questions."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic drifting dataset")
    p.add_argument("--clusters", type=int, default=96)
    p.add_argument("--sessions", type=int, default=5)
    p.add_argument("--dropout", type=float, default=0.25)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--samples", type=int, default=38)
    p.add_argument("--drift-step", type=float, default=12.0)
    p.add_argument("--noise-sd", type=float, default=1.2)
    p.add_argument("--separation", type=float, default=22.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="dataset file to write")

    p = sub.add_parser("build-trees", help="build the hierarchical tree ensemble")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preprocess", type=_csv_names, default=treegen.PREPROCESS_MODES)
    p.add_argument("--transform", type=_csv_names, default=treegen.TRANSFORMS)
    p.add_argument("--pca-k", type=int, default=10)
    p.add_argument("--metrics", type=_csv_names, default=treegen.METRICS)
    p.add_argument("--linkages", type=_csv_names, default=treegen.LINKAGES)
    p.add_argument(
        "--channels",
        type=int,
        default=None,
        help="channel count of the waveforms (needed for derivative preprocessing "
        "of datasets loaded from file)",
    )

    p = sub.add_parser("run", help="flatten a tree ensemble against an oracle")
    p.add_argument("--trees", required=True, nargs="+", help="ensemble dir or tree files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--oracle", default="truth", help="truth | noisy:<flip rate>")
    p.add_argument("--noise-mode", choices=("consultation", "matrix"), default="consultation")
    p.add_argument("--mode", choices=engine.MODES, default="exact")
    p.add_argument("--majority-k", type=int, default=1)
    p.add_argument("--tree-subset", type=_csv_ints, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--single-search-return", action="store_true")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("benchmark", help="sweep ensemble sizes over seeded trials")
    p.add_argument("--m", type=_csv_ints, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--clusters", type=int, default=96)
    p.add_argument("--sessions", type=int, default=5)
    p.add_argument("--dropout", type=float, default=0.25)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--samples", type=int, default=38)
    p.add_argument("--drift-step", type=float, default=12.0)
    p.add_argument("--noise-sd", type=float, default=1.2)
    p.add_argument("--separation", type=float, default=22.0)
    p.add_argument("--data-seed", type=int, default=None, help="dataset seed (defaults to --seed)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = sub.add_parser("metrics", help="score a run report against truth labels")
    p.add_argument("--report", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="metrics JSON file to write")

    p = sub.add_parser("serve", help="start the curation session service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", default=None, help="static browser client bundle to serve")

    return parser


def _cmd_gen_data(args) -> int:
    cfg = datagen.GeneratorConfig(
        n_clusters=args.clusters,
        n_sessions=args.sessions,
        dropout=args.dropout,
        channels=args.channels,
        samples_per_channel=args.samples,
        drift_step=args.drift_step,
        noise_sd=args.noise_sd,
        cluster_separation=args.separation,
        seed=args.seed,
    )
    dataset = datagen.generate_synthetic(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    datagen.save_dataset(dataset, out)
    meta = {"generator": cfg.__dict__, "n_units": dataset.n_units, "dim": dataset.dim}
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {dataset.n_units} units to {out}")
    return 0


def _cmd_build_trees(args) -> int:
    dataset = datagen.load_dataset(args.dataset)
    if args.channels is not None:
        if dataset.dim % args.channels:
            raise ValueError(
                f"--channels {args.channels} does not divide feature dim {dataset.dim}"
            )
        dataset.channels = args.channels
        dataset.samples_per_channel = dataset.dim // args.channels
    cfg = treegen.EnsembleConfig(
        preprocess=args.preprocess,
        transform=args.transform,
        pca_k=args.pca_k,
        metrics=args.metrics,
        linkages=args.linkages,
    )
    cfg.validate()
    if "derivative" in cfg.preprocess and dataset.channels is None:
        raise ValueError("derivative preprocessing needs --channels for loaded datasets")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    skipped: list[dict] = []
    entries: list[dict] = []
    feat_cache: dict = {}
    dist_cache: dict = {}
    for cell in cfg.cells():
        p, t, m, l = cell
        tag = cfg.cell_tag(cell)
        try:
            if (p, t) not in feat_cache:
                feat_cache[p, t] = treegen.reduce(
                    treegen.preprocess(dataset, p), t, cfg.pca_k
                )
            if (p, t, m) not in dist_cache:
                dist_cache[p, t, m] = treegen.pairwise_distance(feat_cache[p, t], m)
            ltree = treegen.linkage(dist_cache[p, t, m], l)
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            skipped.append({"tag": tag, "reason": str(exc)})
            continue
        fname = tag.replace(",", "_") + ".tree"
        treegen.save_linkage(ltree, out / fname)
        entries.append({"file": fname, "tag": tag})
    manifest = {
        "dataset": str(args.dataset),
        "n_units": dataset.n_units,
        "config": {
            "preprocess": list(cfg.preprocess),
            "transform": list(cfg.transform),
            "pca_k": cfg.pca_k,
            "metrics": list(cfg.metrics),
            "linkages": list(cfg.linkages),
        },
        "trees": entries,
        "skipped": skipped,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(entries)} trees to {out} ({len(skipped)} cells skipped)")
    return 0


def _make_source(kind: str, noise_mode: str, seed: int | None, labels):
    if kind == "truth":
        if labels is None:
            raise ValueError("truth oracle needs a labeled dataset")
        return oracle.GroundTruthOracle(labels)
    if kind.startswith("noisy:"):
        if labels is None:
            raise ValueError("noisy oracle needs a labeled dataset")
        if seed is None:
            raise ValueError("--seed is required with a noisy oracle")
        rate = float(kind.split(":", 1)[1])
        return oracle.NoisyOracle(labels, rate, seed, noise_mode)
    raise ValueError(f"unknown oracle {kind!r} (use truth or noisy:<rate>)")


def _cmd_run(args) -> int:
    dataset = datagen.load_dataset(args.dataset)
    fst = treegen.load_ensemble(args.trees, dataset.n_units)
    source = _make_source(args.oracle, args.noise_mode, args.seed, dataset.labels)
    cfg = engine.CfarConfig(
        mode=args.mode,
        majority_k=args.majority_k,
        seed=args.seed if args.seed is not None else 0,
        tree_subset=None if args.tree_subset is None else tuple(args.tree_subset),
        single_search_return=args.single_search_return,
    )
    result = engine.run(fst, source, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = result.to_report(include_timing=not args.no_timing)
    report["inputs"] = {
        "dataset": str(args.dataset),
        "trees": [str(t) for t in args.trees],
        "oracle": args.oracle,
        "noise_mode": args.noise_mode if args.oracle.startswith("noisy") else None,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    (out / "query_log.jsonl").write_text(oracle.log_to_jsonl(result.log))
    print(
        f"found {result.blocks_found} blocks with "
        f"{result.oracle_consultations} oracle consultations "
        f"({result.inferred_answers} inferred)"
    )
    return 0


def _cmd_benchmark(args) -> int:
    if args.trials < 1:
        raise ValueError("--trials must be >= 1")
    data_seed = args.data_seed if args.data_seed is not None else args.seed
    dataset_cfg = datagen.GeneratorConfig(
        n_clusters=args.clusters,
        n_sessions=args.sessions,
        dropout=args.dropout,
        channels=args.channels,
        samples_per_channel=args.samples,
        drift_step=args.drift_step,
        noise_sd=args.noise_sd,
        cluster_separation=args.separation,
        seed=data_seed,
    )
    ensemble_cfg = treegen.EnsembleConfig()
    dataset = datagen.generate_synthetic(dataset_cfg)
    fst = treegen.build_ensemble(dataset, ensemble_cfg)
    rows = metrics.sweep(fst, dataset.labels, args.m, args.trials, args.seed, args.jobs)
    summary = metrics.summarize(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(metrics.rows_to_csv(rows))
    (out / "summary.csv").write_text(metrics.summary_to_csv(summary))
    config_echo = {
        "m_grid": args.m,
        "trials": args.trials,
        "master_seed": args.seed,
        "jobs": args.jobs,
        "dataset": dataset_cfg.__dict__,
        "ensemble": {
            "preprocess": list(ensemble_cfg.preprocess),
            "transform": list(ensemble_cfg.transform),
            "pca_k": ensemble_cfg.pca_k,
            "metrics": list(ensemble_cfg.metrics),
            "linkages": list(ensemble_cfg.linkages),
        },
        "n_units": dataset.n_units,
        "ensemble_size": len(fst),
    }
    (out / "config.json").write_text(json.dumps(config_echo, indent=2) + "\n")
    if not args.no_figures:
        from . import plots

        plots.render_benchmark_figures(summary, out, true_clusters=args.clusters)
    print(f"wrote {len(rows)} benchmark rows to {out}")
    return 0


def _cmd_metrics(args) -> int:
    report = json.loads(Path(args.report).read_text())
    dataset = datagen.load_dataset(args.dataset)
    if dataset.labels is None:
        raise ValueError(f"dataset {args.dataset} carries no ground-truth labels")
    partition = report["partition"]
    covered = sorted(u for block in partition for u in block)
    if covered != list(range(dataset.n_units)):
        raise ValueError("report partition does not cover the dataset's units")
    inferred = {u: i for i, block in enumerate(partition) for u in block}
    score = metrics.ami(dataset.labels, inferred)
    recovery = metrics.recovery_rates(partition, dataset.labels, dataset.sessions)
    out = {
        "ami": score,
        "n_clusters": len(partition),
        "true_clusters": len(set(dataset.labels.tolist())),
        "recovery": {
            "perfect_fraction": recovery.perfect_fraction,
            "histogram": recovery.histogram,
            "rates": recovery.rates,
        },
        "inputs": {"report": str(args.report), "dataset": str(args.dataset)},
    }
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(out, indent=2) + "\n")
    print(f"ami={score:.4f} clusters={len(partition)} "
          f"perfect_recovery={recovery.perfect_fraction:.2%}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(Path(args.data_dir), ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "build-trees": _cmd_build_trees,
    "run": _cmd_run,
    "benchmark": _cmd_benchmark,
    "metrics": _cmd_metrics,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, engine.RunError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
