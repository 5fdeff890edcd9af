"""Command-line driver: embproc <subcommand> [flags].

Subcommands: normalize, aggregate, eval-sim, eval-analogy, variance,
probe, pipeline, fmt-check. All outputs land under --out. Exit codes:
0 success, 1 usage error, 2 data/format/I-O error.

Every run prints a one-line summary to stdout unless --quiet is given.
Identical inputs, flags and seed reproduce every output file byte for
byte.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from . import diagnostics, lexeval, normalize, probe
from .aggregate import (
    DEFAULT_MAX_CONTEXTS,
    DEFAULT_MIN_CONTEXTS,
    AggregationConfig,
    aggregate as pool_words,
    write_report as write_aggregation_report,
)
from .embstore import (
    OccurrenceRecord,
    OccurrenceShard,
    ShardWriter,
    open_shard,
    read_shard,
    read_word_vectors,
    write_word_vectors,
)
from .errors import DataError, EmbprocError

REPORT_CSV_HEADER = ("layer", "pipeline", "dataset", "metric", "value", "n_used", "n_skipped")


def _default_threads() -> int:
    raw = os.environ.get("EMBPROC_THREADS", "").strip()
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def _pipeline_spec(text: str) -> str:
    """argparse type hook: reject malformed specs as usage errors."""
    try:
        normalize.parse_pipeline(text)
    except EmbprocError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _pipeline_spec_or_raw(text: str) -> str:
    return text if text == "raw" else _pipeline_spec(text)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _suffix_for(spec: str) -> str:
    return spec.replace(":", "").replace(",", ".")


def _write_transformed(shard: OccurrenceShard, matrix, path: Path) -> None:
    with ShardWriter(path, dim=shard.dim, layer=shard.layer) as writer:
        for rec, row in zip(shard.records, matrix):
            writer.append(OccurrenceRecord(word=rec.word, sentence_id=rec.sentence_id, vector=row))


def _cmd_normalize(args) -> str:
    out = _out_dir(args)
    shard = read_shard(args.shard)
    pipeline = normalize.parse_pipeline(args.pipeline)
    data = shard.matrix()
    fitted = normalize.fit_pipeline(data, pipeline)
    transformed = fitted.apply(data)
    shard_path = out / f"{Path(args.shard).stem}.{_suffix_for(fitted.spec())}.ceb"
    _write_transformed(shard, transformed, shard_path)
    model_path = out / "model.npf"
    normalize.save_fitted(fitted, model_path)
    return (
        f"normalize: {fitted.spec()} over {len(shard)} records (dim {shard.dim}) "
        f"-> {shard_path}, {model_path}"
    )


def _cmd_aggregate(args) -> str:
    out = _out_dir(args)
    shard = read_shard(args.shard)
    cfg = AggregationConfig(
        min_contexts=args.min_contexts, max_contexts=args.max_contexts, seed=args.seed
    )
    table, report = pool_words(shard, cfg)
    vectors_path = out / "vectors.txt"
    report_path = out / "aggregate_report.csv"
    write_word_vectors(table, vectors_path)
    write_aggregation_report(report, report_path)
    return (
        f"aggregate: kept {len(table)} of {report.word_count} words "
        f"({report.dropped_count} dropped) -> {vectors_path}, {report_path}"
    )


def _eval_command(args, kind: str) -> str:
    out = _out_dir(args)
    table = read_word_vectors(args.vectors)
    results = []
    for path in args.dataset:
        if kind == "sim":
            results.append(lexeval.eval_similarity(table, lexeval.load_similarity(path)))
        else:
            ds = lexeval.load_analogy(path)
            results.append(lexeval.eval_analogy(table, ds, threads=args.threads))
    csv_path = out / ("eval_sim.csv" if kind == "sim" else "eval_analogy.csv")
    lexeval.write_results(results, csv_path)
    shown = ", ".join(f"{r.dataset}={r.value:.4f}" for r in results)
    name = "eval-sim" if kind == "sim" else "eval-analogy"
    return f"{name}: {shown} -> {csv_path}"


def _cmd_variance(args) -> str:
    out = _out_dir(args)
    entries = [diagnostics.layer_variance(read_shard(p)) for p in args.shard]
    entries.sort(key=lambda e: e.layer)
    profile = diagnostics.LayerVarianceProfile(model=args.model, entries=entries)
    csv_path, svg_path = diagnostics.variance_report([profile], out, y_limit=args.y_limit)
    return f"variance: {len(entries)} layer(s) for {args.model} -> {csv_path}, {svg_path}"


def _cmd_probe(args) -> str:
    out = _out_dir(args)
    shards = [read_shard(p) for p in args.shard]
    labels = probe.load_labels(args.labels)
    ds = probe.build_dataset(shards, labels)
    model = probe.train_probe(
        ds, l1=args.l1, l2=args.l2, epochs=args.epochs, lr=args.lr, seed=args.seed
    )
    ranking = probe.rank_neurons(model)
    selected = probe.select_salient(ranking, args.mass)
    hist = probe.layer_distribution(selected, ds.layout)
    probe.write_ranking(ranking, ds.layout, out / "ranking.csv")
    probe.write_histogram(hist, out / "histogram.csv")
    probe.write_histogram_svg(hist, out / "histogram.svg")
    return (
        f"probe: {ds.features.shape[0]} samples x {ds.dim} features, "
        f"final loss {model.final_loss:.6f}, {len(selected)} salient -> {out}"
    )


def _cmd_pipeline(args) -> str:
    out = _out_dir(args)
    if not args.sim_dataset and not args.analogy_dataset:
        raise DataError("pipeline needs at least one --sim-dataset or --analogy-dataset")
    sim_sets = [lexeval.load_similarity(p) for p in args.sim_dataset]
    analogy_sets = [lexeval.load_analogy(p) for p in args.analogy_dataset]
    cfg = AggregationConfig(
        min_contexts=args.min_contexts, max_contexts=args.max_contexts, seed=args.seed
    )
    rows = []
    for shard_path in args.shard:
        shard = read_shard(shard_path)
        data = shard.matrix()
        for spec in args.pipeline:
            if spec == "raw":
                transformed = data
                label = "raw"
            else:
                fitted = normalize.fit_pipeline(data, normalize.parse_pipeline(spec))
                transformed = fitted.apply(data)
                label = fitted.spec()
            records = [
                OccurrenceRecord(word=r.word, sentence_id=r.sentence_id, vector=v)
                for r, v in zip(shard.records, transformed)
            ]
            table, _ = pool_words(
                OccurrenceShard(layer=shard.layer, dim=shard.dim, records=records), cfg
            )
            results = [lexeval.eval_similarity(table, ds) for ds in sim_sets]
            results += [
                lexeval.eval_analogy(table, ds, threads=args.threads) for ds in analogy_sets
            ]
            for r in results:
                rows.append(
                    [shard.layer, label, r.dataset, r.metric,
                     repr(float(r.value)), r.n_used, r.n_skipped_oov]
                )
            rows.append(
                [shard.layer, label, "average", "mean",
                 repr(float(lexeval.average_report(results))),
                 sum(r.n_used for r in results), sum(r.n_skipped_oov for r in results)]
            )
    report_path = out / "report.csv"
    with open(report_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_CSV_HEADER)
        writer.writerows(rows)
    return (
        f"pipeline: {len(rows)} rows ({len(args.shard)} layer(s) x "
        f"{len(args.pipeline)} pipeline(s)) -> {report_path}"
    )


def _cmd_fmt_check(args) -> str:
    total = 0
    details = []
    for path in args.shard:
        count = 0
        with open_shard(path) as reader:
            for _ in reader:
                count += 1
        details.append(f"{path} (dim {reader.dim}, layer {reader.layer}, {count} records)")
        total += count
    return f"fmt-check: {len(args.shard)} shard(s) ok, {total} records: " + "; ".join(details)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=42, help="seed for all sampling")
    common.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help="worker threads for analogy scoring (default: EMBPROC_THREADS or 1)",
    )
    common.add_argument("--quiet", action="store_true", help="suppress the summary line")

    parser = argparse.ArgumentParser(
        prog="embproc",
        description="Post-process, aggregate, evaluate and probe occurrence embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", parents=[common], help="fit and apply a normalizer pipeline")
    p.add_argument("--shard", required=True, help="input .ceb shard")
    p.add_argument("--pipeline", required=True, type=_pipeline_spec,
                   help='steps, e.g. "abtt:7,zscore"')
    p.set_defaults(handler=_cmd_normalize)

    p = sub.add_parser("aggregate", parents=[common], help="pool occurrences into word vectors")
    p.add_argument("--shard", required=True, help="input .ceb shard")
    p.add_argument("--min-contexts", type=int, default=DEFAULT_MIN_CONTEXTS)
    p.add_argument("--max-contexts", type=int, default=DEFAULT_MAX_CONTEXTS)
    p.set_defaults(handler=_cmd_aggregate)

    p = sub.add_parser("eval-sim", parents=[common], help="word-similarity evaluation")
    p.add_argument("--vectors", required=True, help="word-vector text file")
    p.add_argument("--dataset", required=True, nargs="+", help="similarity dataset file(s)")
    p.set_defaults(handler=lambda a: _eval_command(a, "sim"))

    p = sub.add_parser("eval-analogy", parents=[common], help="word-analogy evaluation")
    p.add_argument("--vectors", required=True, help="word-vector text file")
    p.add_argument("--dataset", required=True, nargs="+", help="analogy dataset file(s)")
    p.set_defaults(handler=lambda a: _eval_command(a, "analogy"))

    p = sub.add_parser("variance", parents=[common], help="layer-wise feature variance report")
    p.add_argument("--shard", required=True, nargs="+", help="one .ceb shard per layer")
    p.add_argument("--model", default="model", help="series name for the chart")
    p.add_argument("--y-limit", type=float, default=None, help="cap the chart's y-axis")
    p.set_defaults(handler=_cmd_variance)

    p = sub.add_parser("probe", parents=[common], help="train an elastic-net probing classifier")
    p.add_argument("--shard", required=True, nargs="+", help="one .ceb shard per layer")
    p.add_argument("--labels", required=True, help="word<TAB>sentence_id<TAB>label file")
    p.add_argument("--l1", type=float, default=probe.DEFAULT_L1)
    p.add_argument("--l2", type=float, default=probe.DEFAULT_L2)
    p.add_argument("--epochs", type=int, default=probe.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=probe.DEFAULT_LR)
    p.add_argument("--mass", type=float, default=probe.DEFAULT_MASS,
                   help="cumulative importance fraction called salient")
    p.set_defaults(handler=_cmd_probe)

    p = sub.add_parser(
        "pipeline", parents=[common],
        help="normalize -> aggregate -> evaluate across layers and pipelines",
    )
    p.add_argument("--shard", required=True, nargs="+", help="one .ceb shard per layer")
    p.add_argument("--pipeline", required=True, nargs="+", type=_pipeline_spec_or_raw,
                   help='pipeline specs; "raw" skips normalization')
    p.add_argument("--sim-dataset", nargs="+", default=[])
    p.add_argument("--analogy-dataset", nargs="+", default=[])
    p.add_argument("--min-contexts", type=int, default=DEFAULT_MIN_CONTEXTS)
    p.add_argument("--max-contexts", type=int, default=DEFAULT_MAX_CONTEXTS)
    p.set_defaults(handler=_cmd_pipeline)

    p = sub.add_parser("fmt-check", parents=[common], help="validate .ceb shard files")
    p.add_argument("--shard", required=True, nargs="+", help="shard file(s) to validate")
    p.set_defaults(handler=_cmd_fmt_check)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        summary = args.handler(args)
    except EmbprocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(summary)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
