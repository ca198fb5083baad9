"""Command-line entry point: ``alrank {gen,run,analyze,eval,report}``.

Exit codes: 0 success, 1 usage or invalid configuration, 2 unreadable or
malformed data, 3 any other runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .acquisition import Strategy
from .committee import Committee
from .dataset import NUM_LABELS, LetorFormatError, gen_synthetic, groups_for, read_letor, write_letor
from .gbrank import GBRankModel, NoTrainingPairsError
from .metrics import GainFn, bucket_distribution, evaluate_model, label_distribution
from .simulator import PoolError, RunReport, compare_runs, correlation_study, run_active_learning

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("alrank")

PRECEDENCE = (
    "Settings resolve as: command-line flags > --config file > built-in defaults. "
    "Use --print-config to see every effective value; the printed TOML can be "
    "passed back with --config."
)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    p.add_argument("--seed", type=int, help="single source of randomness (default: from config, 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="alrank", description=__doc__.splitlines()[0], epilog=PRECEDENCE)
    parser.add_argument("--version", action="version", version=f"alrank {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a synthetic LETOR corpus", epilog=PRECEDENCE)
    _add_config_flags(p)
    p.add_argument("--queries", type=int)
    p.add_argument("--docs", type=int, help="documents per query")
    p.add_argument("--dim", type=int, help="feature dimensionality")
    p.add_argument("--noise", type=float, help="noise scale of the latent relevance")
    p.add_argument("--qid-offset", type=int)
    p.add_argument("-o", "--out", type=Path)

    p = sub.add_parser("run", help="simulate active learning and write reports", epilog=PRECEDENCE)
    _add_config_flags(p)
    p.add_argument("--pool", type=Path)
    p.add_argument("--val", type=Path)
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--alpha", type=float)
    p.add_argument("--bs", type=int, help="batch size per cycle")
    p.add_argument("--cycles", type=int)
    p.add_argument("--base", type=int, help="initial labeled queries")
    p.add_argument("--quota", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--k", type=int, help="evaluation cutoff")
    p.add_argument("--gain", choices=[g.value for g in GainFn])
    p.add_argument("--tree-counts", type=_int_list, help="committee tree counts, e.g. 100,300,500")
    p.add_argument("--depths", type=_int_list, help="committee depths, e.g. 1,3,5")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--baseline", type=Path, help="earlier report.json to compute deltas against")
    p.add_argument("--out-dir", type=Path, default=Path("run_out"))

    p = sub.add_parser("analyze", help="correlation and distribution tables")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--committee", type=Path, required=True)
    p.add_argument("--run", type=Path, help="report.json whose selected queries feed the distributions")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--gain", choices=[g.value for g in GainFn], default=GainFn.EXPONENTIAL.value)
    p.add_argument("--out-dir", type=Path, default=Path("analysis"))

    p = sub.add_parser("eval", help="evaluate a saved ranker on a corpus")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--gain", choices=[g.value for g in GainFn], default=GainFn.EXPONENTIAL.value)
    p.add_argument("--out", type=Path, help="per-query CSV")

    p = sub.add_parser("report", help="compare run reports against a baseline")
    p.add_argument("runs", nargs="+", type=Path)
    p.add_argument("--baseline", type=Path, required=True)
    p.add_argument("--out", type=Path, help="comparison JSON")
    p.add_argument("--csv", type=Path, help="comparison CSV, one row per run")
    return parser


# ---------------------------------------------------------------------------


def _resolve_config(args, overrides: dict) -> cfgmod.RunConfigFile:
    try:
        base = cfgmod.load(args.config) if args.config else cfgmod.RunConfigFile()
        conf = cfgmod.merge(base, overrides)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {exc.filename}") from exc
    except cfgmod.ConfigError as exc:
        raise UsageError(f"config rejected: {exc}") from exc
    if args.seed is not None:
        conf = conf.with_seed(args.seed)
    return conf


def _read_corpus(path: Path):
    try:
        return read_letor(path)
    except FileNotFoundError as exc:
        raise DataError(f"{path}: no such file") from exc
    except (LetorFormatError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def cmd_gen(args) -> int:
    conf = _resolve_config(
        args,
        {
            "synth": {
                "num_queries": args.queries,
                "docs_per_query": args.docs,
                "feature_dim": args.dim,
                "noise_scale": args.noise,
                "qid_offset": args.qid_offset,
            }
        },
    )
    if args.print_config:
        sys.stdout.write(conf.dumps())
        return EXIT_OK
    if args.out is None:
        raise UsageError("gen needs -o/--out")
    corpus = gen_synthetic(conf.synth, conf.al.seed)
    write_letor(corpus, args.out)
    labels = np.concatenate([g.labels for g in corpus.queries])
    print(
        f"wrote {args.out}: {len(corpus)} queries, {corpus.num_docs} documents, "
        f"{corpus.feature_dim} features, label counts {np.bincount(labels, minlength=NUM_LABELS).tolist()}"
    )
    return EXIT_OK


def cmd_run(args) -> int:
    committee = {"tree_counts": args.tree_counts, "depths": args.depths}
    conf = _resolve_config(
        args,
        {
            "al": {
                "strategy": args.strategy,
                "alpha": args.alpha,
                "batch_size": args.bs,
                "cycles": args.cycles,
                "base_size": args.base,
                "quota": args.quota,
                "temperature": args.temperature,
                "eval_k": args.k,
                "gain": args.gain,
            },
            "committee": committee,
        },
    )
    if args.print_config:
        sys.stdout.write(conf.dumps())
        return EXIT_OK
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.pool is None or args.val is None:
        raise UsageError("run needs --pool and --val")
    pool = _read_corpus(args.pool)
    val = _read_corpus(args.val)
    baseline = None
    if args.baseline is not None:
        try:
            baseline = RunReport.load(args.baseline)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"{args.baseline}: {exc}") from exc
    try:
        report = run_active_learning(pool, val, conf.al, threads=args.threads, keep_committee=True)
    except (NoTrainingPairsError, PoolError) as exc:
        raise DataError(str(exc)) from exc
    if baseline is not None:
        report.baseline = compare_runs(report, baseline, name=str(args.baseline))

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "cycles": out / "cycles.csv",
        "ranker": out / "ranker.json",
        "committee": out / "committee.zip",
        "config": out / "config.toml",
    }
    paths["report"].write_text(report.to_json(), encoding="utf-8")
    report.write_csv(paths["cycles"])
    paths["ranker"].write_text(report.ranker.to_json() + "\n", encoding="utf-8")
    report.committee.save(paths["committee"])
    paths["config"].write_text(conf.dumps(), encoding="utf-8")
    last = report.cycles[-1] if report.cycles else None
    if last is not None:
        print(
            f"{len(report.cycles)} cycles, {last.labeled} labeled, "
            f"mean dcg@{conf.al.eval_k}={report.mean_dcg():.4f}, final r01={last.r01:.4f}"
        )
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    corpus = _read_corpus(args.corpus)
    if not args.committee.exists():
        raise DataError(f"{args.committee}: committee archive not found")
    try:
        committee = Committee.load(args.committee)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"{args.committee}: {exc}") from exc
    gain = GainFn(args.gain)
    study = correlation_study(corpus, committee, args.k, gain)

    selected = list(corpus.queries)
    if args.run is not None:
        try:
            report = RunReport.load(args.run)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"{args.run}: {exc}") from exc
        ids = [q for c in report.cycles for q in c.selected_ids]
        missing = set(ids) - set(corpus.query_ids)
        if missing:
            raise DataError(f"run selected queries absent from {args.corpus}, e.g. {sorted(missing)[0]!r}")
        selected = groups_for(corpus, ids)

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    study.write_csv(out / "correlation.csv")
    (out / "correlation_summary.json").write_text(
        json.dumps({"k": args.k, "gain": gain.value, "queries": len(study.rows), **study.correlations},
                   indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    buckets = bucket_distribution(selected)
    _write_csv(out / "bucket_distribution.csv", [["bucket", "count"], *([b, int(c)] for b, c in enumerate(buckets))])
    table = label_distribution(selected)
    _write_csv(
        out / "label_distribution.csv",
        [["bucket", "label", "count"], *([b, l, int(table[b, l])] for b in range(table.shape[0]) for l in range(table.shape[1]))],
    )
    for name, r in study.correlations.items():
        print(f"corr {name}: {'undefined' if r is None else f'{r:.4f}'}")
    print(f"tables written to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    corpus = _read_corpus(args.data)
    try:
        model = GBRankModel.from_json(args.model.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{args.model}: no such file") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(f"{args.model}: {exc}") from exc
    if model.feature_dim is not None and model.feature_dim != corpus.feature_dim:
        raise DataError(f"model expects {model.feature_dim} features, data has {corpus.feature_dim}")
    per_query, mean = evaluate_model(model, list(corpus.queries), args.k, GainFn(args.gain))
    if args.out is not None:
        rows = [["query_id", "bucket", f"dcg{args.k}", f"best_dcg{args.k}", "r01"]]
        rows += [[g.query_id, g.bucket, repr(r.dcg_k), repr(r.best_dcg_k), repr(r.r01)]
                 for g, r in zip(corpus.queries, per_query)]
        _write_csv(args.out, rows)
    print(json.dumps({"k": mean.k, "gain": mean.gain, "queries": mean.num_queries,
                      "dcg": mean.dcg_k, "best_dcg": mean.best_dcg_k, "r01": mean.r01}, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        baseline = RunReport.load(args.baseline)
        runs = [(p, RunReport.load(p)) for p in args.runs]
    except FileNotFoundError as exc:
        raise DataError(f"{exc.filename}: no such file") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(str(exc)) from exc
    comparisons = [compare_runs(r, baseline, name=str(args.baseline)) | {"run": str(p)} for p, r in runs]
    header = ["run", "strategy", "alpha", "mean_dcg", "mean_dcg_delta", "mean_dcg_rel_pct",
              "final_valid_pairs", "final_neg_pos_pairs", "final_r01"]
    rows = [header]
    for (p, r), c in zip(runs, comparisons):
        last = r.cycles[-1]
        rows.append([str(p), r.config.get("strategy"), r.config.get("alpha"), repr(r.mean_dcg()),
                     repr(c["mean_dcg_delta"]), repr(c["mean_dcg_rel_pct"]),
                     last.valid_pairs, last.neg_pos_pairs, repr(last.r01)])
    if args.out is not None:
        args.out.write_text(json.dumps(comparisons, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.csv is not None:
        _write_csv(args.csv, rows)
    for row in rows:
        print("\t".join(str(x) for x in row))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "analyze": cmd_analyze, "eval": cmd_eval, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"alrank {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"alrank {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        log.debug("unhandled error", exc_info=True)
        print(f"alrank {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
