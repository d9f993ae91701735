"""``rankshap`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .axioms import compliance_table, render_table, table_json
from .core import CorpusError
from .methods import METHODS
from .pipeline import ConfigError
from .rankers import RankerError

log = logging.getLogger("rankshap")

EXIT_CONFIG, EXIT_RUN = 2, 1


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--qrels")
    p.add_argument("--ranker", help="bm25 | bm25:K1,B | linear:weights.json | subprocess:CMD | http://URL")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--value-fn", dest="value_fn", help="ndcg, dcg, cg (optionally @K), map, rr, p@K, tau")
    p.add_argument("--relevance", choices=("model", "bm25", "qrels"))
    p.add_argument("--top-n", dest="top_n", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--top-t", dest="top_t", type=int)
    p.add_argument("--seed", type=int, help="default: $RANKSHAP_SEED, else 0")
    p.add_argument("--out")
    p.add_argument("--cap", type=int, help="maximum number of features per query")
    p.add_argument("--stemming", choices=("porter", "none"))
    p.add_argument("--exs-k", dest="exs_k", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--timeout", type=float, help="seconds per external ranker call")
    p.add_argument("--label", help="method name used in evaluation tables")


def _config(args: argparse.Namespace) -> pipeline.RunConfig:
    file_values = pipeline.read_config_file(args.config) if args.config else {}
    keys = {f for f in pipeline._TYPES if hasattr(args, f)}
    return pipeline.build_config(file_values, {k: getattr(args, k) for k in keys})


def _emit(text: str, path: str | None = None) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_ingest(args) -> int:
    summary = pipeline.cmd_ingest(_config(args))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_rank(args) -> int:
    print(pipeline.cmd_rank(_config(args)))
    return 0


def cmd_attribute(args) -> int:
    index = pipeline.cmd_attribute(_config(args), resume=args.resume)
    done = sum(1 for s in index["queries"].values() if s["status"] == "done")
    print(f"{done}/{len(index['queries'])} queries attributed")
    return 0


def cmd_evaluate(args) -> int:
    base = Path(args.out).parent if args.out else Path.cwd()
    report = pipeline.cmd_evaluate(args.dirs, top_t=args.top_t, base=base)
    if args.out:
        pipeline.write_json(Path(args.out), report)
    print(pipeline.fidelity_table(report))
    return 0


def cmd_report(args) -> int:
    written = pipeline.cmd_report(args.source, args.out, top_t=args.top_t)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def cmd_axioms(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown methods: {', '.join(unknown)}")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    seed = args.seed if args.seed is not None else pipeline.build_config().seed
    table = compliance_table(methods, args.trials, seed, args.n_samples)
    if args.out:
        _emit(table_json(table), args.out)
    else:
        print(table_json(table))
    print(render_table(table), file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_experiment(args) -> int:
    from .experiments import DEFAULT_ARMS, RELEVANCE_ARMS, run_fidelity_suite

    seed = args.seed if args.seed is not None else pipeline.build_config().seed
    result = run_fidelity_suite(DEFAULT_ARMS + RELEVANCE_ARMS, n_queries=args.n_queries, top_n=args.top_n,
                                n_samples=args.n_samples, top_t=args.top_t, seed=seed, exs_k=args.exs_k)
    if args.out:
        pipeline.write_json(Path(args.out), {k: v for k, v in result.to_json().items() if k != "schema"})
    print(result.table())
    return 0


def cmd_synth(args) -> int:
    from .core import TokenizerConfig
    from .synthetic import synthetic_suite

    seed = args.seed if args.seed is not None else pipeline.build_config().seed
    suite = synthetic_suite(args.n_queries, n_candidates=args.n_candidates, seed=seed,
                            config=TokenizerConfig(stemming="none"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "corpus.jsonl").open("w", encoding="utf-8") as c, \
            (out / "queries.jsonl").open("w", encoding="utf-8") as q, \
            (out / "qrels.jsonl").open("w", encoding="utf-8") as r:
        for sq in suite:
            ids = [d.id for d in sq.candidates]
            q.write(json.dumps({"id": sq.query.id, "text": sq.query.text, "candidates": ids}, sort_keys=True) + "\n")
            for d in sq.candidates:
                c.write(json.dumps({"id": d.id, "text": d.text}, sort_keys=True) + "\n")
                r.write(json.dumps({"query_id": sq.query.id, "doc_id": d.id, "rel": sq.qrels[d.id]},
                                   sort_keys=True) + "\n")
    print(f"wrote {len(suite)} queries to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankshap", description="Shapley attributions for ranking models")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate corpus, queries and qrels")
    _run_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("rank", help="rank each query's candidates and write rankings.json")
    _run_flags(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("attribute", help="attribute each query's top-n ranking")
    _run_flags(p)
    p.add_argument("--resume", action="store_true", help="skip queries already attributed with this config")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("evaluate", help="Fidelity and wFidelity of attribution directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--top-t", dest="top_t", type=int, default=7)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="per-query SVG bar charts and TSV data")
    p.add_argument("source", help="attribution directory or fidelity report JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--top-t", dest="top_t", type=int, default=7)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("axioms", help="randomized axiom compliance table")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=5000)
    p.add_argument("--out", help="write the JSON matrix here (the text table goes to stdout)")
    p.set_defaults(func=cmd_axioms)

    p = sub.add_parser("experiment", help="desk-scale fidelity comparison on synthetic queries")
    p.add_argument("--n-queries", dest="n_queries", type=int, default=25)
    p.add_argument("--top-n", dest="top_n", type=int, default=10)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=5000)
    p.add_argument("--top-t", dest="top_t", type=int, default=7)
    p.add_argument("--exs-k", dest="exs_k", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("synth", help="write a synthetic corpus, queries and qrels")
    p.add_argument("--n-queries", dest="n_queries", type=int, default=25)
    p.add_argument("--n-candidates", dest="n_candidates", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CorpusError) as exc:
        print(f"rankshap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RankerError as exc:
        print(f"rankshap: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
