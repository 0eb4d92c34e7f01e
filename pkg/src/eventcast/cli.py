"""Command line interface.

Subcommands: synth (write a reproducible synthetic dataset), ingest
(validate a dataset and print its digest), annotate (classify article
images through a backend), run (full evaluation), compare (accuracy table
across run summaries).
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from .errors import EventcastError
from .gateway import BackendConfig, build_gateway
from .harness import RunConfig, compare, render_comparison, run
from .imagefunc import AnnotationCache, annotate_corpus, dump_annotations
from .store import ingest
from .synth import SynthSpec, fixed_responder, generate_synthetic_dataset, support_responder


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["http", "mock", "replay"], default="mock")
    parser.add_argument("--endpoint", help="chat completions URL for the http backend")
    parser.add_argument("--model", default="default")
    parser.add_argument(
        "--credential-env",
        default="EVENTCAST_API_KEY",
        help="name of the environment variable holding the API key",
    )
    parser.add_argument("--max-in-flight", type=int, default=4)
    parser.add_argument("--replay-from", help="replay log the replay backend reads")
    parser.add_argument("--replay-log", help="file where this run appends response records")
    parser.add_argument("--mock-script", help="JSON file mapping prompt digests to responses")
    parser.add_argument(
        "--mock-responder",
        choices=["support", "fixed"],
        help="built-in responder for the mock backend",
    )
    parser.add_argument("--mock-default", help="fixed response text (with --mock-responder fixed)")


def _backend_config(args) -> BackendConfig:
    kind = {"http": "http-chat", "mock": "mock", "replay": "replay"}[args.backend]
    return BackendConfig(
        kind=kind,
        endpoint=args.endpoint,
        model=args.model,
        credential_env=args.credential_env,
        max_in_flight=args.max_in_flight,
        replay_path=args.replay_from,
    )


def _mock_kwargs(args) -> dict:
    kwargs: dict = {}
    if args.mock_script:
        with open(args.mock_script, encoding="utf-8") as fh:
            kwargs["script"] = json.load(fh)
    if args.mock_responder == "support":
        kwargs["responder"] = support_responder
    elif args.mock_responder == "fixed":
        kwargs["responder"] = fixed_responder(args.mock_default or "A.")
    return kwargs


def _dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="directory with the dataset files")


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        entities=args.entities,
        relations=args.relations,
        complex_events=args.complex_events,
        days=args.days,
        events_per_day=args.events_per_day,
        queries=args.queries,
        planted_fraction=args.planted_fraction,
        subevents_per_article=args.subevents_per_article,
        noise_annotations=args.noise_annotations,
        seed=args.seed,
    )
    manifest = generate_synthetic_dataset(spec, args.out)
    planted = manifest["synthesis"]["planted_count"]
    print(f"wrote synthetic dataset to {args.out} ({spec.queries} queries, {planted} planted)")
    return 0


def _cmd_ingest(args) -> int:
    base = Path(args.dataset)
    store = ingest(
        base / "events.jsonl",
        base / "subevents.jsonl",
        base / "annotations.jsonl" if (base / "annotations.jsonl").exists() else None,
        articles_path=base / "articles.jsonl" if (base / "articles.jsonl").exists() else None,
        manifest_path=base / "manifest.json" if (base / "manifest.json").exists() else None,
    )
    print(
        f"events={len(store.events)} subevents={len(store.subevents)} "
        f"articles={len(store.articles)} annotations={len(store.annotations)}"
    )
    print(f"dataset_digest={store.dataset_digest}")
    return 0


def _cmd_annotate(args) -> int:
    base = Path(args.dataset)
    store = ingest(
        base / "events.jsonl",
        base / "subevents.jsonl",
        None,
        articles_path=base / "articles.jsonl" if (base / "articles.jsonl").exists() else None,
        manifest_path=base / "manifest.json" if (base / "manifest.json").exists() else None,
    )
    gateway = build_gateway(_backend_config(args), replay_log=args.replay_log, **_mock_kwargs(args))
    cache = AnnotationCache(args.cache)
    annotations = annotate_corpus(store, gateway, cache, images_dir=args.images_dir)
    dump_annotations(annotations, args.out)
    usable = sum(1 for a in annotations if a.usable())
    print(f"wrote {len(annotations)} annotations ({usable} usable) to {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = RunConfig.for_dataset_dir(
        args.dataset,
        mode=args.mode,
        data_format=args.data_format,
        target=args.target,
        function_mode=args.function_mode,
        retriever=args.retriever,
        external_retriever_cmd=tuple(shlex.split(args.external_retriever_cmd))
        if args.external_retriever_cmd
        else None,
        backend=_backend_config(args),
        window_days=args.window_days,
        history_cap=args.history_cap,
        complementary_cap=args.complementary_cap,
        char_budget=args.char_budget,
        seed=args.seed,
        replay_log=args.replay_log,
        out_dir=args.out,
    )
    report = run(config, **_mock_kwargs(args))
    counts = report.counts
    print(
        f"accuracy={report.accuracy:.4f} total={counts['total']} correct={counts['correct']} "
        f"unparseable={counts['unparseable']}"
    )
    if args.out:
        print(f"report written to {args.out}")
    return 0


def _cmd_compare(args) -> int:
    summaries = []
    for path in args.summaries:
        with open(path, encoding="utf-8") as fh:
            summaries.append(json.load(fh))
    comparison = compare(summaries)
    print(render_comparison(comparison))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(comparison, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eventcast",
        description="Multimodal temporal event forecasting over news corpora",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a reproducible synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--entities", type=int, default=250)
    p.add_argument("--relations", type=int, default=12)
    p.add_argument("--complex-events", type=int, default=6)
    p.add_argument("--days", type=int, default=60)
    p.add_argument("--events-per-day", type=int, default=8)
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--planted-fraction", type=float, default=0.5)
    p.add_argument("--subevents-per-article", type=int, default=4)
    p.add_argument("--noise-annotations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="validate a dataset and print its digest")
    _dataset_args(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("annotate", help="classify article images and write annotations")
    _dataset_args(p)
    p.add_argument("--images-dir", help="directory holding image files named by uid")
    p.add_argument("--cache", help="JSONL cache so interrupted runs resume")
    p.add_argument("--out", required=True)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("run", help="evaluate forecasting accuracy")
    _dataset_args(p)
    p.add_argument("--mode", choices=["icl", "rag"], default="icl")
    p.add_argument("--data-format", choices=["text", "graph"], default="text")
    p.add_argument("--target", choices=["object", "relation"], default="object")
    p.add_argument(
        "--function-mode",
        choices=["both", "key-only", "complementary-only", "none", "random"],
        default="both",
    )
    p.add_argument("--retriever", choices=["bm25", "external"], default="bm25")
    p.add_argument("--external-retriever-cmd", help="shell command for the external retriever")
    p.add_argument("--window-days", type=int, default=30)
    p.add_argument("--history-cap", type=int, default=50)
    p.add_argument("--complementary-cap", type=int, default=10)
    p.add_argument("--char-budget", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for records.jsonl and summary.json")
    _add_backend_args(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="tabulate accuracies across run summaries")
    p.add_argument("summaries", nargs="+", help="summary.json files; last one is the baseline")
    p.add_argument("--json", help="also write the comparison as JSON")
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (EventcastError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
