"""End-to-end evaluation: dataset -> history -> prompt -> model -> accuracy.

A run is described by a RunConfig, walks every query through the selected
history regime, renders the prompt pair, asks the gateway, parses the
answer and scores it. Reports carry the template checksum and dataset
digest so cross-run comparisons are guarded, and a content fingerprint
that excludes wall-clock fields so determinism is checkable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, GatewayError, IngestError, ParseError, PromptBudgetError, SanitizeError
from .gateway import BackendConfig, GenerationParams, LlmGateway, build_gateway
from .history import (
    build_icl_structured,
    build_icl_unstructured,
    build_rag_structured,
    build_rag_unstructured,
)
from .imagefunc import ImageAnnotation, ImageFunction, sanitize_complementary
from .prompting import (
    OptionSet,
    QuerySpec,
    build_options,
    derive_seed,
    parse_answer,
    render_forecast_prompt,
    template_checksum,
)
from .retrieval import Bm25Retriever, ExternalRetriever
from .store import EventStore, TimeWindow, ingest

logger = logging.getLogger(__name__)

MODES = ("icl", "rag")
DATA_FORMATS = ("text", "graph")
TARGETS = ("object", "relation")
FUNCTION_MODES = ("both", "key-only", "complementary-only", "none", "random")
RETRIEVERS = ("bm25", "external")


@dataclass(frozen=True)
class RunConfig:
    events_path: str
    subevents_path: str
    queries_path: str
    annotations_path: str | None = None
    articles_path: str | None = None
    manifest_path: str | None = None
    mode: str = "icl"
    data_format: str = "text"
    target: str = "object"
    function_mode: str = "both"
    retriever: str = "bm25"
    external_retriever_cmd: tuple[str, ...] | None = None
    backend: BackendConfig = field(default_factory=BackendConfig)
    window_days: int = 30
    history_cap: int = 50
    complementary_cap: int = 10
    char_budget: int | None = None
    seed: int = 0
    replay_log: str | None = None
    out_dir: str | None = None

    def __post_init__(self) -> None:
        for name, value, allowed in (
            ("mode", self.mode, MODES),
            ("data_format", self.data_format, DATA_FORMATS),
            ("target", self.target, TARGETS),
            ("function_mode", self.function_mode, FUNCTION_MODES),
            ("retriever", self.retriever, RETRIEVERS),
        ):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
        if self.window_days <= 0:
            raise ConfigError("window_days must be positive")
        if self.history_cap <= 0:
            raise ConfigError("history_cap must be positive")
        if self.retriever == "external" and not self.external_retriever_cmd:
            raise ConfigError("external retriever needs a command")

    @classmethod
    def for_dataset_dir(cls, dataset_dir: Path | str, **overrides) -> "RunConfig":
        """Conventional file names inside one dataset directory."""
        base = Path(dataset_dir)
        paths = {
            "events_path": base / "events.jsonl",
            "subevents_path": base / "subevents.jsonl",
            "annotations_path": base / "annotations.jsonl",
            "articles_path": base / "articles.jsonl",
            "manifest_path": base / "manifest.json",
            "queries_path": base / "queries.jsonl",
        }
        kwargs = {
            key: str(path)
            for key, path in paths.items()
            if key in ("events_path", "subevents_path", "queries_path") or path.exists()
        }
        kwargs.update(overrides)
        return cls(**kwargs)

    def snapshot(self) -> dict:
        """JSON-safe form for reports. Holds the credential variable's name,
        never its value."""
        snap = {
            "events_path": self.events_path,
            "subevents_path": self.subevents_path,
            "queries_path": self.queries_path,
            "annotations_path": self.annotations_path,
            "articles_path": self.articles_path,
            "manifest_path": self.manifest_path,
            "mode": self.mode,
            "data_format": self.data_format,
            "target": self.target,
            "function_mode": self.function_mode,
            "retriever": self.retriever,
            "external_retriever_cmd": list(self.external_retriever_cmd or []) or None,
            "backend": {
                "kind": self.backend.kind,
                "endpoint": self.backend.endpoint,
                "model": self.backend.model,
                "credential_env": self.backend.credential_env,
                "max_in_flight": self.backend.max_in_flight,
                "replay_path": self.backend.replay_path,
            },
            "window_days": self.window_days,
            "history_cap": self.history_cap,
            "complementary_cap": self.complementary_cap,
            "char_budget": self.char_budget,
            "seed": self.seed,
        }
        return snap


@dataclass(frozen=True)
class ForecastRecord:
    query_uid: str
    prompt_digest: str
    raw_response: str | None
    parsed: str | None
    method: str | None
    error: str | None
    gold: str
    correct: bool
    latency_ms: float

    def to_record(self) -> dict:
        return {
            "query_uid": self.query_uid,
            "prompt_digest": self.prompt_digest,
            "raw_response": self.raw_response,
            "parsed": self.parsed,
            "method": self.method,
            "error": self.error,
            "gold": self.gold,
            "correct": self.correct,
            "latency_ms": round(self.latency_ms, 3),
        }

    def content_record(self) -> dict:
        record = self.to_record()
        del record["latency_ms"]
        return record


@dataclass(frozen=True)
class EvalReport:
    config: dict
    records: tuple[ForecastRecord, ...]
    accuracy: float
    counts: dict
    template_checksum: str
    dataset_digest: str
    elapsed_seconds: float

    def fingerprint(self) -> str:
        """sha256 over everything except wall-clock fields."""
        payload = {
            "config": self.config,
            "records": [r.content_record() for r in self.records],
            "accuracy": self.accuracy,
            "counts": self.counts,
            "template_checksum": self.template_checksum,
            "dataset_digest": self.dataset_digest,
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def summary(self) -> dict:
        return {
            "config": self.config,
            "accuracy": self.accuracy,
            "counts": self.counts,
            "template_checksum": self.template_checksum,
            "dataset_digest": self.dataset_digest,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
            "fingerprint": self.fingerprint(),
        }

    def write(self, out_dir: Path | str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "records.jsonl", "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record.to_record(), sort_keys=True, ensure_ascii=False) + "\n")
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, sort_keys=True, indent=2, ensure_ascii=False)
            fh.write("\n")


def load_queries(path: Path | str) -> list[dict]:
    queries = []
    seen = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read file: {exc}", path=str(path)) from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"invalid JSON: {exc}", path=str(path), line_no=line_no) from exc
            for key in ("query_uid", "subject", "known", "target", "day_index", "gold"):
                if key not in record:
                    raise IngestError(f"query missing field {key!r}", path=str(path), line_no=line_no)
            if record["target"] not in TARGETS:
                raise IngestError(
                    f"query target must be one of {TARGETS}, got {record['target']!r}",
                    path=str(path), line_no=line_no,
                )
            if record["query_uid"] in seen:
                raise IngestError(
                    f"duplicate query uid {record['query_uid']!r}", path=str(path), line_no=line_no
                )
            seen.add(record["query_uid"])
            queries.append(record)
    return queries


def apply_function_mode(
    annotations: Sequence[ImageAnnotation],
    mode: str,
    store: EventStore,
    seed: int,
) -> list[ImageAnnotation]:
    """Ablation filter over annotations.

    none drops everything; key-only / complementary-only keep one function;
    random keeps counts but reassigns each annotation's payload within its
    own article under a seeded generator, so only placement quality varies.
    """
    ordered = sorted(annotations, key=lambda a: a.image_uid)
    if mode == "none":
        return []
    if mode == "both":
        return ordered
    if mode == "key-only":
        return [a for a in ordered if a.function is ImageFunction.HIGHLIGHTING]
    if mode == "complementary-only":
        return [a for a in ordered if a.function is ImageFunction.COMPLEMENTARY]
    rng = random.Random(seed)
    reassigned = []
    for ann in ordered:
        subevents = store.article_subevents(ann.article_uid)
        if ann.function is ImageFunction.HIGHLIGHTING and subevents:
            reassigned.append(replace(ann, key_subevent_ordinal=rng.choice(subevents).ordinal))
        elif ann.function is ImageFunction.COMPLEMENTARY and subevents:
            try:
                text = sanitize_complementary(rng.choice(subevents).text)
            except SanitizeError:
                logger.warning("random reassignment for %s produced no usable text; dropped", ann.image_uid)
                continue
            reassigned.append(replace(ann, complementary_text=text))
        else:
            reassigned.append(ann)
    return reassigned


def _build_bundle(config: RunConfig, store, query_spec, annotations, window, retriever):
    caps = {"cap": config.history_cap, "comp_cap": config.complementary_cap}
    if config.mode == "icl":
        if config.data_format == "graph":
            return build_icl_structured(store, query_spec, annotations, window, **caps)
        return build_icl_unstructured(store, query_spec, annotations, window, **caps)
    if config.data_format == "graph":
        return build_rag_structured(store, query_spec, annotations, window, **caps)
    return build_rag_unstructured(
        store, query_spec, retriever, window, annotations,
        top_k=config.history_cap, comp_cap=config.complementary_cap,
    )


def _make_retriever(config: RunConfig):
    if config.retriever == "bm25":
        return Bm25Retriever()
    return ExternalRetriever(config.external_retriever_cmd)


def _evaluate_query(
    config: RunConfig,
    store: EventStore,
    record: dict,
    annotations: list[ImageAnnotation],
    retriever,
    gateway: LlmGateway,
) -> ForecastRecord:
    from .gateway import prompt_digest

    window = TimeWindow.ending_at(record["day_index"], config.window_days)
    options = _options_for(record, store, config)
    query_spec = QuerySpec(
        query_uid=record["query_uid"],
        subject=record["subject"],
        known_slot=record["known"],
        target=record["target"],
        day_index=record["day_index"],
        complex_event=record.get("complex_event"),
        options=options,
    )
    bundle = _build_bundle(config, store, query_spec, annotations, window, retriever)
    started = time.monotonic()
    raw = None
    parsed = method = error = None
    try:
        package = render_forecast_prompt(query_spec, bundle, window, char_budget=config.char_budget)
        messages = package.messages()
        digest = prompt_digest(messages, GenerationParams(), gateway.model)
        raw = gateway.complete(messages)
        answer = parse_answer(raw, options)
        parsed, method = answer.letter, answer.method
    except PromptBudgetError as exc:
        digest = ""
        error = str(exc)
    except GatewayError as exc:
        error = str(exc)
    except ParseError as exc:
        error = str(exc)
    latency_ms = (time.monotonic() - started) * 1000.0
    return ForecastRecord(
        query_uid=record["query_uid"],
        prompt_digest=digest,
        raw_response=raw,
        parsed=parsed,
        method=method,
        error=error,
        gold=options.gold_letter,
        correct=parsed == options.gold_letter and parsed is not None,
        latency_ms=latency_ms,
    )


def _options_for(record: dict, store: EventStore, config: RunConfig) -> OptionSet:
    return build_options(
        record["gold"],
        store,
        derive_seed(config.seed, record["query_uid"]),
        target=record["target"],
        supplied=record.get("options"),
    )


def run(
    config: RunConfig,
    *,
    script: dict[str, str] | None = None,
    responder=None,
    default_response: str | None = None,
    transport=None,
) -> EvalReport:
    """Execute one full evaluation.

    Ingest or configuration problems abort before any model call; a
    per-query permanent gateway failure marks just that record incorrect.
    The keyword arguments feed the mock backend for offline runs and tests.
    """
    started = time.monotonic()
    store = ingest(
        config.events_path,
        config.subevents_path,
        config.annotations_path,
        articles_path=config.articles_path,
        manifest_path=config.manifest_path,
    )
    queries = [q for q in load_queries(config.queries_path) if q["target"] == config.target]
    if not queries:
        raise ConfigError(f"no queries with target {config.target!r} in {config.queries_path}")
    annotations = apply_function_mode(
        list(store.annotations.values()), config.function_mode, store, config.seed
    )
    gateway = build_gateway(
        config.backend,
        script=script,
        responder=responder,
        default_response=default_response,
        replay_log=config.replay_log,
        transport=transport,
    )
    retriever = _make_retriever(config)
    try:
        if config.backend.max_in_flight > 1:
            with ThreadPoolExecutor(max_workers=config.backend.max_in_flight) as pool:
                records = list(pool.map(
                    lambda q: _evaluate_query(config, store, q, annotations, retriever, gateway),
                    queries,
                ))
        else:
            records = [
                _evaluate_query(config, store, q, annotations, retriever, gateway)
                for q in queries
            ]
    finally:
        retriever.close()
        gateway.close()
    records.sort(key=lambda r: r.query_uid)
    correct = sum(1 for r in records if r.correct)
    parsed = sum(1 for r in records if r.parsed is not None)
    counts = {
        "total": len(records),
        "parsed": parsed,
        "unparseable": len(records) - parsed,
        "correct": correct,
    }
    report = EvalReport(
        config=config.snapshot(),
        records=tuple(records),
        accuracy=correct / len(records),
        counts=counts,
        template_checksum=template_checksum(),
        dataset_digest=store.dataset_digest,
        elapsed_seconds=time.monotonic() - started,
    )
    if config.out_dir:
        report.write(config.out_dir)
    return report


# -- report comparison ----------------------------------------------------------

_ROW_KEYS = ("mode", "data_format", "target", "function_mode")


def _as_summary(report) -> dict:
    if isinstance(report, EvalReport):
        return report.summary()
    return report


def compare(reports: Sequence) -> dict:
    """Side-by-side accuracies with deltas against the last report.

    All reports must carry the same dataset digest; comparing runs over
    different data is an error, not a footnote.
    """
    summaries = [_as_summary(r) for r in reports]
    if len(summaries) < 2:
        raise ConfigError("compare needs at least two reports")
    digests = {s["dataset_digest"] for s in summaries}
    if len(digests) != 1:
        raise ConfigError(f"dataset digests differ: {sorted(digests)}")
    baseline = summaries[-1]
    rows = []
    for summary in summaries:
        row = {key: summary["config"][key] for key in _ROW_KEYS}
        row["accuracy"] = summary["accuracy"]
        row["delta"] = round(summary["accuracy"] - baseline["accuracy"], 10)
        rows.append(row)
    return {
        "dataset_digest": baseline["dataset_digest"],
        "baseline": {key: baseline["config"][key] for key in _ROW_KEYS},
        "rows": rows,
    }


def render_comparison(comparison: dict) -> str:
    headers = [*_ROW_KEYS, "accuracy", "delta"]
    rows = [
        [str(row[key]) for key in _ROW_KEYS] + [f"{row['accuracy']:.4f}", f"{row['delta']:+.4f}"]
        for row in comparison["rows"]
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)
