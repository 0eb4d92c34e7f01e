"""Shared test helpers: record builders and a file-backed store factory."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from eventcast.store import EventStore, ingest


def event(uid, subject, relation, obj, day, ce="ce1") -> dict:
    return {
        "event_uid": uid, "subject": subject, "relation": relation,
        "object": obj, "day_index": day, "complex_event": ce,
    }


def subevent(uid, text, day, article_uid, links, ordinal) -> dict:
    return {
        "subevent_uid": uid, "text": text, "day_index": day,
        "article_uid": article_uid, "linked_event_uids": list(links), "ordinal": ordinal,
    }


def article(uid, day, images=("img1",), title=None, body=None) -> dict:
    return {
        "article_uid": uid, "title": title or f"Title of {uid}",
        "body": body or f"Body of {uid}.", "day_index": day, "image_uids": list(images),
    }


def highlighting(image_uid, article_uid, ordinal) -> dict:
    return {
        "image_uid": image_uid, "article_uid": article_uid,
        "function": "highlighting", "key_subevent_ordinal": ordinal,
        "provenance": "ingested",
    }


def complementary(image_uid, article_uid, text) -> dict:
    return {
        "image_uid": image_uid, "article_uid": article_uid,
        "function": "complementary", "complementary_text": text,
        "provenance": "ingested",
    }


def write_jsonl(path: Path, records) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def make_store(
    base: Path,
    events=(),
    subevents=(),
    articles=None,
    annotations=None,
    manifest=None,
) -> EventStore:
    """Write dataset files under ``base`` and ingest them."""
    base.mkdir(parents=True, exist_ok=True)
    events_path = write_jsonl(base / "events.jsonl", events)
    subevents_path = write_jsonl(base / "subevents.jsonl", subevents)
    articles_path = write_jsonl(base / "articles.jsonl", articles) if articles is not None else None
    annotations_path = (
        write_jsonl(base / "annotations.jsonl", annotations) if annotations is not None else None
    )
    manifest_path = None
    if manifest is not None:
        manifest_path = base / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, sort_keys=True), encoding="utf-8")
    return ingest(
        events_path,
        subevents_path,
        annotations_path,
        articles_path=articles_path,
        manifest_path=manifest_path,
    )


@pytest.fixture()
def store_factory(tmp_path):
    """Per-test store builder; each call writes into a fresh subdirectory."""
    counter = [0]

    def build(**kwargs) -> EventStore:
        counter[0] += 1
        return make_store(tmp_path / f"store{counter[0]}", **kwargs)

    return build


GOLDEN_DIR = Path(__file__).parent / "golden"
