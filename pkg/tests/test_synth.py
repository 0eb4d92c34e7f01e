"""Synthetic corpus generator and its scripted grader."""

import hashlib
import json

import pytest

from eventcast.errors import ConfigError
from eventcast.gateway import ChatMessage, GenerationParams
from eventcast.store import EventStore, TimeWindow, ingest
from eventcast.synth import (
    EXTRAFACT_MARKER,
    KEYFACT_MARKER,
    SUPPORT_RELATION,
    SynthSpec,
    fixed_responder,
    generate_synthetic_dataset,
    support_responder,
)

SMALL = SynthSpec(entities=40, relations=6, complex_events=4, days=40,
                  events_per_day=4, queries=20, planted_fraction=0.5,
                  noise_annotations=4, seed=7)


def generate(tmp_path, spec=SMALL, name="data"):
    out = tmp_path / name
    manifest = generate_synthetic_dataset(spec, out)
    return out, manifest


def load_lines(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def file_digests(root):
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.iterdir())
    }


# -- generation ----------------------------------------------------------------------


def test_same_seed_byte_identical(tmp_path):
    a, _ = generate(tmp_path, name="a")
    b, _ = generate(tmp_path, name="b")
    assert file_digests(a) == file_digests(b)


def test_different_seed_differs(tmp_path):
    a, _ = generate(tmp_path, name="a")
    spec = SynthSpec(**{**vars(SMALL), "seed": 8})
    b, _ = generate(tmp_path, spec, name="b")
    assert file_digests(a) != file_digests(b)


def test_planted_split_matches_fraction(tmp_path):
    _, manifest = generate(tmp_path)
    planted = manifest["synthesis"]["planted_query_uids"]
    assert manifest["synthesis"]["planted_count"] == round(20 * 0.5) == 10
    assert len(planted["highlighting"]) + len(planted["complementary"]) == 10
    assert set(planted["highlighting"]).isdisjoint(planted["complementary"])


def test_output_ingests_cleanly(tmp_path):
    out, _ = generate(tmp_path)
    store = ingest(
        out / "events.jsonl",
        out / "subevents.jsonl",
        out / "annotations.jsonl",
        articles_path=out / "articles.jsonl",
        manifest_path=out / "manifest.json",
    )
    assert isinstance(store, EventStore)
    assert not any(s.unlinked is False and not s.linked_event_uids for s in store.subevents.values()
                   if s.linked_event_uids is None)
    # Every highlighting annotation must resolve to a real ordinal.
    for ann in store.annotations.values():
        if ann.function.value == "highlighting":
            sub = store.subevent_at_ordinal(ann.article_uid, ann.key_subevent_ordinal)
            assert sub is not None


def test_queries_have_unique_subjects_and_in_window_support(tmp_path):
    out, _ = generate(tmp_path)
    store = ingest(out / "events.jsonl", out / "subevents.jsonl", out / "annotations.jsonl",
                   articles_path=out / "articles.jsonl")
    queries = load_lines(out / "queries.jsonl")
    subjects = [q["subject"] for q in queries]
    assert len(subjects) == len(set(subjects))
    for q in queries:
        if q["known"] != SUPPORT_RELATION:
            continue
        window = TimeWindow.ending_at(q["day_index"], 30)
        support = [
            e for e in store.events_by_subject(q["subject"], window)
            if e.relation == SUPPORT_RELATION and e.object == q["gold"]
        ]
        assert len(support) == 1, q["query_uid"]


def test_planted_support_not_shared_across_queries(tmp_path):
    out, _ = generate(tmp_path)
    events = load_lines(out / "events.jsonl")
    support_ces = [e["complex_event"] for e in events if e["relation"] == SUPPORT_RELATION]
    assert len(support_ces) == len(set(support_ces))


def test_markers_present_for_both_channels(tmp_path):
    out, manifest = generate(tmp_path)
    planted = manifest["synthesis"]["planted_query_uids"]
    assert planted["highlighting"] and planted["complementary"]
    subs_text = (out / "subevents.jsonl").read_text()
    anns_text = (out / "annotations.jsonl").read_text()
    assert KEYFACT_MARKER in subs_text
    assert EXTRAFACT_MARKER in anns_text


def test_spec_validation():
    with pytest.raises(ConfigError):
        SynthSpec(days=31)
    with pytest.raises(ConfigError):
        SynthSpec(entities=10, queries=20)
    with pytest.raises(ConfigError):
        SynthSpec(planted_fraction=1.5)


# -- scripted grader -------------------------------------------------------------------


def grade(user_text):
    messages = [ChatMessage("system", "irrelevant"), ChatMessage("user", user_text)]
    return support_responder(messages, GenerationParams())


def test_responder_reads_keyfact_line():
    user = "\n".join([
        "[Query]: (Entity007, RelationSupport, 30)",
        "[Key Events]:",
        f"{KEYFACT_MARKER} Entity007 is set to move on Entity042 according to field reports.",
        "[Related Events]: None.",
        "[Options]: A.Entity001 B.Entity042 C.Entity003 D.Entity004 E.Entity005",
    ])
    assert grade(user) == "The answer is B."


def test_responder_reads_extrafact_line():
    user = "\n".join([
        "[Query]: (Entity007, RelationSupport, 30)",
        "[Key Events]: None.",
        "[Related Events]:",
        f"{EXTRAFACT_MARKER} imagery indicates Entity007 is set to move on Entity005 soon.",
        "[Options]: A.Entity001 B.Entity042 C.Entity003 D.Entity004 E.Entity005",
    ])
    assert grade(user) == "The answer is E."


def test_responder_reads_structured_support_quad():
    user = "\n".join([
        "[Query]: (Entity007, RelationSupport, 30)",
        "[Key Events]:",
        f"(Entity007, {SUPPORT_RELATION}, Entity003, 12)",
        "[Related Events]: None.",
        "[Options]: A.Entity001 B.Entity042 C.Entity003 D.Entity004 E.Entity005",
    ])
    assert grade(user) == "The answer is C."


def test_responder_ignores_other_subjects_quads():
    user = "\n".join([
        "[Query]: (Entity007, RelationSupport, 30)",
        "[Key Events]:",
        f"(Entity099, {SUPPORT_RELATION}, Entity003, 12)",
        "(Entity007, RelationOther, Entity004, 3)",
        "[Related Events]: None.",
        "[Options]: A.Entity001 B.Entity042 C.Entity003 D.Entity004 E.Entity005",
    ])
    assert grade(user) == "A."


def test_responder_falls_back_without_evidence():
    user = "\n".join([
        "[Query]: (Entity007, RelationSupport, 30)",
        "[Key Events]: None.",
        "[Related Events]: None.",
        "[Options]: A.Entity001 B.Entity042 C.Entity003 D.Entity004 E.Entity005",
    ])
    assert grade(user) == "A."


def test_fixed_responder():
    responder = fixed_responder("Always D.")
    assert responder([ChatMessage("user", "x")], GenerationParams()) == "Always D."
