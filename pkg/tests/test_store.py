"""Ingestion, indexing and windowed retrieval."""

import json
import random

import pytest

from conftest import article, complementary, event, highlighting, make_store, subevent, write_jsonl
from eventcast.errors import IngestError
from eventcast.store import TimeWindow, ingest, load_manifest


def test_empty_files_give_empty_store(store_factory):
    store = store_factory(events=[], subevents=[])
    assert store.events == {}
    assert store.subevents == {}


def test_single_quintuple_indexed_by_subject(store_factory):
    store = store_factory(events=[event("q1", "e1", "r1", "e2", 5)], subevents=[])
    assert set(store.events) == {"q1"}
    found = store.events_by_subject("e1", TimeWindow(0, 10))
    assert [ev.event_uid for ev in found] == ["q1"]
    assert store.events["q1"].complex_event == "ce1"


def test_unknown_subject_is_empty(store_factory):
    store = store_factory(events=[event("q1", "e1", "r1", "e2", 5)], subevents=[])
    assert store.events_by_subject("nobody", TimeWindow(0, 10)) == []


def test_half_open_window_boundaries(store_factory):
    events = [event(f"q{t}", "e1", "r1", "e2", t) for t in (69, 70, 99, 100)]
    store = store_factory(events=events, subevents=[])
    found = store.events_by_subject("e1", TimeWindow(70, 100))
    assert [ev.day_index for ev in found] == [70, 99]


def test_complex_event_lookup_ascending(store_factory):
    events = [
        event("q2", "e3", "r1", "e4", 2, ce="ce1"),
        event("q1", "e1", "r1", "e2", 1, ce="ce1"),
        event("q3", "e1", "r1", "e2", 1, ce="other"),
    ]
    store = store_factory(events=events, subevents=[])
    found = store.events_by_complex_event("ce1", TimeWindow(0, 3))
    assert [ev.event_uid for ev in found] == ["q1", "q2"]
    assert store.events_by_complex_event("unknown", TimeWindow(0, 3)) == []


def test_indexed_lookups_equal_brute_force_scan(store_factory):
    rng = random.Random(42)
    events = [
        event(
            f"q{i}",
            f"e{rng.randint(0, 30)}",
            f"r{rng.randint(0, 8)}",
            f"e{rng.randint(0, 30)}",
            rng.randint(0, 120),
            ce=f"ce{rng.randint(0, 10)}",
        )
        for i in range(1000)
    ]
    store = store_factory(events=events, subevents=[])
    window = TimeWindow(20, 90)

    def brute(pred):
        keep = [e for e in events if pred(e) and 20 <= e["day_index"] < 90]
        keep.sort(key=lambda e: (e["day_index"], e["event_uid"]))
        return [e["event_uid"] for e in keep]

    for subject in {e["subject"] for e in events}:
        got = [ev.event_uid for ev in store.events_by_subject(subject, window)]
        assert got == brute(lambda e, s=subject: e["subject"] == s)
    for ce in {e["complex_event"] for e in events}:
        got = [ev.event_uid for ev in store.events_by_complex_event(ce, window)]
        assert got == brute(lambda e, c=ce: e["complex_event"] == c)
    for obj in list({e["object"] for e in events})[:10]:
        got = [ev.event_uid for ev in store.events_by_object(obj, window)]
        assert got == brute(lambda e, o=obj: e["object"] == o)


def test_subevents_for_events_joins_and_dedupes(store_factory):
    events = [event("q1", "e1", "r1", "e2", 1), event("q2", "e3", "r1", "e4", 2)]
    subs = [
        subevent("s1", "Shared sentence.", 1, "a1", ["q1", "q2"], 1),
        subevent("s2", "Only second.", 2, "a1", ["q2"], 2),
        subevent("s3", "Unrelated.", 2, "a1", [], 3),
    ]
    store = store_factory(events=events, subevents=subs, articles=[article("a1", 1)])
    got = store.subevents_for_events(["q1", "q2"])
    assert [s.subevent_uid for s in got] == ["s1", "s2"]
    assert store.subevents_for_events([]) == []


def test_subevent_join_matches_brute_force(store_factory):
    rng = random.Random(7)
    events = [event(f"q{i}", f"e{i % 20}", "r1", f"e{(i + 3) % 20}", rng.randint(0, 40)) for i in range(200)]
    subs = []
    for i in range(300):
        links = rng.sample([e["event_uid"] for e in events], rng.randint(0, 3))
        subs.append(subevent(f"s{i}", f"Sentence {i}.", rng.randint(0, 40), f"a{i % 40}", links, 1 + i % 5))
    articles = [article(f"a{i}", i % 40) for i in range(40)]
    store = store_factory(events=events, subevents=subs, articles=articles)
    chosen = [e["event_uid"] for e in events if rng.random() < 0.3]
    got = [s.subevent_uid for s in store.subevents_for_events(chosen)]
    expected = sorted(
        {s["subevent_uid"] for s in subs if set(s["linked_event_uids"]) & set(chosen)},
        key=lambda uid: (next(s["day_index"] for s in subs if s["subevent_uid"] == uid), uid),
    )
    assert got == expected


def test_duplicate_event_uid_names_the_uid(tmp_path):
    with pytest.raises(IngestError, match="dup1"):
        make_store(tmp_path, events=[event("dup1", "e1", "r1", "e2", 1)] * 2, subevents=[])


def test_malformed_line_carries_line_number(tmp_path):
    events_path = tmp_path / "events.jsonl"
    events_path.write_text(json.dumps(event("q1", "e1", "r1", "e2", 1)) + "\n{broken\n", encoding="utf-8")
    subs_path = write_jsonl(tmp_path / "subevents.jsonl", [])
    with pytest.raises(IngestError, match=r"events\.jsonl:2:"):
        ingest(events_path, subs_path)


def test_missing_field_rejected(tmp_path):
    bad = event("q1", "e1", "r1", "e2", 1)
    del bad["relation"]
    with pytest.raises(IngestError, match="relation"):
        make_store(tmp_path, events=[bad], subevents=[])


def test_negative_day_rejected(tmp_path):
    with pytest.raises(IngestError, match="day_index"):
        make_store(tmp_path, events=[event("q1", "e1", "r1", "e2", -1)], subevents=[])


def test_bad_ordinal_rejected(tmp_path):
    subs = [subevent("s1", "Text.", 1, "a1", [], 0)]
    with pytest.raises(IngestError, match="ordinal"):
        make_store(tmp_path, events=[], subevents=subs)


def test_dangling_links_dropped_and_flagged(store_factory, caplog):
    subs = [subevent("s1", "Text.", 1, "a1", ["missing1"], 1)]
    with caplog.at_level("WARNING"):
        store = store_factory(events=[], subevents=subs, articles=[article("a1", 1)])
    sub = store.subevents["s1"]
    assert sub.linked_event_uids == ()
    assert sub.unlinked
    assert "missing1" in caplog.text


def test_unresolvable_annotation_dropped_with_warning(store_factory, caplog):
    subs = [subevent("s1", "Text.", 1, "a1", [], 1)]
    anns = [highlighting("img1", "a1", 9), complementary("img2", "a1", "Extra fact.")]
    with caplog.at_level("WARNING"):
        store = store_factory(
            events=[], subevents=subs, articles=[article("a1", 1)], annotations=anns
        )
    assert set(store.annotations) == {"img2"}
    assert "img1" in caplog.text
    assert store.annotations_for_article("a1")[0].image_uid == "img2"


def test_article_subevents_in_ordinal_order(store_factory):
    subs = [
        subevent("s2", "Second.", 1, "a1", [], 2),
        subevent("s1", "First.", 1, "a1", [], 1),
    ]
    store = store_factory(events=[], subevents=subs, articles=[article("a1", 1)])
    assert [s.ordinal for s in store.article_subevents("a1")] == [1, 2]
    assert store.subevent_at_ordinal("a1", 2).subevent_uid == "s2"
    assert store.subevent_at_ordinal("a1", 5) is None


def test_graph_at_groups_by_day(store_factory):
    events = [event("q1", "e1", "r1", "e2", 3), event("q2", "e3", "r1", "e4", 3), event("q3", "e1", "r1", "e2", 4)]
    store = store_factory(events=events, subevents=[])
    graph = store.graph_at(3)
    assert graph.day_index == 3
    assert {ev.event_uid for ev in graph.events} == {"q1", "q2"}
    assert all(ev.day_index == 3 for ev in graph.events)


def test_repeated_calls_identical(store_factory):
    rng = random.Random(3)
    events = [event(f"q{i}", f"e{rng.randint(0, 5)}", "r1", "e9", rng.randint(0, 9)) for i in range(50)]
    store = store_factory(events=events, subevents=[])
    window = TimeWindow(0, 10)
    first = store.events_by_subject("e1", window)
    assert all(store.events_by_subject("e1", window) == first for _ in range(5))


def test_manifest_and_vocabularies(store_factory):
    manifest = {"epoch": "2020-01-01", "entities": ["eX"], "relations": ["rX"], "note": "extra"}
    store = store_factory(
        events=[event("q1", "e1", "r1", "e2", 1), event("q2", "e1", "r2", "e2", 2)],
        subevents=[],
        manifest=manifest,
    )
    assert store.manifest.epoch == "2020-01-01"
    assert store.manifest.extra == {"note": "extra"}
    assert store.entity_vocabulary() == ["e1", "e2", "eX"]
    assert store.relation_vocabulary() == ["r1", "r2", "rX"]
    assert store.object_frequencies() == {"e1": 0, "e2": 2, "eX": 0}
    assert store.relation_frequencies() == {"r1": 1, "r2": 1, "rX": 0}


def test_dataset_digest_tracks_content(tmp_path):
    events = [event("q1", "e1", "r1", "e2", 1)]
    store_a = make_store(tmp_path / "a", events=events, subevents=[])
    store_b = make_store(tmp_path / "b", events=events, subevents=[])
    changed = make_store(tmp_path / "c", events=[event("q1", "e1", "r1", "e3", 1)], subevents=[])
    assert store_a.dataset_digest == store_b.dataset_digest
    assert store_a.dataset_digest != changed.dataset_digest


def test_duplicate_quintuple_content_with_distinct_uids_allowed(store_factory):
    events = [event("q1", "e1", "r1", "e2", 1), event("q2", "e1", "r1", "e2", 1)]
    store = store_factory(events=events, subevents=[])
    assert len(store.events) == 2


def test_load_manifest_defaults(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{}", encoding="utf-8")
    manifest = load_manifest(path)
    assert manifest.epoch == ""
    assert manifest.entities == ()


def test_window_validation():
    with pytest.raises(ValueError):
        TimeWindow(5, 4)
    window = TimeWindow.ending_at(10, 30)
    assert window.start == -20
    assert window.end_exclusive == 10
    assert window.contains(0)
    assert not window.contains(10)
