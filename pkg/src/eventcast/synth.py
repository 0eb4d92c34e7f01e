"""Synthetic forecasting corpus with planted image support.

The generator writes a small, fully reproducible dataset in the same file
layout the ingester reads. A configurable fraction of queries get a
planted support event inside their window: the true answer is reachable
only through an image annotation, either a highlighting image pointing at
a marked sub-event or a complementary image carrying a marked sentence.
The scripted responder answers gold exactly when that marked line reaches
the right prompt block, which gives ablation runs a known direction.

Each planted query gets a unique subject and a dedicated complex-event id
for its support event, so one query's support can never leak into another
query's history.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConfigError

SUPPORT_RELATION = "RelationSupport"
KEYFACT_MARKER = "KEYFACT"
EXTRAFACT_MARKER = "EXTRAFACT"


@dataclass(frozen=True)
class SynthSpec:
    entities: int = 250
    relations: int = 12
    complex_events: int = 6
    days: int = 60
    events_per_day: int = 8
    queries: int = 200
    planted_fraction: float = 0.5
    subevents_per_article: int = 4
    noise_annotations: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.entities, self.relations, self.complex_events, self.days,
               self.events_per_day, self.queries, self.subevents_per_article) < 1:
            raise ConfigError("all synthetic sizes must be at least 1")
        if not 0.0 <= self.planted_fraction <= 1.0:
            raise ConfigError("planted_fraction must lie in [0, 1]")
        if self.days < 32:
            raise ConfigError("need at least 32 days so every query has a full window")
        if self.entities < self.queries + 5:
            raise ConfigError("need entities > queries so each query gets a distinct subject")


def _dump_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def generate_synthetic_dataset(spec: SynthSpec, out_dir: Path | str) -> dict:
    """Write events/subevents/articles/annotations/queries/manifest files.

    Returns the manifest, whose synthesis section lists the planted query
    uids split by support kind.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)

    entities = [f"Entity{i:03d}" for i in range(spec.entities)]
    relations = [f"Relation{i:02d}" for i in range(spec.relations)]
    complex_events = [f"CE{i:02d}" for i in range(spec.complex_events)]

    events: list[dict] = []
    subevents: list[dict] = []
    articles: list[dict] = []
    annotations: list[dict] = []
    queries: list[dict] = []

    def add_event(subject, relation, obj, day, ce, uid=None) -> str:
        uid = uid or f"ev{len(events):05d}"
        events.append({
            "event_uid": uid, "subject": subject, "relation": relation,
            "object": obj, "day_index": day, "complex_event": ce,
        })
        return uid

    def add_article(day, title, texts_and_links, image_count=1) -> tuple[str, list[str]]:
        """texts_and_links: (text, linked event uids) per sub-event, in order."""
        article_uid = f"art{len(articles):05d}"
        image_uids = [f"img{len(articles):05d}x{k}" for k in range(image_count)]
        articles.append({
            "article_uid": article_uid, "title": title,
            "body": " ".join(text for text, _ in texts_and_links),
            "day_index": day, "image_uids": image_uids,
        })
        for ordinal, (text, linked) in enumerate(texts_and_links, start=1):
            subevents.append({
                "subevent_uid": f"sub{len(subevents):06d}", "text": text,
                "day_index": day, "article_uid": article_uid,
                "ordinal": ordinal, "linked_event_uids": linked,
            })
        return article_uid, image_uids

    # Base events and the base articles summarizing them.
    for day in range(spec.days):
        day_events = []
        for _ in range(spec.events_per_day):
            subject, obj = rng.sample(entities, 2)
            uid = add_event(subject, rng.choice(relations), obj, day, rng.choice(complex_events))
            day_events.append((uid, events[-1]))
        for start in range(0, len(day_events), spec.subevents_per_article):
            chunk = day_events[start:start + spec.subevents_per_article]
            texts_and_links = [
                (f"{ev['subject']} reportedly moved on {ev['object']} amid ongoing developments.", [uid])
                for uid, ev in chunk
            ]
            add_article(day, f"Daily bulletin {day}-{start}", texts_and_links)

    base_article_count = len(articles)

    # Queries. Subjects are distinct entities so support never crosses queries.
    subjects = rng.sample(entities, spec.queries)
    planted_count = round(spec.queries * spec.planted_fraction)
    planted_highlighting: list[str] = []
    planted_complementary: list[str] = []

    for i in range(spec.queries):
        query_uid = f"q{i:04d}"
        subject = subjects[i]
        day = rng.randint(31, spec.days - 1)
        gold = rng.choice([e for e in entities if e != subject])
        planted = i < planted_count
        known = SUPPORT_RELATION if planted else rng.choice(relations)
        queries.append({
            "query_uid": query_uid, "subject": subject, "known": known,
            "target": "object", "day_index": day,
            "complex_event": rng.choice(complex_events), "gold": gold,
        })
        if not planted:
            continue

        support_day = rng.randint(day - 30, day - 1)
        support_ce = f"CEQ{i:04d}"
        support_uid = add_event(subject, SUPPORT_RELATION, gold, support_day, support_ce,
                                uid=f"evsup{i:04d}")
        kind = "highlighting" if i % 2 == 0 else "complementary"
        filler_texts = [
            (f"Observers described routine activity around {rng.choice(entities)} that day.", [])
            for _ in range(spec.subevents_per_article - 1)
        ]
        if kind == "highlighting":
            support_text = f"{KEYFACT_MARKER} {subject} is set to move on {gold} according to field reports."
        else:
            support_text = f"{subject} held undisclosed meetings regarding regional matters."
        texts_and_links = filler_texts + [(support_text, [support_uid])]
        rng.shuffle(texts_and_links)
        support_ordinal = 1 + next(
            idx for idx, (_, linked) in enumerate(texts_and_links) if support_uid in linked
        )
        article_uid, image_uids = add_article(
            support_day, f"Field report for {subject}", texts_and_links
        )
        if kind == "highlighting":
            annotations.append({
                "image_uid": image_uids[0], "article_uid": article_uid,
                "function": "highlighting", "key_subevent_ordinal": support_ordinal,
                "provenance": "ingested",
            })
            planted_highlighting.append(query_uid)
        else:
            annotations.append({
                "image_uid": image_uids[0], "article_uid": article_uid,
                "function": "complementary",
                "complementary_text": (
                    f"{EXTRAFACT_MARKER} imagery indicates {subject} is set to move on {gold} soon."
                ),
                "provenance": "ingested",
            })
            planted_complementary.append(query_uid)

    # Noise highlighting annotations over base articles only; their sub-events
    # carry no marker, so they perturb partitions without leaking answers.
    if base_article_count and spec.noise_annotations:
        for article in rng.sample(articles[:base_article_count],
                                  min(spec.noise_annotations, base_article_count)):
            count = sum(1 for sub in subevents if sub["article_uid"] == article["article_uid"])
            annotations.append({
                "image_uid": article["image_uids"][0] + "noise",
                "article_uid": article["article_uid"],
                "function": "highlighting",
                "key_subevent_ordinal": rng.randint(1, count),
                "provenance": "ingested",
            })

    manifest = {
        "epoch": 0,
        "entities": entities,
        "relations": relations + [SUPPORT_RELATION],
        "synthesis": {
            "spec": asdict(spec),
            "planted_query_uids": {
                "highlighting": planted_highlighting,
                "complementary": planted_complementary,
            },
            "planted_count": planted_count,
        },
    }

    _dump_jsonl(out / "events.jsonl", events)
    _dump_jsonl(out / "subevents.jsonl", subevents)
    _dump_jsonl(out / "articles.jsonl", articles)
    _dump_jsonl(out / "annotations.jsonl", annotations)
    _dump_jsonl(out / "queries.jsonl", queries)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


# -- scripted responder ---------------------------------------------------------

_QUAD_RE = re.compile(r"^\((.+?), (.+?), (.+?), (-?\d+)\)$")
_OPTION_SPLIT_RE = re.compile(r"\s(?=[A-E]\.)")


def _parse_blocks(user_text: str) -> tuple[str, list[str], list[str], dict[str, str]]:
    subject = ""
    options: dict[str, str] = {}
    key_lines: list[str] = []
    related_lines: list[str] = []
    section = None
    for line in user_text.splitlines():
        if line.startswith("[Query]:"):
            inner = line.split("(", 1)[1] if "(" in line else ""
            subject = inner.split(",", 1)[0].strip()
            section = None
        elif line.startswith("[Key Events]:"):
            section = "key"
        elif line.startswith("[Related Events]:"):
            section = "related"
        elif line.startswith("[Options]:"):
            section = None
            for chunk in _OPTION_SPLIT_RE.split(line.split(":", 1)[1].strip()):
                if len(chunk) > 2 and chunk[0] in "ABCDE" and chunk[1] == ".":
                    options[chunk[0]] = chunk[2:]
        elif section == "key":
            key_lines.append(line)
        elif section == "related":
            related_lines.append(line)
    return subject, key_lines, related_lines, options


def _option_in_line(line: str, options: dict[str, str]) -> str | None:
    # Marker sentences name the answer last, after any other entity mention,
    # so the right-most option occurrence is the planted one.
    best = None
    best_pos = -1
    for letter, text in options.items():
        pos = line.rfind(text) if text else -1
        if pos > best_pos:
            best, best_pos = letter, pos
    return best


def support_responder(messages, params) -> str:
    """Answers gold exactly when the planted support reaches the right block.

    A marked key sub-event, a support quadruple under [Key Events] for the
    query's own subject, or a marked complementary sentence under
    [Related Events] triggers the answer; anything else falls back to "A.".
    """
    user_text = messages[-1].text
    subject, key_lines, related_lines, options = _parse_blocks(user_text)
    for line in key_lines:
        if KEYFACT_MARKER in line:
            letter = _option_in_line(line, options)
            if letter:
                return f"The answer is {letter}."
        match = _QUAD_RE.match(line)
        if match and match.group(1) == subject and match.group(2) == SUPPORT_RELATION:
            for letter, text in options.items():
                if text == match.group(3):
                    return f"The answer is {letter}."
    for line in related_lines:
        if EXTRAFACT_MARKER in line:
            letter = _option_in_line(line, options)
            if letter:
                return f"The answer is {letter}."
    return "A."


def fixed_responder(text: str):
    def responder(messages, params) -> str:
        return text

    return responder
