"""Ingestion and indexing of structured events, sub-events, articles and annotations.

The store is populated once from line-delimited JSON files and is immutable
afterwards, so lookups are safe under unrestricted concurrent reads. Every
index is a plain dict of pre-sorted uid lists; windowed queries filter those
lists and therefore return deterministically ordered results.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IngestError
from .imagefunc import ImageAnnotation, ImageFunction, annotation_from_record

logger = logging.getLogger(__name__)

# Opaque identifiers. Equality is case-sensitive string equality; timestamps
# are integer day indexes counted from the dataset epoch.
EntityId = str
RelationId = str
ComplexEventId = str
DayIndex = int


@dataclass(frozen=True)
class TimeWindow:
    """Half-open day range [start, end_exclusive).

    ``start`` may be negative when a query sits less than the window length
    after the epoch; no event can ever match the negative part.
    """

    start: DayIndex
    end_exclusive: DayIndex

    def __post_init__(self) -> None:
        if self.start > self.end_exclusive:
            raise ValueError(f"window start {self.start} > end {self.end_exclusive}")

    def contains(self, day: DayIndex) -> bool:
        return self.start <= day < self.end_exclusive

    @classmethod
    def ending_at(cls, day: DayIndex, days: int) -> "TimeWindow":
        """The ``days``-long history window strictly before ``day``."""
        return cls(start=day - days, end_exclusive=day)


@dataclass(frozen=True)
class AtomicEvent:
    """One structured event quintuple."""

    event_uid: str
    subject: EntityId
    relation: RelationId
    object: EntityId
    day_index: DayIndex
    complex_event: ComplexEventId


@dataclass(frozen=True)
class EventGraph:
    """All events sharing one timestamp."""

    day_index: DayIndex
    events: tuple[AtomicEvent, ...]


@dataclass(frozen=True)
class TextualSubEvent:
    """One summarized news sub-event.

    ``linked_event_uids`` ties the sentence to the structured events it
    describes; a record whose links all dangle is kept but flagged
    ``unlinked`` so that graph-driven selection skips it while text
    retrieval can still see it.
    """

    subevent_uid: str
    text: str
    day_index: DayIndex
    article_uid: str
    linked_event_uids: tuple[str, ...]
    ordinal: int
    unlinked: bool = False


@dataclass(frozen=True)
class NewsArticle:
    article_uid: str
    title: str
    body: str
    day_index: DayIndex
    image_uids: tuple[str, ...]


@dataclass
class Manifest:
    """Dataset-level header: epoch date plus the id vocabularies."""

    epoch: str = ""
    entities: tuple[EntityId, ...] = ()
    relations: tuple[RelationId, ...] = ()
    extra: dict = field(default_factory=dict)


class EventStore:
    """Keyed collections of dataset records plus lookup indexes.

    Built through :func:`ingest`; treat instances as read-only afterwards.
    """

    def __init__(self) -> None:
        self.events: dict[str, AtomicEvent] = {}
        self.subevents: dict[str, TextualSubEvent] = {}
        self.articles: dict[str, NewsArticle] = {}
        self.annotations: dict[str, ImageAnnotation] = {}
        self.manifest = Manifest()
        self.dataset_digest: str = ""
        self._by_subject: dict[EntityId, list[str]] = {}
        self._by_object: dict[EntityId, list[str]] = {}
        self._by_complex: dict[ComplexEventId, list[str]] = {}
        self._by_day: dict[DayIndex, list[str]] = {}
        self._subevents_by_event: dict[str, list[str]] = {}
        self._subevents_by_article: dict[str, list[str]] = {}
        self._annotations_by_article: dict[str, list[str]] = {}

    # -- construction -----------------------------------------------------

    def _build_indexes(self) -> None:
        for uid in sorted(self.events, key=lambda u: (self.events[u].day_index, u)):
            ev = self.events[uid]
            self._by_subject.setdefault(ev.subject, []).append(uid)
            self._by_object.setdefault(ev.object, []).append(uid)
            self._by_complex.setdefault(ev.complex_event, []).append(uid)
            self._by_day.setdefault(ev.day_index, []).append(uid)
        for uid in sorted(self.subevents, key=lambda u: (self.subevents[u].day_index, u)):
            sub = self.subevents[uid]
            for ev_uid in sub.linked_event_uids:
                self._subevents_by_event.setdefault(ev_uid, []).append(uid)
        for uid in sorted(self.subevents, key=lambda u: (self.subevents[u].ordinal, u)):
            sub = self.subevents[uid]
            self._subevents_by_article.setdefault(sub.article_uid, []).append(uid)
        for uid in sorted(self.annotations):
            ann = self.annotations[uid]
            self._annotations_by_article.setdefault(ann.article_uid, []).append(uid)

    # -- windowed retrieval -------------------------------------------------

    def events_by_subject(self, subject: EntityId, window: TimeWindow) -> list[AtomicEvent]:
        """Events with the given subject inside ``window``, by (day, uid)."""
        return self._windowed(self._by_subject.get(subject, ()), window)

    def events_by_object(self, obj: EntityId, window: TimeWindow) -> list[AtomicEvent]:
        return self._windowed(self._by_object.get(obj, ()), window)

    def events_by_complex_event(self, ce: ComplexEventId, window: TimeWindow) -> list[AtomicEvent]:
        """Events belonging to the given complex event inside ``window``."""
        return self._windowed(self._by_complex.get(ce, ()), window)

    def events_in_window(self, window: TimeWindow) -> list[AtomicEvent]:
        out: list[AtomicEvent] = []
        for day in range(max(window.start, 0), window.end_exclusive):
            out.extend(self.events[u] for u in self._by_day.get(day, ()))
        return out

    def graph_at(self, day: DayIndex) -> EventGraph:
        return EventGraph(day, tuple(self.events[u] for u in self._by_day.get(day, ())))

    def _windowed(self, uids, window: TimeWindow) -> list[AtomicEvent]:
        # index lists are pre-sorted by (day, uid), so filtering preserves order
        return [self.events[u] for u in uids if window.contains(self.events[u].day_index)]

    def subevents_for_events(self, event_uids) -> list[TextualSubEvent]:
        """Deduplicated sub-events linked to any of the events, by (day, uid)."""
        seen: set[str] = set()
        for uid in event_uids:
            seen.update(self._subevents_by_event.get(uid, ()))
        return sorted((self.subevents[u] for u in seen), key=lambda s: (s.day_index, s.subevent_uid))

    def subevents_in_window(self, window: TimeWindow) -> list[TextualSubEvent]:
        return sorted(
            (s for s in self.subevents.values() if window.contains(s.day_index)),
            key=lambda s: (s.day_index, s.subevent_uid),
        )

    # -- article / annotation access ----------------------------------------

    def article_subevents(self, article_uid: str) -> list[TextualSubEvent]:
        """An article's sub-events in ordinal order."""
        return [self.subevents[u] for u in self._subevents_by_article.get(article_uid, ())]

    def subevent_at_ordinal(self, article_uid: str, ordinal: int) -> TextualSubEvent | None:
        for sub in self.article_subevents(article_uid):
            if sub.ordinal == ordinal:
                return sub
        return None

    def annotations_for_article(self, article_uid: str) -> list[ImageAnnotation]:
        return [self.annotations[u] for u in self._annotations_by_article.get(article_uid, ())]

    def article_event_uids(self, article_uid: str) -> set[str]:
        """Uids of structured events linked from any sub-event of the article."""
        out: set[str] = set()
        for sub in self.article_subevents(article_uid):
            out.update(sub.linked_event_uids)
        return out

    # -- vocabulary ----------------------------------------------------------

    def entity_vocabulary(self) -> list[EntityId]:
        vocab = set(self.manifest.entities)
        for ev in self.events.values():
            vocab.add(ev.subject)
            vocab.add(ev.object)
        return sorted(vocab)

    def relation_vocabulary(self) -> list[RelationId]:
        vocab = set(self.manifest.relations)
        vocab.update(ev.relation for ev in self.events.values())
        return sorted(vocab)

    def object_frequencies(self) -> dict[EntityId, int]:
        """How often each entity occurs in the object slot."""
        freq: dict[EntityId, int] = {e: 0 for e in self.entity_vocabulary()}
        for ev in self.events.values():
            freq[ev.object] = freq.get(ev.object, 0) + 1
        return freq

    def relation_frequencies(self) -> dict[RelationId, int]:
        freq: dict[RelationId, int] = {r: 0 for r in self.relation_vocabulary()}
        for ev in self.events.values():
            freq[ev.relation] = freq.get(ev.relation, 0) + 1
        return freq

    def max_day(self) -> DayIndex:
        return max((ev.day_index for ev in self.events.values()), default=0)


# -- ingest -------------------------------------------------------------------

_EVENT_FIELDS = ("event_uid", "subject", "relation", "object", "day_index", "complex_event")
_SUBEVENT_FIELDS = ("subevent_uid", "text", "day_index", "article_uid", "linked_event_uids", "ordinal")
_ARTICLE_FIELDS = ("article_uid", "title", "body", "day_index", "image_uids")


def _iter_records(path: Path):
    """Yield (line_no, record) for each non-blank line of a JSONL file."""
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
                raise IngestError(f"malformed line: {exc.msg}", path=str(path), line_no=line_no) from exc
            if not isinstance(record, dict):
                raise IngestError("record is not an object", path=str(path), line_no=line_no)
            yield line_no, record


def _require(record: dict, fields, path: Path, line_no: int) -> None:
    missing = [f for f in fields if f not in record]
    if missing:
        raise IngestError(f"missing fields {missing}", path=str(path), line_no=line_no)


def _day(record: dict, path: Path, line_no: int) -> int:
    day = record["day_index"]
    if not isinstance(day, int) or isinstance(day, bool) or day < 0:
        raise IngestError(f"day_index must be a non-negative integer, got {day!r}", path=str(path), line_no=line_no)
    return day


def _nonempty(record: dict, fld: str, path: Path, line_no: int) -> str:
    value = record[fld]
    if not isinstance(value, str) or not value:
        raise IngestError(f"field {fld!r} must be a non-empty string, got {value!r}", path=str(path), line_no=line_no)
    return value


def load_manifest(path: Path | str) -> Manifest:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {"epoch", "entities", "relations"}
    return Manifest(
        epoch=raw.get("epoch", ""),
        entities=tuple(raw.get("entities", ())),
        relations=tuple(raw.get("relations", ())),
        extra={k: v for k, v in raw.items() if k not in known},
    )


def ingest(
    structured_path: Path | str,
    unstructured_path: Path | str,
    annotations_path: Path | str | None = None,
    *,
    articles_path: Path | str | None = None,
    manifest_path: Path | str | None = None,
) -> EventStore:
    """Load dataset files into an indexed, immutable store.

    Malformed lines and duplicate uids raise :class:`IngestError` naming the
    file, line and uid. Sub-events whose event links all dangle are retained
    but flagged unlinked; annotations that do not resolve against their
    article are dropped with a warning rather than aborting the ingest.
    """
    store = EventStore()
    digest = hashlib.sha256()

    structured_path = Path(structured_path)
    for line_no, record in _iter_records(structured_path):
        _require(record, _EVENT_FIELDS, structured_path, line_no)
        uid = _nonempty(record, "event_uid", structured_path, line_no)
        if uid in store.events:
            raise IngestError(f"duplicate event_uid {uid!r}", path=str(structured_path), line_no=line_no)
        store.events[uid] = AtomicEvent(
            event_uid=uid,
            subject=_nonempty(record, "subject", structured_path, line_no),
            relation=_nonempty(record, "relation", structured_path, line_no),
            object=_nonempty(record, "object", structured_path, line_no),
            day_index=_day(record, structured_path, line_no),
            complex_event=_nonempty(record, "complex_event", structured_path, line_no),
        )

    if articles_path is not None:
        articles_path = Path(articles_path)
        for line_no, record in _iter_records(articles_path):
            _require(record, _ARTICLE_FIELDS, articles_path, line_no)
            uid = _nonempty(record, "article_uid", articles_path, line_no)
            if uid in store.articles:
                raise IngestError(f"duplicate article_uid {uid!r}", path=str(articles_path), line_no=line_no)
            store.articles[uid] = NewsArticle(
                article_uid=uid,
                title=record["title"],
                body=record["body"],
                day_index=_day(record, articles_path, line_no),
                image_uids=tuple(record["image_uids"]),
            )

    unstructured_path = Path(unstructured_path)
    for line_no, record in _iter_records(unstructured_path):
        _require(record, _SUBEVENT_FIELDS, unstructured_path, line_no)
        uid = _nonempty(record, "subevent_uid", unstructured_path, line_no)
        if uid in store.subevents:
            raise IngestError(f"duplicate subevent_uid {uid!r}", path=str(unstructured_path), line_no=line_no)
        ordinal = record["ordinal"]
        if not isinstance(ordinal, int) or ordinal < 1:
            raise IngestError(f"ordinal must be >= 1, got {ordinal!r}", path=str(unstructured_path), line_no=line_no)
        links = tuple(record["linked_event_uids"])
        resolved = tuple(u for u in links if u in store.events)
        if len(resolved) < len(links):
            dangling = sorted(set(links) - set(resolved))
            logger.warning("sub-event %s: dropping dangling event links %s", uid, dangling)
        store.subevents[uid] = TextualSubEvent(
            subevent_uid=uid,
            text=_nonempty(record, "text", unstructured_path, line_no),
            day_index=_day(record, unstructured_path, line_no),
            article_uid=_nonempty(record, "article_uid", unstructured_path, line_no),
            linked_event_uids=resolved,
            ordinal=ordinal,
            unlinked=not resolved,
        )

    if annotations_path is not None:
        annotations_path = Path(annotations_path)
        for line_no, record in _iter_records(annotations_path):
            try:
                ann = annotation_from_record(record)
            except (KeyError, ValueError) as exc:
                raise IngestError(str(exc), path=str(annotations_path), line_no=line_no) from exc
            if ann.image_uid in store.annotations:
                raise IngestError(
                    f"duplicate image_uid {ann.image_uid!r}", path=str(annotations_path), line_no=line_no
                )
            store.annotations[ann.image_uid] = ann

    for path in (structured_path, articles_path, unstructured_path, annotations_path, manifest_path):
        if path is not None:
            digest.update(Path(path).name.encode())
            digest.update(Path(path).read_bytes())
    store.dataset_digest = digest.hexdigest()

    if manifest_path is not None:
        store.manifest = load_manifest(manifest_path)

    store._build_indexes()
    _check_references(store)
    return store


def _check_references(store: EventStore) -> None:
    """Flag (never reject) records whose cross-references do not resolve."""
    dropped: list[str] = []
    for ann in list(store.annotations.values()):
        ok = True
        if store.articles and ann.article_uid not in store.articles:
            ok = False
        if ann.function is ImageFunction.HIGHLIGHTING:
            if store.subevent_at_ordinal(ann.article_uid, ann.key_subevent_ordinal) is None:
                ok = False
        if not ok:
            logger.warning("annotation %s does not resolve against its article; dropping", ann.image_uid)
            dropped.append(ann.image_uid)
    for uid in dropped:
        del store.annotations[uid]
    if dropped:
        store._annotations_by_article.clear()
        for uid in sorted(store.annotations):
            ann = store.annotations[uid]
            store._annotations_by_article.setdefault(ann.article_uid, []).append(uid)
