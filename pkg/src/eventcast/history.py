"""History construction for forecast queries.

Four regimes, the cross of {in-context, retrieval-augmented} x
{structured quadruples, textual sub-events}. Every builder returns a
HistoryBundle partitioned into key events (emphasized by a highlighting
image), remaining events, and complementary events (extra sub-events
verbalized from images), each sorted ascending in time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

from .imagefunc import ImageAnnotation, ImageFunction
from .store import AtomicEvent, EventStore, TextualSubEvent, TimeWindow

if TYPE_CHECKING:
    from .prompting import QuerySpec

DEFAULT_HISTORY_CAP = 50
DEFAULT_COMPLEMENTARY_CAP = 10


@dataclass(frozen=True)
class HistoryItem:
    """One prompt-ready line of history: a quadruple rendering or a sub-event sentence."""

    rendering: str
    day_index: int
    source_uid: str

    def __post_init__(self) -> None:
        if not self.rendering:
            raise ValueError("history item rendering must be non-empty")


@dataclass(frozen=True)
class HistoryBundle:
    key_events: tuple[HistoryItem, ...]
    remaining_events: tuple[HistoryItem, ...]
    complementary_events: tuple[HistoryItem, ...]

    def __len__(self) -> int:
        return len(self.key_events) + len(self.remaining_events) + len(self.complementary_events)


def render_event(event: AtomicEvent, window: TimeWindow) -> str:
    """Quadruple rendering with time relative to the window start."""
    return f"({event.subject}, {event.relation}, {event.object}, {event.day_index - window.start})"


def _event_item(event: AtomicEvent, window: TimeWindow) -> HistoryItem:
    return HistoryItem(render_event(event, window), event.day_index, event.event_uid)


def _subevent_item(sub: TextualSubEvent) -> HistoryItem:
    return HistoryItem(sub.text, sub.day_index, sub.subevent_uid)


def _sort_key(item: HistoryItem) -> tuple[int, str]:
    return (item.day_index, item.source_uid)


def truncate_history(items: Sequence[HistoryItem], cap: int = DEFAULT_HISTORY_CAP) -> list[HistoryItem]:
    """Keep the cap most-recent items, returned in ascending time order.

    Same-day items fall back to uid order, so repeated runs drop the same
    ones.
    """
    if cap <= 0:
        return []
    ordered = sorted(items, key=_sort_key)
    return ordered[-cap:] if len(ordered) > cap else ordered


def _capped_partition(
    keys: list[HistoryItem],
    remaining: list[HistoryItem],
    complementary: list[HistoryItem],
    cap: int,
    comp_cap: int,
) -> HistoryBundle:
    """Joint cap over key+remaining, keys never evicted before remaining."""
    keys = truncate_history(keys, cap)
    remaining = truncate_history(remaining, cap - len(keys))
    complementary = truncate_history(complementary, comp_cap)
    return HistoryBundle(tuple(keys), tuple(remaining), tuple(complementary))


# -- annotation-driven partition helpers ---------------------------------------


def highlighted_event_uids(store: EventStore, annotations: Iterable[ImageAnnotation]) -> set[str]:
    """Event uids linked from the sub-events that highlighting images point at."""
    uids: set[str] = set()
    for ann in annotations:
        if ann.function is not ImageFunction.HIGHLIGHTING:
            continue
        sub = store.subevent_at_ordinal(ann.article_uid, ann.key_subevent_ordinal)
        if sub is not None:
            uids.update(sub.linked_event_uids)
    return uids


def highlighted_subevent_uids(store: EventStore, annotations: Iterable[ImageAnnotation]) -> set[str]:
    """Sub-event uids that highlighting images point at directly."""
    uids: set[str] = set()
    for ann in annotations:
        if ann.function is not ImageFunction.HIGHLIGHTING:
            continue
        sub = store.subevent_at_ordinal(ann.article_uid, ann.key_subevent_ordinal)
        if sub is not None:
            uids.add(sub.subevent_uid)
    return uids


def complementary_items(
    store: EventStore,
    annotations: Iterable[ImageAnnotation],
    candidate_event_uids: set[str],
    window: TimeWindow,
) -> list[HistoryItem]:
    """Complementary sentences whose source article touches the candidate set.

    An annotation is in play when its article links to at least one
    candidate event and the article itself falls inside the window; the
    sentence is stamped with the article's day.
    """
    items = []
    for ann in annotations:
        if ann.function is not ImageFunction.COMPLEMENTARY:
            continue
        article = store.articles.get(ann.article_uid)
        if article is None or not window.contains(article.day_index):
            continue
        if store.article_event_uids(ann.article_uid) & candidate_event_uids:
            items.append(HistoryItem(ann.complementary_text, article.day_index, ann.image_uid))
    return items


def _split_events(
    store: EventStore,
    candidates: list[AtomicEvent],
    annotations: Iterable[ImageAnnotation],
    window: TimeWindow,
) -> tuple[list[HistoryItem], list[HistoryItem], list[HistoryItem]]:
    annotations = list(annotations)
    key_uids = highlighted_event_uids(store, annotations)
    keys = [_event_item(ev, window) for ev in candidates if ev.event_uid in key_uids]
    rest = [_event_item(ev, window) for ev in candidates if ev.event_uid not in key_uids]
    comp = complementary_items(store, annotations, {ev.event_uid for ev in candidates}, window)
    return keys, rest, comp


def _split_subevents(
    store: EventStore,
    subevents: list[TextualSubEvent],
    candidate_event_uids: set[str],
    annotations: Iterable[ImageAnnotation],
    window: TimeWindow,
) -> tuple[list[HistoryItem], list[HistoryItem], list[HistoryItem]]:
    annotations = list(annotations)
    key_uids = highlighted_subevent_uids(store, annotations)
    keys = [_subevent_item(s) for s in subevents if s.subevent_uid in key_uids]
    rest = [_subevent_item(s) for s in subevents if s.subevent_uid not in key_uids]
    comp = complementary_items(store, annotations, candidate_event_uids, window)
    return keys, rest, comp


# -- candidate selection --------------------------------------------------------


def _icl_candidate_events(store: EventStore, query, window: TimeWindow) -> list[AtomicEvent]:
    """Union of same-subject and same-complex-event history, deduplicated."""
    seen: dict[str, AtomicEvent] = {}
    for ev in store.events_by_subject(query.subject, window):
        seen[ev.event_uid] = ev
    if query.complex_event is not None:
        for ev in store.events_by_complex_event(query.complex_event, window):
            seen[ev.event_uid] = ev
    return sorted(seen.values(), key=lambda e: (e.day_index, e.event_uid))


def _related_entity_events(store: EventStore, query, window: TimeWindow) -> list[AtomicEvent]:
    """One-hop related-entity history around the query subject."""
    related = {query.subject}
    for ev in store.events_in_window(window):
        if ev.subject == query.subject:
            related.add(ev.object)
        elif ev.object == query.subject:
            related.add(ev.subject)
    return [
        ev
        for ev in store.events_in_window(window)
        if ev.subject in related or ev.object in related
    ]


def _window_subevents_for(store: EventStore, events: list[AtomicEvent], window: TimeWindow) -> list[TextualSubEvent]:
    subs = store.subevents_for_events([ev.event_uid for ev in events])
    return [s for s in subs if window.contains(s.day_index)]


# -- the four builders ----------------------------------------------------------


def build_icl_structured(
    store: EventStore,
    query: QuerySpec,
    annotations: Iterable[ImageAnnotation],
    window: TimeWindow,
    *,
    cap: int = DEFAULT_HISTORY_CAP,
    comp_cap: int = DEFAULT_COMPLEMENTARY_CAP,
) -> HistoryBundle:
    candidates = _icl_candidate_events(store, query, window)
    keys, rest, comp = _split_events(store, candidates, annotations, window)
    return _capped_partition(keys, rest, comp, cap, comp_cap)


def build_icl_unstructured(
    store: EventStore,
    query: QuerySpec,
    annotations: Iterable[ImageAnnotation],
    window: TimeWindow,
    *,
    cap: int = DEFAULT_HISTORY_CAP,
    comp_cap: int = DEFAULT_COMPLEMENTARY_CAP,
) -> HistoryBundle:
    candidates = _icl_candidate_events(store, query, window)
    subevents = _window_subevents_for(store, candidates, window)
    keys, rest, comp = _split_subevents(
        store, subevents, {ev.event_uid for ev in candidates}, annotations, window
    )
    return _capped_partition(keys, rest, comp, cap, comp_cap)


def build_rag_structured(
    store: EventStore,
    query: QuerySpec,
    annotations: Iterable[ImageAnnotation],
    window: TimeWindow,
    *,
    cap: int = DEFAULT_HISTORY_CAP,
    comp_cap: int = DEFAULT_COMPLEMENTARY_CAP,
) -> HistoryBundle:
    candidates = _related_entity_events(store, query, window)
    keys, rest, comp = _split_events(store, candidates, annotations, window)
    return _capped_partition(keys, rest, comp, cap, comp_cap)


def build_rag_unstructured(
    store: EventStore,
    query: QuerySpec,
    retriever,
    window: TimeWindow,
    annotations: Iterable[ImageAnnotation] = (),
    *,
    top_k: int = DEFAULT_HISTORY_CAP,
    comp_cap: int = DEFAULT_COMPLEMENTARY_CAP,
) -> HistoryBundle:
    """Retrieve the top-k windowed sub-events for the rendered query text.

    Score ties prefer the more recent sub-event, then the smaller uid.
    """
    from .prompting import render_query

    corpus = store.subevents_in_window(window)
    if not corpus:
        return HistoryBundle((), (), ())
    scores = retriever.score(render_query(query, window), [(s.subevent_uid, s.text) for s in corpus])
    ranked = sorted(corpus, key=lambda s: (-scores[s.subevent_uid], -s.day_index, s.subevent_uid))
    selected = ranked[:top_k]
    candidate_event_uids = {uid for s in selected for uid in s.linked_event_uids}
    keys, rest, comp = _split_subevents(store, selected, candidate_event_uids, annotations, window)
    keys.sort(key=_sort_key)
    rest.sort(key=_sort_key)
    comp = truncate_history(comp, comp_cap)
    return HistoryBundle(tuple(keys), tuple(rest), tuple(comp))
