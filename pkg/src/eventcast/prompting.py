"""Prompt rendering, option building and answer parsing.

The system prompt is a versioned text asset rendered verbatim; the user
prompt carries four labeled blocks in fixed order: [Query], [Key Events],
[Related Events], [Options]. Empty history blocks render the literal
sentinel "None." so the prompt shape never varies with history size.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .errors import OptionBuildError, ParseError, PromptBudgetError

if TYPE_CHECKING:
    from .history import HistoryBundle
    from .store import EventStore, TimeWindow

LETTERS = "ABCDE"
TARGET_OBJECT = "object"
TARGET_RELATION = "relation"

_LETTER_RE = re.compile(r"(?<![A-Za-z0-9])([A-E])(?![A-Za-z0-9])")


@dataclass(frozen=True)
class OptionSet:
    """Five distinct answer strings labeled A-E, exactly one of them gold."""

    texts: tuple[str, ...]
    gold_letter: str

    def __post_init__(self) -> None:
        if len(self.texts) != len(LETTERS):
            raise ValueError(f"need exactly {len(LETTERS)} options, got {len(self.texts)}")
        if len(set(self.texts)) != len(self.texts):
            raise ValueError("options must be pairwise distinct")
        if self.gold_letter not in LETTERS:
            raise ValueError(f"gold letter {self.gold_letter!r} not in {LETTERS}")

    def text_for(self, letter: str) -> str:
        return self.texts[LETTERS.index(letter)]

    @property
    def gold_text(self) -> str:
        return self.text_for(self.gold_letter)

    def labeled(self) -> list[tuple[str, str]]:
        return list(zip(LETTERS, self.texts))


@dataclass(frozen=True)
class QuerySpec:
    """A forecast question: one slot of (subject, relation, object) is missing.

    For object prediction the known slot holds the relation; for relation
    prediction it holds the object.
    """

    query_uid: str
    subject: str
    known_slot: str
    target: str
    day_index: int
    complex_event: str | None = None
    options: OptionSet | None = None

    def __post_init__(self) -> None:
        if self.target not in (TARGET_OBJECT, TARGET_RELATION):
            raise ValueError(f"unknown target {self.target!r}")

    @property
    def gold(self) -> str:
        if self.options is None:
            raise ValueError(f"query {self.query_uid} has no options yet")
        return self.options.gold_letter


@dataclass(frozen=True)
class PromptPackage:
    system: str
    user: str

    def messages(self):
        from .gateway import ChatMessage

        return [ChatMessage("system", self.system), ChatMessage("user", self.user)]


@dataclass(frozen=True)
class ParsedAnswer:
    letter: str
    method: str  # letter-match | text-match


def _load_system_template() -> str:
    from .imagefunc import load_template

    return load_template("forecast_system")


def template_checksum() -> str:
    """sha256 of the system template, recorded in every run report."""
    return hashlib.sha256(_load_system_template().encode("utf-8")).hexdigest()


def render_query(query: QuerySpec, window: TimeWindow) -> str:
    """"(subject, known_slot, T)" with T relative to the window start.

    A query asked at the closing edge of a 30-day window renders T = 30.
    """
    return f"({query.subject}, {query.known_slot}, {query.day_index - window.start})"


def _block(label: str, renderings: Sequence[str]) -> list[str]:
    if not renderings:
        return [f"{label}: None."]
    return [f"{label}:", *renderings]


def render_options_line(options: OptionSet) -> str:
    return "[Options]: " + " ".join(f"{letter}.{text}" for letter, text in options.labeled())


def render_forecast_prompt(
    query: QuerySpec,
    bundle: HistoryBundle,
    window: TimeWindow,
    *,
    char_budget: int | None = None,
) -> PromptPackage:
    """Assemble the full prompt pair for one query.

    Remaining and complementary events share the [Related Events] block,
    remaining first. A budget overflow raises instead of silently
    truncating; callers decide whether to shrink the history.
    """
    if query.options is None:
        raise ValueError(f"query {query.query_uid} has no options")
    lines = [f"[Query]: {render_query(query, window)}"]
    lines += _block("[Key Events]", [item.rendering for item in bundle.key_events])
    related = [item.rendering for item in bundle.remaining_events]
    related += [item.rendering for item in bundle.complementary_events]
    lines += _block("[Related Events]", related)
    lines.append(render_options_line(query.options))
    package = PromptPackage(system=_load_system_template(), user="\n".join(lines))
    if char_budget is not None:
        size = len(package.system) + len(package.user)
        if size > char_budget:
            raise PromptBudgetError(size, char_budget)
    return package


def derive_seed(base_seed: int, query_uid: str) -> int:
    """Stable per-query seed so option shuffles never depend on query order."""
    digest = hashlib.sha256(f"{base_seed}:{query_uid}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_options(
    gold: str,
    store: EventStore,
    seed: int,
    *,
    target: str = TARGET_OBJECT,
    supplied: Sequence[str] | None = None,
) -> OptionSet:
    """Five answer options for a query whose true answer is ``gold``.

    Dataset-supplied options pass through in their given order. Otherwise
    the four distractors are the historically most frequent vocabulary
    members other than the gold (ties broken by id), and positions are
    shuffled by the seed.
    """
    if supplied is not None:
        texts = tuple(supplied)
        if gold not in texts:
            raise OptionBuildError(f"gold {gold!r} missing from supplied options")
        return OptionSet(texts, LETTERS[texts.index(gold)])
    if target == TARGET_OBJECT:
        vocab = store.entity_vocabulary()
        counts = store.object_frequencies()
    else:
        vocab = store.relation_vocabulary()
        counts = store.relation_frequencies()
    pool = sorted((v for v in vocab if v != gold), key=lambda v: (-counts.get(v, 0), v))
    if len(pool) < len(LETTERS) - 1:
        raise OptionBuildError(
            f"vocabulary has {len(pool)} candidates besides the gold; need {len(LETTERS) - 1}"
        )
    texts = [gold, *pool[: len(LETTERS) - 1]]
    random.Random(seed).shuffle(texts)
    return OptionSet(tuple(texts), LETTERS[texts.index(gold)])


def parse_answer(raw: str, options: OptionSet) -> ParsedAnswer:
    """Map a free-form response to an option letter.

    Rule 1: the first standalone uppercase letter A-E (not embedded in a
    word or number). Rule 2: the option whose full text occurs in the
    response, case-insensitively, preferring the longest such text. A
    response matching neither raises; callers score it incorrect.
    """
    match = _LETTER_RE.search(raw)
    if match:
        return ParsedAnswer(match.group(1), "letter-match")
    lowered = raw.lower()
    best: tuple[str, str] | None = None
    for letter, text in options.labeled():
        if text.lower() in lowered:
            if best is None or len(text) > len(best[1]):
                best = (letter, text)
    if best is not None:
        return ParsedAnswer(best[0], "text-match")
    raise ParseError(f"unparseable response: {raw!r}")
