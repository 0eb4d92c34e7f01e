"""Image function identification and verbalization.

Each article image is classified as highlighting, complementary or
irrelevant through a multimodal chat backend. Highlighting images are
resolved to the serial number of the sub-event they emphasize; complementary
images are turned into one extra sub-event sentence. Irrelevant images are
recorded and excluded from everything downstream.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import EventcastError, KeyEventResolutionError, SanitizeError
from .gateway import ChatMessage, GenerationParams, LlmGateway

if TYPE_CHECKING:
    from .store import EventStore, NewsArticle, TextualSubEvent

logger = logging.getLogger(__name__)

# Lead-in phrases that must never open a complementary sub-event.
FORBIDDEN_LEAD_INS = (
    "In the image",
    "The image shows",
    "In the picture",
    "The image is",
    "In the photo",
)

PROVENANCE_INGESTED = "ingested"
PROVENANCE_MODEL = "model-generated"


class ImageFunction(Enum):
    HIGHLIGHTING = "highlighting"
    COMPLEMENTARY = "complementary"
    IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class ImageRef:
    """Handle on an image: raw bytes, or a locator resolvable when needed."""

    image_uid: str
    locator: str | None = None
    data: bytes | None = None

    def resolve_bytes(self) -> bytes:
        if self.data is not None:
            return self.data
        if self.locator:
            return Path(self.locator).read_bytes()
        raise ValueError(f"image {self.image_uid} has no content and no locator")


@dataclass(frozen=True)
class ImageAnnotation:
    """An image's function label plus its verbal payload.

    Exactly one payload field is populated: highlighting carries the 1-based
    ordinal of the emphasized sub-event, complementary carries a sanitized
    sentence, irrelevant carries neither.
    """

    image_uid: str
    article_uid: str
    function: ImageFunction
    key_subevent_ordinal: int | None = None
    complementary_text: str | None = None
    provenance: str = PROVENANCE_INGESTED

    def __post_init__(self) -> None:
        if self.function is ImageFunction.HIGHLIGHTING:
            if self.key_subevent_ordinal is None or self.key_subevent_ordinal < 1:
                raise ValueError(f"annotation {self.image_uid}: highlighting needs a 1-based ordinal")
            if self.complementary_text is not None:
                raise ValueError(f"annotation {self.image_uid}: highlighting must not carry text")
        elif self.function is ImageFunction.COMPLEMENTARY:
            if not self.complementary_text:
                raise ValueError(f"annotation {self.image_uid}: complementary needs a non-empty text")
            if self.key_subevent_ordinal is not None:
                raise ValueError(f"annotation {self.image_uid}: complementary must not carry an ordinal")
            if _leading_forbidden_phrase(self.complementary_text) is not None:
                raise ValueError(f"annotation {self.image_uid}: text starts with a forbidden lead-in phrase")
        else:
            if self.key_subevent_ordinal is not None or self.complementary_text is not None:
                raise ValueError(f"annotation {self.image_uid}: irrelevant carries no payload")
        if self.provenance not in (PROVENANCE_INGESTED, PROVENANCE_MODEL):
            raise ValueError(f"annotation {self.image_uid}: unknown provenance {self.provenance!r}")

    def usable(self) -> bool:
        return self.function is not ImageFunction.IRRELEVANT


def annotation_from_record(record: dict) -> ImageAnnotation:
    return ImageAnnotation(
        image_uid=record["image_uid"],
        article_uid=record["article_uid"],
        function=ImageFunction(record["function"]),
        key_subevent_ordinal=record.get("key_subevent_ordinal"),
        complementary_text=record.get("complementary_text"),
        provenance=record.get("provenance", PROVENANCE_INGESTED),
    )


def annotation_to_record(ann: ImageAnnotation) -> dict:
    record = {
        "image_uid": ann.image_uid,
        "article_uid": ann.article_uid,
        "function": ann.function.value,
        "provenance": ann.provenance,
    }
    if ann.key_subevent_ordinal is not None:
        record["key_subevent_ordinal"] = ann.key_subevent_ordinal
    if ann.complementary_text is not None:
        record["complementary_text"] = ann.complementary_text
    return record


def load_annotations(path: Path | str) -> list[ImageAnnotation]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(annotation_from_record(json.loads(line)))
    return out


def dump_annotations(annotations, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(annotation_to_record(ann), sort_keys=True) + "\n")


# -- prompt templates ---------------------------------------------------------


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("eventcast.templates").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def _article_block(article: NewsArticle) -> str:
    return f"News title: {article.title}\nNews content: {article.body}"


def render_identification_prompt(article: NewsArticle) -> str:
    return f"{load_template('identification')}\n\n{_article_block(article)}"


def render_highlighting_prompt(article: NewsArticle, subevents) -> str:
    numbered = "\n".join(f"{sub.ordinal}. {sub.text}" for sub in subevents)
    return f"{load_template('highlighting')}\n\n{_article_block(article)}\nSub-events:\n{numbered}"


def render_complementary_prompt(article: NewsArticle) -> str:
    return f"{load_template('complementary')}\n\n{_article_block(article)}"


# -- classification -----------------------------------------------------------


def parse_function_label(response: str) -> ImageFunction:
    """Map a free-form response to a label.

    The three label words are scanned case-insensitively; when several
    appear, the stricter function wins (highlighting over complementary over
    irrelevant). Anything matching no label is closed off as irrelevant.
    """
    lowered = response.lower()
    for function in (ImageFunction.HIGHLIGHTING, ImageFunction.COMPLEMENTARY, ImageFunction.IRRELEVANT):
        if function.value in lowered:
            return function
    logger.warning("response %r matches no image-function label; treating as irrelevant", response)
    return ImageFunction.IRRELEVANT


def classify_image_function(
    article: NewsArticle,
    image: ImageRef,
    gateway: LlmGateway,
    params: GenerationParams | None = None,
) -> ImageFunction:
    """One multimodal call deciding how the image relates to the article."""
    prompt = render_identification_prompt(article)
    response = gateway.complete([ChatMessage("user", prompt, (image,))], params or GenerationParams())
    return parse_function_label(response)


def locate_highlighted_subevent(
    article: NewsArticle,
    subevents,
    image: ImageRef,
    gateway: LlmGateway,
    params: GenerationParams | None = None,
) -> int:
    """Ask which numbered sub-event the image emphasizes.

    Returns the first integer in the response that is a valid ordinal of the
    presented list; a response without one means the key event cannot be
    resolved and the annotation is skipped by the caller.
    """
    subevents = list(subevents)
    if not subevents:
        raise KeyEventResolutionError(f"article {article.article_uid} has no sub-events")
    prompt = render_highlighting_prompt(article, subevents)
    response = gateway.complete([ChatMessage("user", prompt, (image,))], params or GenerationParams())
    valid = {sub.ordinal for sub in subevents}
    for token in re.findall(r"\d+", response):
        if int(token) in valid:
            return int(token)
    raise KeyEventResolutionError(f"unresolvable key event: no valid ordinal in {response!r}")


def extract_complementary_subevent(
    article: NewsArticle,
    image: ImageRef,
    gateway: LlmGateway,
    params: GenerationParams | None = None,
) -> str:
    """Extract the image's extra information as one sanitized sentence."""
    params = params or GenerationParams()
    prompt = render_complementary_prompt(article)
    response = gateway.complete([ChatMessage("user", prompt, (image,))], params)
    if not response.strip():
        raise SanitizeError(f"empty complementary response for image {image.image_uid}")
    try:
        return sanitize_complementary(response)
    except SanitizeError:
        retry = (
            f"{prompt}\n\nPrevious attempt: {response}\n"
            "Rewrite the sub-event so that it does not open with any of the forbidden phrases."
        )
        response = gateway.complete([ChatMessage("user", retry, (image,))], params)
        return sanitize_complementary(response)


def _leading_forbidden_phrase(text: str) -> str | None:
    lowered = text.lower()
    for phrase in FORBIDDEN_LEAD_INS:
        p = phrase.lower()
        if lowered.startswith(p) and (len(lowered) == len(p) or not lowered[len(p)].isalnum()):
            return phrase
    return None


def sanitize_complementary(text: str) -> str:
    """Strip forbidden lead-in phrases from the sentence start and re-capitalize.

    Idempotent: a sanitized sentence passes through unchanged. Raises
    :class:`SanitizeError` when nothing meaningful survives the stripping.
    """
    out = text.strip()
    while True:
        phrase = _leading_forbidden_phrase(out)
        if phrase is None:
            break
        out = out[len(phrase):].lstrip(" \t\r\n\v\f,;:")
    out = out.strip()
    if not any(ch.isalnum() for ch in out):
        raise SanitizeError(f"nothing left after stripping lead-in phrases from {text!r}")
    for i, ch in enumerate(out):
        if ch.isalpha():
            out = out[:i] + ch.upper() + out[i + 1:]
            break
    return out


# -- corpus annotation ---------------------------------------------------------


class AnnotationCache:
    """Image-uid keyed cache of finished annotations.

    Backed by an append-only JSONL file when a path is given, so an
    interrupted annotation run resumes where it stopped. Writes are
    serialized; reads are lock-free dict lookups.
    """

    def __init__(self, path: Path | str | None = None):
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[str, ImageAnnotation] = {}
        if self._path is not None and self._path.exists():
            for ann in load_annotations(self._path):
                self._entries[ann.image_uid] = ann

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, image_uid: str) -> ImageAnnotation | None:
        return self._entries.get(image_uid)

    def put(self, ann: ImageAnnotation) -> None:
        with self._lock:
            self._entries[ann.image_uid] = ann
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(annotation_to_record(ann), sort_keys=True) + "\n")


def annotate_corpus(
    store: EventStore,
    gateway: LlmGateway,
    cache: AnnotationCache,
    *,
    images_dir: Path | str | None = None,
    params: GenerationParams | None = None,
) -> list[ImageAnnotation]:
    """Classify every article image, cache-first, and verbalize the survivors.

    Individual image failures (gateway errors, unresolvable ordinals,
    unsanitizable text) are logged and skipped; the batch never aborts on
    one image. Irrelevant images are recorded so the cache stays warm, but
    they are excluded from downstream history construction.
    """
    annotations: list[ImageAnnotation] = []
    for article_uid in sorted(store.articles):
        article = store.articles[article_uid]
        for image_uid in article.image_uids:
            cached = cache.get(image_uid)
            if cached is not None:
                annotations.append(cached)
                continue
            locator = str(Path(images_dir) / image_uid) if images_dir is not None else None
            image = ImageRef(image_uid, locator=locator)
            try:
                annotations.append(_annotate_one(store, article, image, gateway, params))
            except EventcastError as exc:
                logger.warning("image %s skipped: %s", image_uid, exc)
                continue
            cache.put(annotations[-1])
    annotations.sort(key=lambda a: a.image_uid)
    return annotations


def _annotate_one(store, article, image, gateway, params) -> ImageAnnotation:
    function = classify_image_function(article, image, gateway, params)
    if function is ImageFunction.HIGHLIGHTING:
        subs = store.article_subevents(article.article_uid)
        ordinal = locate_highlighted_subevent(article, subs, image, gateway, params)
        return ImageAnnotation(
            image.image_uid, article.article_uid, function,
            key_subevent_ordinal=ordinal, provenance=PROVENANCE_MODEL,
        )
    if function is ImageFunction.COMPLEMENTARY:
        text = extract_complementary_subevent(article, image, gateway, params)
        return ImageAnnotation(
            image.image_uid, article.article_uid, function,
            complementary_text=text, provenance=PROVENANCE_MODEL,
        )
    return ImageAnnotation(image.image_uid, article.article_uid, function, provenance=PROVENANCE_MODEL)


def usable_annotations(annotations) -> list[ImageAnnotation]:
    """The non-irrelevant subset, the only one history construction sees."""
    return [a for a in annotations if a.usable()]
