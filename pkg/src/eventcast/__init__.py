"""Multimodal temporal event forecasting over news corpora.

The pipeline: ingest structured events and textual sub-events, classify
how article images relate to the text (highlighting, complementary,
irrelevant), build per-query histories partitioned into key, remaining and
complementary events, render forecasting prompts, query a chat backend,
and score five-way multiple-choice accuracy.
"""

from .errors import (
    ConfigError,
    EventcastError,
    GatewayError,
    IngestError,
    KeyEventResolutionError,
    OptionBuildError,
    ParseError,
    PromptBudgetError,
    RetrieverError,
    SanitizeError,
)
from .gateway import (
    BackendConfig,
    ChatMessage,
    GenerationParams,
    HttpChatBackend,
    LlmGateway,
    MockBackend,
    ReplayBackend,
    RetryPolicy,
    build_gateway,
    prompt_digest,
)
from .harness import (
    EvalReport,
    ForecastRecord,
    RunConfig,
    apply_function_mode,
    compare,
    render_comparison,
    run,
)
from .history import (
    HistoryBundle,
    HistoryItem,
    build_icl_structured,
    build_icl_unstructured,
    build_rag_structured,
    build_rag_unstructured,
    render_event,
    truncate_history,
)
from .imagefunc import (
    FORBIDDEN_LEAD_INS,
    AnnotationCache,
    ImageAnnotation,
    ImageFunction,
    ImageRef,
    annotate_corpus,
    classify_image_function,
    extract_complementary_subevent,
    locate_highlighted_subevent,
    sanitize_complementary,
)
from .prompting import (
    OptionSet,
    ParsedAnswer,
    PromptPackage,
    QuerySpec,
    build_options,
    parse_answer,
    render_forecast_prompt,
    render_query,
    template_checksum,
)
from .retrieval import Bm25Retriever, CorpusStats, ExternalRetriever, bm25_score, tokenize
from .store import (
    AtomicEvent,
    EventGraph,
    EventStore,
    Manifest,
    NewsArticle,
    TextualSubEvent,
    TimeWindow,
    ingest,
)
from .synth import SynthSpec, generate_synthetic_dataset, support_responder

__version__ = "0.1.0"

__all__ = [
    "AnnotationCache",
    "AtomicEvent",
    "BackendConfig",
    "Bm25Retriever",
    "ChatMessage",
    "ConfigError",
    "CorpusStats",
    "EvalReport",
    "EventGraph",
    "EventStore",
    "EventcastError",
    "ExternalRetriever",
    "FORBIDDEN_LEAD_INS",
    "ForecastRecord",
    "GatewayError",
    "GenerationParams",
    "HistoryBundle",
    "HistoryItem",
    "HttpChatBackend",
    "ImageAnnotation",
    "ImageFunction",
    "ImageRef",
    "IngestError",
    "KeyEventResolutionError",
    "LlmGateway",
    "Manifest",
    "MockBackend",
    "NewsArticle",
    "OptionBuildError",
    "OptionSet",
    "ParseError",
    "ParsedAnswer",
    "PromptBudgetError",
    "PromptPackage",
    "QuerySpec",
    "ReplayBackend",
    "RetrieverError",
    "RetryPolicy",
    "RunConfig",
    "SanitizeError",
    "SynthSpec",
    "TextualSubEvent",
    "TimeWindow",
    "annotate_corpus",
    "apply_function_mode",
    "bm25_score",
    "build_gateway",
    "build_icl_structured",
    "build_icl_unstructured",
    "build_options",
    "build_rag_structured",
    "build_rag_unstructured",
    "classify_image_function",
    "compare",
    "extract_complementary_subevent",
    "generate_synthetic_dataset",
    "ingest",
    "locate_highlighted_subevent",
    "parse_answer",
    "prompt_digest",
    "render_comparison",
    "render_event",
    "render_forecast_prompt",
    "render_query",
    "run",
    "sanitize_complementary",
    "support_responder",
    "template_checksum",
    "tokenize",
    "truncate_history",
]
