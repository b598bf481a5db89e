"""Multilingual knowledge editing over a retrieval-backed fact store."""

from .config import Backends, RunConfig
from .errors import (
    ConfigurationError,
    FormatError,
    IngestError,
    MleditError,
    ParseError,
    TransportError,
    ValidationError,
)
from .evaluation import (
    CaseResult,
    EvalReport,
    MetricSet,
    ablate_kb_size,
    ablate_shots,
    evaluate_case,
    exact_match,
    measure_latency,
    run_matrix,
    token_f1,
)
from .gateway import (
    FixtureEmbedder,
    GenerationRequest,
    GenerationResponse,
    MockGenerationBackend,
    MockScript,
    RemoteClassifier,
    RemoteEmbedder,
    RemoteGenerationBackend,
    embed_texts,
    generate,
)
from .kb import (
    KnowledgeBase,
    KnowledgeEntry,
    LanguageCode,
    MzsreRecord,
    ParallelRecord,
    TranslationPair,
    deduplicate,
    ingest_mzsre,
    load_kb,
    normalize_text,
    save_kb,
    upsert_fact,
)
from .prompting import PromptMode, PromptPlan, RenderedPrompt, build_plan, parse_blocks, render
from .retrieval import (
    ExamplePair,
    RelevanceDecision,
    ScoredFact,
    ScorerConfig,
    build_training_pairs,
    retrieval_accuracy,
    retrieve,
    score_pair,
    select_examples,
)

__version__ = "0.1.0"

__all__ = [
    "Backends",
    "CaseResult",
    "ConfigurationError",
    "EvalReport",
    "ExamplePair",
    "FixtureEmbedder",
    "FormatError",
    "GenerationRequest",
    "GenerationResponse",
    "IngestError",
    "KnowledgeBase",
    "KnowledgeEntry",
    "LanguageCode",
    "MetricSet",
    "MleditError",
    "MockGenerationBackend",
    "MockScript",
    "MzsreRecord",
    "ParallelRecord",
    "ParseError",
    "PromptMode",
    "PromptPlan",
    "RelevanceDecision",
    "RemoteClassifier",
    "RemoteEmbedder",
    "RemoteGenerationBackend",
    "RenderedPrompt",
    "RunConfig",
    "ScoredFact",
    "ScorerConfig",
    "TranslationPair",
    "TransportError",
    "ValidationError",
    "ablate_kb_size",
    "ablate_shots",
    "build_plan",
    "build_training_pairs",
    "deduplicate",
    "embed_texts",
    "evaluate_case",
    "exact_match",
    "generate",
    "ingest_mzsre",
    "load_kb",
    "measure_latency",
    "normalize_text",
    "parse_blocks",
    "render",
    "retrieval_accuracy",
    "retrieve",
    "run_matrix",
    "save_kb",
    "score_pair",
    "select_examples",
    "token_f1",
    "upsert_fact",
]
