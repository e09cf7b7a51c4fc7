"""Transcript-based long-video question answering over pluggable model backends.

The pipeline turns a video into a timestamped text transcript (speech plus
clip captions), adaptively coarsens caption granularity until the transcript
fits a reasoning model's context window, asks each benchmark question over
that transcript, and scores the answers.
"""

from .budget import (
    BudgetPlan,
    CaptionSource,
    CaptionSourceFailure,
    CounterKind,
    DropTarget,
    InvalidRate,
    Outcome,
    TokenCounter,
    VocabularyLoadFailure,
    adaptive_token_reduction,
    count_tokens,
    drop_lines,
    truncate_to_budget,
)
from .cache import CacheKey, ResponseCache
from .config import ConfigError, DropSpec, RunConfig, config_from_record, derive_variant, load_config
from .evaluation import (
    DegenerateBaseline,
    EmptyInput,
    EvalReport,
    KnowledgeBlock,
    UnknownCategoryLabel,
    Verdict,
    build_report,
    delta_knowledge,
    interval_iou,
    mean_iou,
    report_table,
    report_to_record,
    score_mcq,
    verdict_from_record,
    verdict_to_record,
    write_verdicts_jsonl,
)
from .gateway import (
    BackendEndpoint,
    BackendUnavailable,
    CaptionRequest,
    Completion,
    ContextLengthExceeded,
    GatewayError,
    LLMRequest,
    MalformedResponse,
    NetworkStats,
    RequestTimeout,
    Role,
    caption,
    complete,
    complete_full,
    execute_batch,
    strip_think_markers,
    transcribe,
)
from .manifest import (
    ClipCaption,
    DuplicateVideoId,
    InvariantViolation,
    MalformedRecord,
    ManifestError,
    PrePostRole,
    Question,
    QuestionKind,
    SubtitleSegment,
    VideoManifest,
    dump_manifests,
    load_manifests,
    normalize_subtitles,
)
from .parsing import (
    EmptyPrediction,
    IntervalParseError,
    IntervalPrediction,
    InvertedInterval,
    NoAnswerFound,
    NonIntegerBound,
    ParseFailure,
    TooManyIntervals,
    parse_intervals,
    parse_letter,
)
from .pipeline import EmptyVariantList, ablation_table, prompt_overhead_for, run_ablation, run_pipeline
from .prompts import (
    MissingOptions,
    TemplateKind,
    render_clip_length,
    render_for_question,
    render_options,
    render_prompt,
    template_body,
    template_kind_for,
)
from .transcript import (
    ClipPlan,
    NegativeTime,
    NonPositiveInput,
    Transcript,
    build_transcript,
    plan_clips,
    render_caption_block,
    render_subtitle_block,
    render_timestamp,
)

__version__ = "0.1.0"

__all__ = [
    "BackendEndpoint",
    "BackendUnavailable",
    "BudgetPlan",
    "CacheKey",
    "CaptionRequest",
    "CaptionSource",
    "CaptionSourceFailure",
    "ClipCaption",
    "ClipPlan",
    "Completion",
    "ConfigError",
    "ContextLengthExceeded",
    "CounterKind",
    "DegenerateBaseline",
    "DropSpec",
    "DropTarget",
    "DuplicateVideoId",
    "EmptyInput",
    "EmptyPrediction",
    "EmptyVariantList",
    "EvalReport",
    "GatewayError",
    "IntervalParseError",
    "IntervalPrediction",
    "InvalidRate",
    "InvariantViolation",
    "InvertedInterval",
    "KnowledgeBlock",
    "LLMRequest",
    "MalformedRecord",
    "MalformedResponse",
    "ManifestError",
    "MissingOptions",
    "NegativeTime",
    "NetworkStats",
    "NoAnswerFound",
    "NonIntegerBound",
    "NonPositiveInput",
    "Outcome",
    "ParseFailure",
    "PrePostRole",
    "Question",
    "QuestionKind",
    "RequestTimeout",
    "ResponseCache",
    "Role",
    "RunConfig",
    "SubtitleSegment",
    "TemplateKind",
    "TokenCounter",
    "TooManyIntervals",
    "Transcript",
    "UnknownCategoryLabel",
    "Verdict",
    "VideoManifest",
    "VocabularyLoadFailure",
    "ablation_table",
    "adaptive_token_reduction",
    "build_report",
    "build_transcript",
    "caption",
    "complete",
    "complete_full",
    "config_from_record",
    "count_tokens",
    "delta_knowledge",
    "derive_variant",
    "drop_lines",
    "dump_manifests",
    "execute_batch",
    "interval_iou",
    "load_config",
    "load_manifests",
    "mean_iou",
    "normalize_subtitles",
    "parse_intervals",
    "parse_letter",
    "plan_clips",
    "prompt_overhead_for",
    "render_caption_block",
    "render_clip_length",
    "render_for_question",
    "render_options",
    "render_prompt",
    "render_subtitle_block",
    "render_timestamp",
    "report_table",
    "report_to_record",
    "run_ablation",
    "run_pipeline",
    "score_mcq",
    "verdict_from_record",
    "verdict_to_record",
    "strip_think_markers",
    "template_body",
    "template_kind_for",
    "transcribe",
    "truncate_to_budget",
]
