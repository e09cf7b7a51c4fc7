"""Token counting and the adaptive clip-length reduction loop.

The reduction loop starts from a fine clip length and doubles it until the
fused transcript (plus prompt overhead) fits the model's context limit.
Subtitles are never coarsened; only the truncation fallback touches them,
and only after the caption block has been exhausted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Protocol

from .manifest import ClipCaption, SubtitleSegment, VideoManifest
from .transcript import Transcript, build_transcript, join_blocks, plan_clips

logger = logging.getLogger(__name__)


class InvalidRate(ValueError):
    pass


class VocabularyLoadFailure(Exception):
    def __init__(self, uri: str, reason: str):
        self.uri = uri
        super().__init__(f"{uri}: {reason}")


class CaptionSourceFailure(Exception):
    """A caption could not be produced for a clip interval."""

    def __init__(self, interval: tuple[float, float], reason: str):
        self.interval = interval
        super().__init__(f"clip [{interval[0]}, {interval[1]}]: {reason}")


class CounterKind(str, Enum):
    HEURISTIC_CHAR_QUARTER = "heuristic_char_quarter"
    VOCABULARY_BPE = "vocabulary_bpe"


# Loaded merge tables, keyed by vocabulary path.
_BPE_CACHE: dict[str, dict[tuple[str, str], int]] = {}


def _load_merges(uri: str) -> dict[tuple[str, str], int]:
    if uri in _BPE_CACHE:
        return _BPE_CACHE[uri]
    path = Path(uri)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise VocabularyLoadFailure(uri, str(exc)) from exc
    merges: dict[tuple[str, str], int] = {}
    for ln, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(" ")
        if len(parts) != 2 or not all(parts):
            raise VocabularyLoadFailure(uri, f"line {ln}: expected two space-separated symbols")
        merges[(parts[0], parts[1])] = len(merges)
    if not merges:
        raise VocabularyLoadFailure(uri, "no merge rules found")
    _BPE_CACHE[uri] = merges
    return merges


def _bpe_word_token_count(word: str, merges: dict[tuple[str, str], int]) -> int:
    symbols = list(word)
    while len(symbols) > 1:
        best_rank = None
        best_index = -1
        for i in range(len(symbols) - 1):
            rank = merges.get((symbols[i], symbols[i + 1]))
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
                best_index = i
        if best_rank is None:
            break
        symbols[best_index : best_index + 2] = [symbols[best_index] + symbols[best_index + 1]]
    return len(symbols)


@dataclass(frozen=True, slots=True)
class TokenCounter:
    """Deterministic token counter; count("") is always 0.

    The heuristic counter returns ceil(len(text) / 4). The vocabulary
    counter splits on whitespace and applies merge rules per word (file
    format in docs/formats.md).
    """

    kind: CounterKind = CounterKind.HEURISTIC_CHAR_QUARTER
    vocabulary_uri: str | None = None

    def __post_init__(self):
        if self.kind is CounterKind.VOCABULARY_BPE and not self.vocabulary_uri:
            raise VocabularyLoadFailure("<unset>", "vocabulary_uri required for the vocabulary counter")

    def count(self, text: str) -> int:
        if self.kind is CounterKind.HEURISTIC_CHAR_QUARTER:
            return -(-len(text) // 4)
        merges = _load_merges(self.vocabulary_uri)  # type: ignore[arg-type]
        return sum(_bpe_word_token_count(word, merges) for word in text.split())


def count_tokens(text: str, counter: TokenCounter) -> int:
    return counter.count(text)


class DropTarget(str, Enum):
    SUBTITLES = "subtitles"
    CAPTIONS = "captions"


def drop_lines(items: list[str], drop_rate: float) -> list[str]:
    """Deterministic uniform-stride retention keeping ceil(n * (1 - rate)) lines.

    Line i survives iff ceil((i + 1) * keep) > ceil(i * keep) with
    keep = 1 - drop_rate, evaluated exactly; order is preserved.
    """
    if not (0 <= drop_rate < 1):
        raise InvalidRate(str(drop_rate))
    keep = 1 - Fraction(drop_rate)
    return [item for i, item in enumerate(items) if math.ceil((i + 1) * keep) > math.ceil(i * keep)]


class CaptionSource(Protocol):
    """Produces one caption per planned clip, in clip order."""

    def captions(self, video: VideoManifest, clips: list[tuple[float, float]]) -> list[ClipCaption]:
        ...


class Outcome(str, Enum):
    FIT = "fit"
    FIT_AFTER_TRUNCATION = "fit_after_truncation"
    QUESTION_TOO_LARGE = "question_too_large"


@dataclass(frozen=True, slots=True)
class BudgetPlan:
    initial_clip_length: float
    final_clip_length: float
    context_limit: int
    final_token_count: int
    # (clip_length, transcript token count) per doubling iteration.
    trace: tuple[tuple[float, int], ...]
    outcome: Outcome
    dropped_caption_lines: int = 0
    dropped_subtitle_lines: int = 0


def _middle_out_removal_order(n: int) -> list[int]:
    """Indices in removal order: interior lines from the center outward,
    then the last line, then the first."""
    if n == 0:
        return []
    if n == 1:
        return [0]
    if n == 2:
        return [1, 0]
    interior = sorted(range(1, n - 1), key=lambda i: (abs(i - (n - 1) / 2), i))
    return interior + [n - 1, 0]


def _truncate_lines(lines: list[str], removals: int) -> list[str]:
    order = _middle_out_removal_order(len(lines))
    gone = set(order[:removals])
    return [line for i, line in enumerate(lines) if i not in gone]


def adaptive_token_reduction(
    video: VideoManifest,
    subtitles: list[SubtitleSegment],
    caption_source: CaptionSource,
    counter: TokenCounter,
    context_limit: int,
    initial_clip_length: float = 1.0,
    prompt_overhead: int = 0,
    time_aware: bool = True,
) -> tuple[Transcript, BudgetPlan]:
    """Coarsen the caption granularity until the transcript fits the budget.

    Clip length doubles per iteration, so the final length is always
    initial_clip_length * 2**k. Growth stops at the first length covering
    the whole video in one clip; if the budget is still exceeded there,
    transcript lines are dropped middle-out (captions first, then
    subtitles) until it fits.
    """
    budget = context_limit - prompt_overhead
    trace: list[tuple[float, int]] = []
    clip_length = initial_clip_length
    while True:
        plan = plan_clips(video.duration, clip_length)
        try:
            captions = caption_source.captions(video, list(plan.clips))
        except CaptionSourceFailure:
            raise
        transcript = build_transcript(subtitles, captions, clip_length, counter, time_aware)
        trace.append((clip_length, transcript.token_count))
        if transcript.token_count <= budget:
            return transcript, BudgetPlan(
                initial_clip_length=initial_clip_length,
                final_clip_length=clip_length,
                context_limit=context_limit,
                final_token_count=transcript.token_count,
                trace=tuple(trace),
                outcome=Outcome.FIT,
            )
        if clip_length >= video.duration:
            break
        clip_length *= 2

    return truncate_to_budget(
        transcript, counter, context_limit, prompt_overhead, initial_clip_length, clip_length, trace
    )


def truncate_to_budget(
    transcript: Transcript,
    counter: TokenCounter,
    context_limit: int,
    prompt_overhead: int,
    initial_clip_length: float,
    clip_length: float,
    trace: list[tuple[float, int]],
) -> tuple[Transcript, BudgetPlan]:
    """Last-resort line dropping once clip coarsening is exhausted.

    Caption lines go first, middle-out so the opening and closing context
    survive longest, then subtitle lines the same way. A transcript that
    still misses the budget empty means the prompt alone is too large."""
    budget = context_limit - prompt_overhead
    caption_lines = transcript.caption_block.split("\n") if transcript.caption_block else []
    subtitle_lines = transcript.subtitle_block.split("\n") if transcript.subtitle_block else []

    def fused(subs: list[str], caps: list[str]) -> str:
        return join_blocks("\n".join(subs), "\n".join(caps))

    dropped_caps = 0
    dropped_subs = 0
    # Speech lines carry more answer-relevant signal than caption lines,
    # so the caption block is sacrificed first.
    for dropped_caps in range(1, len(caption_lines) + 1):
        if counter.count(fused(subtitle_lines, _truncate_lines(caption_lines, dropped_caps))) <= budget:
            break
    caption_lines = _truncate_lines(caption_lines, dropped_caps)
    if counter.count(fused(subtitle_lines, caption_lines)) > budget:
        for dropped_subs in range(1, len(subtitle_lines) + 1):
            if counter.count(fused(_truncate_lines(subtitle_lines, dropped_subs), caption_lines)) <= budget:
                break
        subtitle_lines = _truncate_lines(subtitle_lines, dropped_subs)

    subtitle_block = "\n".join(subtitle_lines)
    caption_block = "\n".join(caption_lines)
    full_text = join_blocks(subtitle_block, caption_block)
    token_count = counter.count(full_text)
    truncated = Transcript(
        subtitle_block=subtitle_block,
        caption_block=caption_block,
        clip_length=clip_length,
        full_text=full_text,
        token_count=token_count,
    )
    outcome = Outcome.FIT_AFTER_TRUNCATION if token_count <= budget else Outcome.QUESTION_TOO_LARGE
    if outcome is Outcome.QUESTION_TOO_LARGE:
        logger.warning("prompt overhead alone exceeds the context limit (%d > %d)", prompt_overhead, context_limit)
    return truncated, BudgetPlan(
        initial_clip_length=initial_clip_length,
        final_clip_length=clip_length,
        context_limit=context_limit,
        final_token_count=token_count,
        trace=tuple(trace),
        outcome=outcome,
        dropped_caption_lines=dropped_caps,
        dropped_subtitle_lines=dropped_subs,
    )
