"""Dataset manifests: videos, questions, and the timed text units produced by backends.

A manifest file is line-delimited JSON (UTF-8), one video record per line,
with an explicit ``schema_version`` field. The full record schema, including
a worked example, is documented in ``docs/formats.md``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class ManifestError(Exception):
    """Base class for manifest ingestion failures."""


class MalformedRecord(ManifestError):
    """A line could not be decoded or does not match the record schema."""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class DuplicateVideoId(ManifestError):
    def __init__(self, video_id: str):
        self.video_id = video_id
        super().__init__(f"duplicate video_id {video_id!r}")


class InvariantViolation(ManifestError):
    """A structurally valid record violates a domain invariant."""

    def __init__(self, invariant: str, subject_id: str):
        self.invariant = invariant
        self.subject_id = subject_id
        super().__init__(f"{invariant} (id={subject_id!r})")


class QuestionKind(str, Enum):
    MULTIPLE_CHOICE = "multiple_choice"
    OPEN_ENDED = "open_ended"
    GROUNDED_QA = "grounded_qa"
    KNOWLEDGE_PAIR = "knowledge_pair"


class PrePostRole(str, Enum):
    PRE = "pre"
    POST = "post"
    NONE = "none"


# Knowledge pairs share a pair id encoded in the question id:
# "<pair>::pre" and "<pair>::post".
PRE_SUFFIX = "::pre"
POST_SUFFIX = "::post"

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True, slots=True)
class SubtitleSegment:
    """One timestamped span of transcribed speech."""

    start: float
    end: float
    text: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise InvariantViolation("0 <= start < end", f"subtitle@{self.start}")


@dataclass(frozen=True, slots=True)
class ClipCaption:
    """A caption describing one fixed-length clip of the video."""

    start: float
    end: float
    text: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise InvariantViolation("0 <= start < end", f"caption@{self.start}")


@dataclass(frozen=True, slots=True)
class Question:
    question_id: str
    text: str
    kind: QuestionKind
    # Present iff kind is MULTIPLE_CHOICE or KNOWLEDGE_PAIR.
    options: tuple[tuple[str, str], ...] | None = None
    # Letter for choice questions, free text for open-ended,
    # ((start, end), ...) for grounded questions.
    ground_truth: str | tuple[tuple[float, float], ...] | None = None
    pre_post_role: PrePostRole = PrePostRole.NONE

    @property
    def pair_id(self) -> str | None:
        """Shared id of a knowledge pair, or None for other kinds."""
        if self.kind is not QuestionKind.KNOWLEDGE_PAIR:
            return None
        for suffix in (PRE_SUFFIX, POST_SUFFIX):
            if self.question_id.endswith(suffix):
                return self.question_id[: -len(suffix)]
        return None

    @property
    def option_letters(self) -> tuple[str, ...]:
        return tuple(letter for letter, _ in (self.options or ()))


@dataclass(frozen=True, slots=True)
class VideoManifest:
    video_id: str
    media_uri: str
    duration: float
    questions: tuple[Question, ...]
    category_labels: dict[str, str] = field(default_factory=dict)

    def question(self, question_id: str) -> Question:
        for q in self.questions:
            if q.question_id == question_id:
                return q
        raise KeyError(question_id)


SCHEMA_VERSION = 1

_VIDEO_FIELDS = {"schema_version", "video_id", "media_uri", "duration", "questions", "category_labels"}
_QUESTION_FIELDS = {"question_id", "text", "kind", "options", "ground_truth", "pre_post_role"}


def _validate_question(raw: dict, duration: float, video_id: str) -> Question:
    qid = raw["question_id"]
    kind = QuestionKind(raw["kind"])

    options: tuple[tuple[str, str], ...] | None = None
    if kind in (QuestionKind.MULTIPLE_CHOICE, QuestionKind.KNOWLEDGE_PAIR):
        raw_options = raw.get("options")
        if not raw_options or len(raw_options) < 2:
            raise InvariantViolation("choice question has >= 2 options", qid)
        options = tuple((str(letter), str(text)) for letter, text in raw_options)
        letters = [letter for letter, _ in options]
        if any(letter not in _LETTERS for letter in letters):
            raise InvariantViolation("option letters drawn from A..Z", qid)
        if letters != sorted(set(letters)):
            raise InvariantViolation("option letters distinct and in order", qid)
    elif raw.get("options") is not None:
        raise InvariantViolation("options present only on choice questions", qid)

    gt = raw.get("ground_truth")
    ground_truth: str | tuple[tuple[float, float], ...] | None
    if kind is QuestionKind.GROUNDED_QA:
        if not isinstance(gt, list) or not gt:
            raise InvariantViolation("grounded ground_truth is a non-empty interval list", qid)
        intervals = []
        for pair in gt:
            if not isinstance(pair, list) or len(pair) != 2:
                raise InvariantViolation("grounded ground_truth intervals are [start, end] pairs", qid)
            start, end = float(pair[0]), float(pair[1])
            if not (0 <= start < end <= duration):
                raise InvariantViolation("0 <= start < end <= duration", qid)
            intervals.append((start, end))
        ground_truth = tuple(intervals)
    else:
        if gt is not None and not isinstance(gt, str):
            raise InvariantViolation("ground_truth is a string for this kind", qid)
        ground_truth = gt
        if options is not None and gt is not None and gt not in [letter for letter, _ in options]:
            raise InvariantViolation("ground_truth letter is one of the options", qid)

    role = PrePostRole.NONE
    if kind is QuestionKind.KNOWLEDGE_PAIR:
        if qid.endswith(PRE_SUFFIX):
            role = PrePostRole.PRE
        elif qid.endswith(POST_SUFFIX):
            role = PrePostRole.POST
        else:
            raise InvariantViolation("knowledge_pair question_id ends with ::pre or ::post", qid)
    declared = raw.get("pre_post_role")
    if declared is not None and PrePostRole(declared) is not role:
        raise InvariantViolation("pre_post_role agrees with the question_id suffix", qid)

    return Question(
        question_id=qid,
        text=raw["text"],
        kind=kind,
        options=options,
        ground_truth=ground_truth,
        pre_post_role=role,
    )


def _validate_video(raw: dict, line_number: int) -> VideoManifest:
    unknown = set(raw) - _VIDEO_FIELDS
    if unknown:
        raise MalformedRecord(line_number, f"unknown fields {sorted(unknown)}")
    missing = {"schema_version", "video_id", "media_uri", "duration", "questions"} - set(raw)
    if missing:
        raise MalformedRecord(line_number, f"missing fields {sorted(missing)}")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise MalformedRecord(line_number, f"unsupported schema_version {raw['schema_version']!r}")
    if not isinstance(raw["duration"], (int, float)) or isinstance(raw["duration"], bool):
        raise MalformedRecord(line_number, "duration must be a number")
    if not isinstance(raw["questions"], list):
        raise MalformedRecord(line_number, "questions must be a list")

    video_id = str(raw["video_id"])
    duration = float(raw["duration"])
    if duration <= 0:
        raise InvariantViolation("duration > 0", video_id)

    questions = []
    seen_qids: set[str] = set()
    for q_raw in raw["questions"]:
        if not isinstance(q_raw, dict):
            raise MalformedRecord(line_number, "question records must be objects")
        unknown_q = set(q_raw) - _QUESTION_FIELDS
        if unknown_q:
            raise MalformedRecord(line_number, f"unknown question fields {sorted(unknown_q)}")
        missing_q = {"question_id", "text", "kind"} - set(q_raw)
        if missing_q:
            raise MalformedRecord(line_number, f"question missing fields {sorted(missing_q)}")
        try:
            question = _validate_question(q_raw, duration, video_id)
        except ValueError as exc:  # bad enum values
            raise MalformedRecord(line_number, str(exc)) from exc
        if question.question_id in seen_qids:
            raise InvariantViolation("question ids unique within a manifest", question.question_id)
        seen_qids.add(question.question_id)
        questions.append(question)

    labels = raw.get("category_labels") or {}
    if not isinstance(labels, dict):
        raise MalformedRecord(line_number, "category_labels must be an object")
    for qid in labels:
        if qid not in seen_qids:
            raise InvariantViolation("category label refers to an existing question_id", qid)

    # Knowledge pairs must be complete: every pre has its post and vice versa.
    pre_ids = {q.pair_id for q in questions if q.pre_post_role is PrePostRole.PRE}
    post_ids = {q.pair_id for q in questions if q.pre_post_role is PrePostRole.POST}
    for lonely in (pre_ids ^ post_ids):
        raise InvariantViolation("knowledge pairs come in (pre, post) pairs", str(lonely))

    return VideoManifest(
        video_id=video_id,
        media_uri=str(raw["media_uri"]),
        duration=duration,
        questions=tuple(questions),
        category_labels={str(k): str(v) for k, v in labels.items()},
    )


def load_manifests(path: str | Path) -> list[VideoManifest]:
    """Load and validate all video records from a line-delimited manifest file."""
    manifests: list[VideoManifest] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_number, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(raw, dict):
                raise MalformedRecord(line_number, "record must be a JSON object")
            manifest = _validate_video(raw, line_number)
            if manifest.video_id in seen:
                raise DuplicateVideoId(manifest.video_id)
            seen.add(manifest.video_id)
            manifests.append(manifest)
    return manifests


def question_to_record(question: Question) -> dict:
    record: dict = {
        "question_id": question.question_id,
        "text": question.text,
        "kind": question.kind.value,
    }
    if question.options is not None:
        record["options"] = [[letter, text] for letter, text in question.options]
    if question.ground_truth is not None:
        if isinstance(question.ground_truth, tuple):
            record["ground_truth"] = [[start, end] for start, end in question.ground_truth]
        else:
            record["ground_truth"] = question.ground_truth
    if question.pre_post_role is not PrePostRole.NONE:
        record["pre_post_role"] = question.pre_post_role.value
    return record


def manifest_to_record(manifest: VideoManifest) -> dict:
    record: dict = {
        "schema_version": SCHEMA_VERSION,
        "video_id": manifest.video_id,
        "media_uri": manifest.media_uri,
        "duration": manifest.duration,
        "questions": [question_to_record(q) for q in manifest.questions],
    }
    if manifest.category_labels:
        record["category_labels"] = dict(manifest.category_labels)
    return record


def dump_manifests(manifests: list[VideoManifest], path: str | Path) -> None:
    """Write manifests as one JSON record per line (the load_manifests format)."""
    with open(path, "w", encoding="utf-8") as handle:
        for manifest in manifests:
            handle.write(json.dumps(manifest_to_record(manifest), ensure_ascii=False) + "\n")


def normalize_subtitles(raw: list[SubtitleSegment]) -> list[SubtitleSegment]:
    """Sort segments, merge overlaps, and drop empty-text segments.

    Overlapping segments are merged into their envelope with texts joined by
    a single space; touching segments (end == next start) are kept separate.
    Total and idempotent.
    """
    kept = sorted((s for s in raw if s.text.strip()), key=lambda s: (s.start, s.end))
    merged: list[SubtitleSegment] = []
    for seg in kept:
        if merged and seg.start < merged[-1].end:
            prev = merged[-1]
            merged[-1] = SubtitleSegment(
                start=prev.start,
                end=max(prev.end, seg.end),
                text=f"{prev.text} {seg.text}",
            )
        else:
            merged.append(seg)
    return merged


def validate_caption_sequence(captions: list[ClipCaption], duration: float, *, tol: float = 1e-9) -> None:
    """Check that captions tile [0, duration] in order, without gaps or overlaps."""
    if not captions:
        return
    if abs(captions[0].start) > tol:
        raise InvariantViolation("captions start at 0", f"caption@{captions[0].start}")
    for prev, nxt in zip(captions, captions[1:]):
        if abs(prev.end - nxt.start) > tol:
            raise InvariantViolation("consecutive captions tile without gaps or overlaps", f"caption@{nxt.start}")
    if captions[-1].end > duration + tol:
        raise InvariantViolation("captions end within the video duration", f"caption@{captions[-1].start}")
