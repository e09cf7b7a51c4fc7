"""End-to-end orchestration: transcribe, budget, caption, ask, parse, score.

One transcript is built per video and shared by its questions. Videos run
sequentially; caption and question batches fan out through the gateway's
bounded executor. Every run writes a self-describing artifact directory
that a resumed run can pick up without touching the network.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
import urllib.parse
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .budget import (
    BudgetPlan,
    CaptionSource,
    CaptionSourceFailure,
    Outcome,
    adaptive_token_reduction,
    drop_lines,
    truncate_to_budget,
)
from .cache import ResponseCache
from .config import ConfigError, RunConfig, config_snapshot
from .evaluation import (
    EvalReport,
    Verdict,
    build_report,
    interval_iou,
    report_table,
    report_to_record,
    verdict_from_record,
    verdict_to_record,
    write_verdicts_jsonl,
)
from .figures import save_ablation_bars, save_budget_trace, save_category_accuracy
from .gateway import (
    CaptionRequest,
    Completion,
    GatewayError,
    LLMRequest,
    NetworkStats,
    Role,
    execute_batch,
)
from .manifest import (
    ClipCaption,
    PrePostRole,
    Question,
    QuestionKind,
    VideoManifest,
    load_manifests,
)
from .parsing import IntervalParseError, NoAnswerFound, parse_intervals, parse_letter
from .prompts import render_clip_length, render_for_question
from .transcript import Transcript, build_transcript, join_blocks, plan_clips
from . import gateway as _gateway

logger = logging.getLogger(__name__)

ARTIFACT_FORMAT_VERSION = 1


class EmptyVariantList(ValueError):
    pass


@dataclass
class RunTiming:
    transcribe_s: float = 0.0
    caption_budget_s: float = 0.0
    llm_s: float = 0.0
    score_s: float = 0.0
    total_s: float = 0.0


def _video_artifact_path(output_dir: Path, video_id: str) -> Path:
    safe = urllib.parse.quote(video_id, safe="")
    return output_dir / "videos" / f"{safe}.json"


def _write_json_atomic(path: Path, payload: dict | list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, ensure_ascii=False, indent=2)
        os.replace(tmp, path)
    except OSError:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class GatewayCaptionSource:
    """CaptionSource backed by the captioner endpoint through executeBatch."""

    def __init__(self, config: RunConfig, cache: ResponseCache, stats: NetworkStats):
        self.endpoint = config.endpoints[Role.CAPTIONER]
        self.cache = cache
        self.max_in_flight = config.max_in_flight
        self.stats = stats

    def captions(self, video: VideoManifest, clips: list[tuple[float, float]]) -> list[ClipCaption]:
        requests = [
            CaptionRequest(video_id=video.video_id, media_uri=video.media_uri, interval=clip)
            for clip in clips
        ]
        results = execute_batch(
            requests, self.endpoint, self.max_in_flight, cache=self.cache, stats=self.stats
        )
        captions: list[ClipCaption] = []
        for request in requests:
            outcome = results[request.request_id]
            if isinstance(outcome, GatewayError):
                raise CaptionSourceFailure(request.interval, str(outcome))
            assert isinstance(outcome, ClipCaption)
            captions.append(outcome)
        return captions


def _empty_transcript(clip_length: float) -> Transcript:
    return Transcript(
        subtitle_block="", caption_block="", clip_length=clip_length, full_text="", token_count=0
    )


def _widest_clip_length(config: RunConfig, duration: float) -> float:
    """The candidate clip length whose rendering is widest, so the overhead
    estimate never undercounts the {Clip Length} slot."""
    if config.fixed_clip_length is not None:
        return config.fixed_clip_length
    candidates = [config.initial_clip_length]
    while candidates[-1] < duration:
        candidates.append(candidates[-1] * 2)
    return max(candidates, key=lambda length: (len(render_clip_length(length)), length))


def prompt_overhead_for(video: VideoManifest, config: RunConfig) -> int:
    """Worst-case token cost of a prompt with empty transcript blocks."""
    shell = _empty_transcript(_widest_clip_length(config, video.duration))
    return max(
        config.counter.count(render_for_question(shell, question)) for question in video.questions
    )


def _apply_drop(transcript: Transcript, config: RunConfig) -> tuple[Transcript, dict | None]:
    if config.drop_spec is None:
        return transcript, None
    spec = config.drop_spec
    subtitle_lines = transcript.subtitle_block.split("\n") if transcript.subtitle_block else []
    caption_lines = transcript.caption_block.split("\n") if transcript.caption_block else []
    if spec.target.value == "subtitles":
        kept = drop_lines(subtitle_lines, spec.rate)
        dropped = len(subtitle_lines) - len(kept)
        subtitle_lines = kept
    else:
        kept = drop_lines(caption_lines, spec.rate)
        dropped = len(caption_lines) - len(kept)
        caption_lines = kept
    subtitle_block = "\n".join(subtitle_lines)
    caption_block = "\n".join(caption_lines)
    full_text = join_blocks(subtitle_block, caption_block)
    reduced = Transcript(
        subtitle_block=subtitle_block,
        caption_block=caption_block,
        clip_length=transcript.clip_length,
        full_text=full_text,
        token_count=config.counter.count(full_text),
    )
    note = {"target": spec.target.value, "rate": spec.rate, "dropped_lines": dropped}
    return reduced, note


def _fixed_length_plan(
    video: VideoManifest,
    subtitles,
    caption_source: CaptionSource,
    config: RunConfig,
    prompt_overhead: int,
) -> tuple[Transcript, BudgetPlan]:
    """Pinned clip length: one planning pass, then the same truncation
    fallback the adaptive loop uses if the budget is exceeded."""
    clip_length = config.fixed_clip_length
    assert clip_length is not None
    plan = plan_clips(video.duration, clip_length)
    captions = caption_source.captions(video, list(plan.clips))
    transcript = build_transcript(subtitles, captions, clip_length, config.counter, config.time_aware)
    trace = [(clip_length, transcript.token_count)]
    if transcript.token_count <= config.context_limit - prompt_overhead:
        return transcript, BudgetPlan(
            initial_clip_length=clip_length,
            final_clip_length=clip_length,
            context_limit=config.context_limit,
            final_token_count=transcript.token_count,
            trace=tuple(trace),
            outcome=Outcome.FIT,
        )
    return truncate_to_budget(
        transcript, config.counter, config.context_limit, prompt_overhead, clip_length, clip_length, trace
    )


def _score_choice(question: Question, completion: Completion, category: str | None, qid: str) -> Verdict:
    gold = question.ground_truth if isinstance(question.ground_truth, str) else None
    try:
        letter = parse_letter(completion.text, question.option_letters)
    except NoAnswerFound:
        return Verdict(
            question_id=qid,
            kind=question.kind,
            predicted=None,
            gold=gold,
            correct=False,
            abstained=True,
            category=category,
        )
    return Verdict(
        question_id=qid,
        kind=question.kind,
        predicted=letter,
        gold=gold,
        correct=(gold is not None and letter == gold),
        abstained=False,
        category=category,
    )


_TRIM_CHARS = " \t\r\n.,;:!?\"'"


def _normalize_short_answer(text: str) -> str:
    return text.strip(_TRIM_CHARS).casefold()


def _score_open_ended(question: Question, completion: Completion, category: str | None, qid: str) -> Verdict:
    answer = completion.text.strip()
    gold = question.ground_truth if isinstance(question.ground_truth, str) else None
    if not answer:
        return Verdict(
            question_id=qid,
            kind=question.kind,
            predicted=None,
            gold=gold,
            correct=False,
            abstained=True,
            category=category,
        )
    correct = gold is not None and _normalize_short_answer(answer) == _normalize_short_answer(gold)
    return Verdict(
        question_id=qid,
        kind=question.kind,
        predicted=answer,
        gold=gold,
        correct=correct,
        abstained=False,
        category=category,
    )


def _score_grounded(question: Question, completion: Completion, category: str | None, qid: str) -> Verdict:
    gold_intervals = question.ground_truth
    assert isinstance(gold_intervals, tuple)
    gold_text = "[" + ", ".join(f"[{s:g}, {e:g}]" for s, e in gold_intervals) + "]"
    try:
        prediction = parse_intervals(completion.text)
    except IntervalParseError as exc:
        return Verdict(
            question_id=qid,
            kind=question.kind,
            predicted=None,
            gold=gold_text,
            correct=0.0,
            abstained=True,
            category=category,
            error=type(exc).__name__,
        )
    iou = interval_iou(prediction.intervals, gold_intervals)
    return Verdict(
        question_id=qid,
        kind=question.kind,
        predicted=prediction.serialize(),
        gold=gold_text,
        correct=iou,
        abstained=False,
        category=category,
    )


def _score_question(question: Question, completion: Completion, category: str | None, qid: str) -> Verdict:
    if question.kind is QuestionKind.GROUNDED_QA:
        return _score_grounded(question, completion, category, qid)
    if question.kind is QuestionKind.OPEN_ENDED:
        return _score_open_ended(question, completion, category, qid)
    return _score_choice(question, completion, category, qid)


def _error_verdict(question: Question, category: str | None, qid: str, error: str) -> Verdict:
    gold: str | None
    if isinstance(question.ground_truth, tuple):
        gold = "[" + ", ".join(f"[{s:g}, {e:g}]" for s, e in question.ground_truth) + "]"
    else:
        gold = question.ground_truth
    return Verdict(
        question_id=qid,
        kind=question.kind,
        predicted=None,
        gold=gold,
        correct=0.0 if question.kind is QuestionKind.GROUNDED_QA else False,
        abstained=True,
        category=category,
        error=error,
    )


def _global_qid(video_id: str, question_id: str) -> str:
    return f"{video_id}/{question_id}"


def _process_video(
    video: VideoManifest,
    config: RunConfig,
    cache: ResponseCache,
    stats: NetworkStats,
    timing: RunTiming,
) -> tuple[list[Verdict], dict, BudgetPlan]:
    """Run one video end to end; returns verdicts, artifact record, and plan."""
    started = time.monotonic()

    mark = time.monotonic()
    subtitles = _gateway.transcribe(video.media_uri, config.endpoints[Role.ASR], cache, stats)
    timing.transcribe_s += time.monotonic() - mark

    prompt_overhead = prompt_overhead_for(video, config)
    caption_source = GatewayCaptionSource(config, cache, stats)

    mark = time.monotonic()
    if config.fixed_clip_length is not None:
        transcript, plan = _fixed_length_plan(video, subtitles, caption_source, config, prompt_overhead)
    else:
        transcript, plan = adaptive_token_reduction(
            video,
            subtitles,
            caption_source,
            config.counter,
            config.context_limit,
            initial_clip_length=config.initial_clip_length,
            prompt_overhead=prompt_overhead,
            time_aware=config.time_aware,
        )
    transcript, drop_note = _apply_drop(transcript, config)
    timing.caption_budget_s += time.monotonic() - mark

    if plan.outcome is Outcome.QUESTION_TOO_LARGE:
        logger.warning("video %s: prompt overhead exceeds the context budget", video.video_id)

    empty = _empty_transcript(transcript.clip_length)
    requests: list[LLMRequest] = []
    for question in video.questions:
        # Pre-viewing knowledge probes must answer from prior knowledge
        # alone, so their prompt carries empty transcript blocks.
        source = empty if question.pre_post_role is PrePostRole.PRE else transcript
        requests.append(
            LLMRequest(
                prompt=render_for_question(source, question),
                request_id=question.question_id,
                temperature=config.temperature,
            )
        )

    mark = time.monotonic()
    results = execute_batch(
        requests,
        config.endpoints[Role.LLM],
        config.max_in_flight,
        cache=cache,
        stats=stats,
    )
    timing.llm_s += time.monotonic() - mark

    mark = time.monotonic()
    verdicts: list[Verdict] = []
    question_records: list[dict] = []
    for question in video.questions:
        qid = _global_qid(video.video_id, question.question_id)
        category = video.category_labels.get(question.question_id)
        outcome = results[question.question_id]
        if isinstance(outcome, GatewayError):
            verdict = _error_verdict(question, category, qid, f"{type(outcome).__name__}: {outcome}")
            raw_output = None
        else:
            assert isinstance(outcome, Completion)
            verdict = _score_question(question, outcome, category, qid)
            raw_output = outcome.raw_text
        verdicts.append(verdict)
        question_records.append(
            {
                "question_id": question.question_id,
                "kind": question.kind.value,
                "raw_output": raw_output,
                "verdict": verdict_to_record(verdict),
            }
        )
    timing.score_s += time.monotonic() - mark

    assert len(verdicts) == len(video.questions)
    artifact = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "video_id": video.video_id,
        "prompt_overhead": prompt_overhead,
        "budget_plan": {
            "initial_clip_length": plan.initial_clip_length,
            "final_clip_length": plan.final_clip_length,
            "context_limit": plan.context_limit,
            "final_token_count": plan.final_token_count,
            "trace": [[length, count] for length, count in plan.trace],
            "outcome": plan.outcome.value,
            "dropped_caption_lines": plan.dropped_caption_lines,
            "dropped_subtitle_lines": plan.dropped_subtitle_lines,
        },
        "drop": drop_note,
        "transcript": {
            "subtitle_block": transcript.subtitle_block,
            "caption_block": transcript.caption_block,
            "clip_length": transcript.clip_length,
            "token_count": transcript.token_count,
        },
        "questions": question_records,
        "elapsed_s": time.monotonic() - started,
    }
    return verdicts, artifact, plan


def _load_resumable_artifact(path: Path, video: VideoManifest) -> list[Verdict] | None:
    """Verdicts from a prior run's artifact, or None when it is unusable."""
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if record.get("format_version") != ARTIFACT_FORMAT_VERSION:
        return None
    # A video that previously failed outright should be retried, not resumed.
    if record.get("error") is not None:
        return None
    stored = {entry.get("question_id") for entry in record.get("questions", [])}
    expected = {q.question_id for q in video.questions}
    if stored != expected:
        return None
    try:
        return [verdict_from_record(entry["verdict"]) for entry in record["questions"]]
    except (KeyError, ValueError):
        return None


def _budget_plan_from_artifact(path: Path) -> BudgetPlan | None:
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
        raw = record["budget_plan"]
        return BudgetPlan(
            initial_clip_length=raw["initial_clip_length"],
            final_clip_length=raw["final_clip_length"],
            context_limit=raw["context_limit"],
            final_token_count=raw["final_token_count"],
            trace=tuple((length, count) for length, count in raw["trace"]),
            outcome=Outcome(raw["outcome"]),
            dropped_caption_lines=raw.get("dropped_caption_lines", 0),
            dropped_subtitle_lines=raw.get("dropped_subtitle_lines", 0),
        )
    except (OSError, json.JSONDecodeError, KeyError, ValueError):
        return None


def run_pipeline(config: RunConfig) -> EvalReport:
    """Run every video in the manifest and write the report artifacts.

    With resume enabled, videos whose artifact file already exists are
    scored from disk and perform no backend requests at all.
    """
    total_start = time.monotonic()
    manifests = load_manifests(config.manifest_path)
    if not manifests:
        raise ConfigError(f"manifest {config.manifest_path} holds no videos")

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    cache = ResponseCache(root=Path(config.cache_root))
    stats = NetworkStats()
    timing = RunTiming()

    all_verdicts: list[Verdict] = []
    labels: dict[str, str] = {}
    plans: dict[str, BudgetPlan] = {}
    resumed = 0
    for video in manifests:
        for qid, label in video.category_labels.items():
            labels[_global_qid(video.video_id, qid)] = label
        artifact_path = _video_artifact_path(output_dir, video.video_id)
        if config.resume and artifact_path.exists():
            stored = _load_resumable_artifact(artifact_path, video)
            if stored is not None:
                all_verdicts.extend(stored)
                plan = _budget_plan_from_artifact(artifact_path)
                if plan is not None:
                    plans[video.video_id] = plan
                resumed += 1
                logger.info("video %s: resumed from artifact", video.video_id)
                continue
        try:
            verdicts, artifact, plan = _process_video(video, config, cache, stats, timing)
            plans[video.video_id] = plan
        except CaptionSourceFailure as exc:
            logger.error("video %s: captioning failed: %s", video.video_id, exc)
            verdicts = [
                _error_verdict(
                    question,
                    video.category_labels.get(question.question_id),
                    _global_qid(video.video_id, question.question_id),
                    f"CaptionSourceFailure: {exc}",
                )
                for question in video.questions
            ]
            artifact = {
                "format_version": ARTIFACT_FORMAT_VERSION,
                "video_id": video.video_id,
                "error": str(exc),
                "questions": [
                    {
                        "question_id": question.question_id,
                        "kind": question.kind.value,
                        "raw_output": None,
                        "verdict": verdict_to_record(verdict),
                    }
                    for question, verdict in zip(video.questions, verdicts)
                ],
            }
        _write_json_atomic(artifact_path, artifact)
        all_verdicts.extend(verdicts)

    report = build_report(all_verdicts, labels)
    timing.total_s = time.monotonic() - total_start

    write_verdicts_jsonl(all_verdicts, report, output_dir / "verdicts.jsonl")
    _write_json_atomic(output_dir / "report.json", report_to_record(report))
    (output_dir / "report.txt").write_text(report_table(report), encoding="utf-8")
    _write_json_atomic(output_dir / "config.json", config_snapshot(config))
    _write_json_atomic(
        output_dir / "timing.json",
        {
            "transcribe_s": timing.transcribe_s,
            "caption_budget_s": timing.caption_budget_s,
            "llm_s": timing.llm_s,
            "score_s": timing.score_s,
            "total_s": timing.total_s,
            "network_calls": stats.calls,
            "cache_hits": cache.hits,
            "cache_misses": cache.misses,
            "videos_resumed": resumed,
        },
    )
    figures_dir = output_dir / "figures"
    figures_dir.mkdir(exist_ok=True)
    save_category_accuracy(report, figures_dir / "category_accuracy.png")
    if plans:
        save_budget_trace(plans, figures_dir / "budget_trace.png")
    logger.info(
        "run complete: %d verdicts, accuracy %.2f, %d network calls",
        len(all_verdicts),
        report.accuracy_overall,
        stats.calls,
    )
    return report


_VARIANT_INVARIANT_FIELDS = ("manifest_path", "endpoints", "cache_root", "counter", "context_limit",
                             "time_aware", "max_in_flight", "temperature")


def run_ablation(variants: Sequence[RunConfig], table_dir: str | Path) -> list[tuple[str, EvalReport]]:
    """Run each variant and write a merged comparison table.

    Variants must agree on everything except clip-length and drop settings
    (and their output directories).
    """
    if not variants:
        raise EmptyVariantList("ablation needs at least one variant")
    snapshots = [config_snapshot(v) for v in variants]
    baseline = {key: snapshots[0][key] for key in _VARIANT_INVARIANT_FIELDS}
    for snapshot in snapshots[1:]:
        for key in _VARIANT_INVARIANT_FIELDS:
            if snapshot[key] != baseline[key]:
                raise ConfigError(f"ablation variants must agree on {key}")
    labels = [v.variant_label for v in variants]
    if len(set(labels)) != len(labels):
        raise ConfigError("ablation variants must have distinct labels")

    rows: list[tuple[str, EvalReport]] = []
    for variant in variants:
        logger.info("ablation variant %s", variant.variant_label)
        rows.append((variant.variant_label, run_pipeline(variant)))

    table_dir = Path(table_dir)
    table_dir.mkdir(parents=True, exist_ok=True)
    _write_json_atomic(
        table_dir / "ablation.json",
        [
            {
                "variant": label,
                "accuracy_overall": report.accuracy_overall,
                "miou": report.miou,
                "abstained": report.counts["abstained"],
                "errors": report.counts["errors"],
            }
            for label, report in rows
        ],
    )
    (table_dir / "ablation.txt").write_text(ablation_table(rows), encoding="utf-8")
    figures_dir = table_dir / "figures"
    figures_dir.mkdir(exist_ok=True)
    save_ablation_bars(
        [(label, report.accuracy_overall) for label, report in rows],
        figures_dir / "ablation_accuracy.png",
    )
    return rows


def ablation_table(rows: Sequence[tuple[str, EvalReport]]) -> str:
    width = max(len("variant"), max(len(label) for label, _ in rows))
    lines = [f"{'variant':<{width}}  {'accuracy':>8}  {'miou':>7}  {'abstained':>9}  {'errors':>6}"]
    for label, report in rows:
        miou = f"{report.miou:.2f}" if report.miou is not None else "-"
        lines.append(
            f"{label:<{width}}  {report.accuracy_overall:>8.2f}  {miou:>7}  "
            f"{report.counts['abstained']:>9d}  {report.counts['errors']:>6d}"
        )
    return "\n".join(lines) + "\n"
