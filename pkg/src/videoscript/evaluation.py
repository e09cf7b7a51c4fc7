"""Scoring and reporting.

Choice questions score accuracy with abstentions counted wrong; grounded
questions score interval IoU on the continuous time line; knowledge pairs
score the relative gain of the post-viewing pass over the pre-viewing pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .manifest import QuestionKind

REPORT_FORMAT_VERSION = 1


class EmptyInput(ValueError):
    pass


class UnknownCategoryLabel(KeyError):
    pass


class DegenerateBaseline(ArithmeticError):
    """Pre-viewing accuracy of 100 leaves no headroom to measure a gain."""


@dataclass(frozen=True, slots=True)
class Verdict:
    question_id: str
    kind: QuestionKind
    predicted: str | None
    gold: str | None
    # Boolean for choice and open-ended questions, IoU in [0, 1] for grounded.
    correct: bool | float
    abstained: bool
    category: str | None = None
    error: str | None = None

    def __post_init__(self):
        if self.abstained and self.kind is not QuestionKind.GROUNDED_QA and self.correct:
            raise ValueError("an abstention cannot be scored correct")


@dataclass(frozen=True, slots=True)
class KnowledgeBlock:
    acc_pre: float
    acc_post: float
    # None when acc_pre = 100 leaves the gain undefined.
    delta_knowledge: float | None
    degenerate_baseline: bool = False


@dataclass(frozen=True, slots=True)
class EvalReport:
    accuracy_overall: float
    accuracy_by_category: dict[str, float]
    miou: float | None
    knowledge: KnowledgeBlock | None
    counts: dict[str, int]


def score_mcq(pairs: Sequence[tuple[str | None, str]]) -> float:
    """Accuracy percent over (predicted, gold) letter pairs; a None
    prediction is an abstention and scores as incorrect."""
    if not pairs:
        raise EmptyInput("no answers to score")
    correct = sum(1 for predicted, gold in pairs if predicted is not None and predicted == gold)
    return correct / len(pairs) * 100.0


def _merge(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    ordered = sorted(intervals)
    merged: list[tuple[float, float]] = []
    for start, end in ordered:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _measure(merged: list[tuple[float, float]]) -> float:
    return sum(end - start for start, end in merged)


def _intersection(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> float:
    total = 0.0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            total += hi - lo
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total


def interval_iou(
    pred: Sequence[tuple[float, float]], gold: Sequence[tuple[float, float]]
) -> float:
    """IoU of the two interval unions, in seconds on the real line."""
    pred_m = _merge(pred)
    gold_m = _merge(gold)
    inter = _intersection(pred_m, gold_m)
    union = _measure(pred_m) + _measure(gold_m) - inter
    if union <= 0:
        return 0.0
    return inter / union


def mean_iou(values: Sequence[float | None]) -> float:
    """Mean IoU as a percent; None entries are parse failures and count 0."""
    if not values:
        raise EmptyInput("no grounded answers to average")
    return sum(v or 0.0 for v in values) / len(values) * 100.0


def delta_knowledge(acc_pre: float, acc_post: float) -> float:
    """Relative gain of the post-viewing pass over the pre-viewing baseline:
    (acc_post - acc_pre) / (100 - acc_pre) * 100. Negative when viewing
    hurt; undefined at acc_pre = 100."""
    if not (0 <= acc_pre <= 100) or not (0 <= acc_post <= 100):
        raise ValueError("accuracies must lie in [0, 100]")
    if acc_pre == 100:
        raise DegenerateBaseline("acc_pre = 100 leaves a zero denominator")
    return (acc_post - acc_pre) / (100.0 - acc_pre) * 100.0


def _is_choice(verdict: Verdict) -> bool:
    return verdict.kind in (QuestionKind.MULTIPLE_CHOICE, QuestionKind.KNOWLEDGE_PAIR, QuestionKind.OPEN_ENDED)


def build_report(verdicts: Sequence[Verdict], category_labels: dict[str, str] | None = None) -> EvalReport:
    """Aggregate verdicts into the run report.

    category_labels maps question_id to a label; every labeled id must have
    a verdict. Accuracy covers boolean-scored questions; grounded questions
    feed the mIoU instead.
    """
    if not verdicts:
        raise EmptyInput("no verdicts")
    labels = category_labels or {}
    by_id = {v.question_id: v for v in verdicts}
    for qid in labels:
        if qid not in by_id:
            raise UnknownCategoryLabel(qid)

    scored = [v for v in verdicts if _is_choice(v)]
    accuracy_overall = (
        sum(1 for v in scored if v.correct) / len(scored) * 100.0 if scored else 0.0
    )

    by_category: dict[str, list[Verdict]] = {}
    for qid, label in labels.items():
        by_category.setdefault(label, []).append(by_id[qid])
    accuracy_by_category: dict[str, float] = {}
    for label, group in sorted(by_category.items()):
        choice = [v for v in group if _is_choice(v)]
        if choice:
            accuracy_by_category[label] = sum(1 for v in choice if v.correct) / len(choice) * 100.0

    grounded = [v for v in verdicts if v.kind is QuestionKind.GROUNDED_QA]
    miou = mean_iou([float(v.correct) for v in grounded]) if grounded else None

    pre = [v for v in verdicts if v.kind is QuestionKind.KNOWLEDGE_PAIR and v.question_id.endswith("::pre")]
    post = [v for v in verdicts if v.kind is QuestionKind.KNOWLEDGE_PAIR and v.question_id.endswith("::post")]
    knowledge: KnowledgeBlock | None = None
    if pre and post:
        acc_pre = sum(1 for v in pre if v.correct) / len(pre) * 100.0
        acc_post = sum(1 for v in post if v.correct) / len(post) * 100.0
        try:
            delta = delta_knowledge(acc_pre, acc_post)
            knowledge = KnowledgeBlock(acc_pre=acc_pre, acc_post=acc_post, delta_knowledge=delta)
        except DegenerateBaseline:
            knowledge = KnowledgeBlock(
                acc_pre=acc_pre, acc_post=acc_post, delta_knowledge=None, degenerate_baseline=True
            )

    counts = {
        "total": len(verdicts),
        "scored": len(scored),
        "grounded": len(grounded),
        "abstained": sum(1 for v in verdicts if v.abstained),
        "errors": sum(1 for v in verdicts if v.error is not None),
        "knowledge_pairs": len(pre),
    }
    return EvalReport(
        accuracy_overall=accuracy_overall,
        accuracy_by_category=accuracy_by_category,
        miou=miou,
        knowledge=knowledge,
        counts=counts,
    )


def verdict_to_record(verdict: Verdict) -> dict:
    return {
        "record": "verdict",
        "format_version": REPORT_FORMAT_VERSION,
        "question_id": verdict.question_id,
        "kind": verdict.kind.value,
        "predicted": verdict.predicted,
        "gold": verdict.gold,
        "correct": verdict.correct,
        "abstained": verdict.abstained,
        "category": verdict.category,
        "error": verdict.error,
    }


def verdict_from_record(record: dict) -> Verdict:
    return Verdict(
        question_id=record["question_id"],
        kind=QuestionKind(record["kind"]),
        predicted=record["predicted"],
        gold=record["gold"],
        correct=record["correct"],
        abstained=record["abstained"],
        category=record.get("category"),
        error=record.get("error"),
    )


def report_to_record(report: EvalReport) -> dict:
    knowledge = None
    if report.knowledge is not None:
        knowledge = {
            "acc_pre": report.knowledge.acc_pre,
            "acc_post": report.knowledge.acc_post,
            "delta_knowledge": report.knowledge.delta_knowledge,
            "degenerate_baseline": report.knowledge.degenerate_baseline,
        }
    return {
        "record": "aggregate",
        "format_version": REPORT_FORMAT_VERSION,
        "accuracy_overall": report.accuracy_overall,
        "accuracy_by_category": report.accuracy_by_category,
        "miou": report.miou,
        "knowledge": knowledge,
        "counts": report.counts,
    }


def write_verdicts_jsonl(verdicts: Sequence[Verdict], report: EvalReport, path: str | Path) -> None:
    """One verdict record per line, then the aggregate record last."""
    with open(path, "w", encoding="utf-8") as handle:
        for verdict in verdicts:
            handle.write(json.dumps(verdict_to_record(verdict), ensure_ascii=False) + "\n")
        handle.write(json.dumps(report_to_record(report), ensure_ascii=False) + "\n")


def report_table(report: EvalReport) -> str:
    """Fixed-width summary table for terminals and logs."""
    lines = []
    lines.append(f"{'overall accuracy':<24}{report.accuracy_overall:>8.2f}%")
    for label, acc in report.accuracy_by_category.items():
        lines.append(f"  {label:<22}{acc:>8.2f}%")
    if report.miou is not None:
        lines.append(f"{'mean IoU (grounded)':<24}{report.miou:>8.2f}%")
    if report.knowledge is not None:
        lines.append(f"{'accuracy pre-viewing':<24}{report.knowledge.acc_pre:>8.2f}%")
        lines.append(f"{'accuracy post-viewing':<24}{report.knowledge.acc_post:>8.2f}%")
        if report.knowledge.degenerate_baseline:
            lines.append(f"{'knowledge gain':<24}{'n/a (pre=100)':>9}")
        else:
            lines.append(f"{'knowledge gain':<24}{report.knowledge.delta_knowledge:>8.2f}%")
    counts = report.counts
    lines.append(
        f"{'questions':<24}{counts['total']:>8d}  "
        f"(abstained {counts['abstained']}, errors {counts['errors']})"
    )
    return "\n".join(lines) + "\n"
