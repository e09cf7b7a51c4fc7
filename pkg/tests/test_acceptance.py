"""Acceptance gate: ten end-to-end checks, one test per criterion.

Each test prints a [PASS]/[FAIL] line (visible with -s or on failure) and
asserts, so `pytest -v tests/test_acceptance.py` gives one verdict per
criterion.
"""

import dataclasses
import json
import math
import random
import re
import time
from pathlib import Path

import numpy as np
import pytest

from videoscript import (
    BackendEndpoint,
    ClipCaption,
    DegenerateBaseline,
    IntervalParseError,
    InvertedInterval,
    LLMRequest,
    NonIntegerBound,
    Outcome,
    ResponseCache,
    Role,
    RunConfig,
    SubtitleSegment,
    TemplateKind,
    TokenCounter,
    TooManyIntervals,
    adaptive_token_reduction,
    delta_knowledge,
    derive_variant,
    dump_manifests,
    execute_batch,
    interval_iou,
    parse_intervals,
    render_caption_block,
    run_ablation,
    run_pipeline,
    template_body,
)
from videoscript import mocks
from videoscript.mocks import CountingProfile, InstrumentedProfile, scripted_asr

from conftest import ConstantCaptionSource, make_mcq, make_video

GOLDEN_DIR = Path(__file__).parent / "golden"


def _verdict(number: int, name: str, ok: bool, detail: str = "") -> None:
    tag = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{tag}] criterion {number}: {name}{suffix}")
    assert ok, f"criterion {number}: {name}{suffix}"


# --- criteria 1 and 2: the reduction loop against a brute-force oracle ----------


_CAPTION_TEXT = "a scene unfolds steadily."  # constant per-caption cost
_LINE_PREFIX_CHARS = 23  # "HH:MM:SS --> HH:MM:SS: " below 100 hours


def _random_subtitles(rng: random.Random, duration: int) -> list[SubtitleSegment]:
    if duration < 8:
        return []
    segments = []
    cursor = 0
    for _ in range(rng.randint(0, 3)):
        if cursor + 2 > duration:
            break
        start = rng.randint(cursor, min(cursor + duration // 3, duration - 2))
        end = rng.randint(start + 1, min(start + duration // 2 + 1, duration))
        segments.append(SubtitleSegment(float(start), float(end), "x" * rng.randint(10, 80)))
        cursor = end
    return segments


def _oracle_tokens(subtitles: list[SubtitleSegment], n_clips: int) -> int:
    cap_line = _LINE_PREFIX_CHARS + len(_CAPTION_TEXT)
    cap_chars = n_clips * cap_line + (n_clips - 1)
    if subtitles:
        sub_chars = sum(_LINE_PREFIX_CHARS + len(s.text) for s in subtitles) + len(subtitles) - 1
        total = sub_chars + 1 + cap_chars
    else:
        total = cap_chars
    return -(-total // 4)


def test_criterion_01_and_02_reduction_conformance(counter):
    rng = random.Random(20250819)
    cases = 1200
    mismatches = []
    budget_violations = []
    started = time.monotonic()
    for index in range(cases):
        duration = max(1, int(round(math.exp(rng.uniform(0.0, math.log(14_400))))))
        initial = rng.choice((1, 2))
        context_limit = rng.randint(50, 2000)
        overhead = rng.randint(0, 30)
        budget = context_limit - overhead
        subtitles = _random_subtitles(rng, duration)

        # Brute force: scan candidate lengths L0 * 2^k in order; token cost
        # is monotone non-increasing in L, so the first fit is minimal.
        expected_fit = None
        length = initial
        while True:
            n_clips = -(-duration // length)
            if _oracle_tokens(subtitles, n_clips) <= budget:
                expected_fit = length
                break
            if length >= duration:
                break
            length *= 2

        video = make_video(f"case{index}", float(duration), (make_mcq("q1"),))
        transcript, plan = adaptive_token_reduction(
            video,
            subtitles,
            ConstantCaptionSource(_CAPTION_TEXT),
            counter,
            context_limit,
            initial_clip_length=float(initial),
            prompt_overhead=overhead,
        )
        if expected_fit is None:
            if plan.outcome is Outcome.FIT:
                mismatches.append((index, "unexpected fit", plan.final_clip_length))
        else:
            if plan.outcome is not Outcome.FIT or plan.final_clip_length != float(expected_fit):
                mismatches.append((index, expected_fit, plan.final_clip_length, plan.outcome))
        if plan.outcome is Outcome.FIT and plan.final_token_count + overhead > context_limit:
            budget_violations.append((index, plan.final_token_count, overhead, context_limit))
        if plan.outcome is not Outcome.QUESTION_TOO_LARGE:
            if transcript.token_count + overhead > context_limit:
                budget_violations.append((index, "post-truncation", transcript.token_count))
    elapsed = time.monotonic() - started

    _verdict(
        1,
        "reduction loop returns the minimal fitting power-of-two clip length",
        not mismatches and elapsed < 10.0,
        f"{cases} cases, {len(mismatches)} mismatches, {elapsed:.1f}s",
    )
    _verdict(
        2,
        "every fit respects final_token_count + prompt_overhead <= context_limit",
        not budget_violations,
        f"{len(budget_violations)} violations",
    )


# --- criterion 3: interval overlap against a millisecond grid --------------------


def test_criterion_03_miou_oracle_equivalence():
    assert interval_iou([(5.0, 7.0)], [(5.0, 7.0)]) == 1.0
    assert interval_iou([(0.0, 2.0)], [(1.0, 3.0)]) == 1 / 3
    assert interval_iou([(0.0, 1.0)], [(0.0, 5.0)]) == 0.2

    rng = random.Random(600)
    pred_mask = np.zeros(600_000, dtype=bool)
    gold_mask = np.zeros(600_000, dtype=bool)
    worst = 0.0
    cases = 1000
    for _ in range(cases):
        pred_mask[:] = False
        gold_mask[:] = False
        pred = []
        gold = []
        for out, mask in ((pred, pred_mask), (gold, gold_mask)):
            for _ in range(rng.randint(1, 5)):
                start = rng.randint(0, 599_000)
                end = rng.randint(start + 1, 600_000)
                out.append((start / 1000.0, end / 1000.0))
                mask[start:end] = True
        union = np.count_nonzero(pred_mask | gold_mask)
        grid = np.count_nonzero(pred_mask & gold_mask) / union if union else 0.0
        worst = max(worst, abs(interval_iou(pred, gold) - grid))
    _verdict(
        3,
        "analytic interval IoU matches the 1 ms grid oracle within 1e-3",
        worst < 1e-3,
        f"{cases} cases, worst |error| = {worst:.2e}",
    )


# --- criterion 4: knowledge gain formula ------------------------------------------


def test_criterion_04_knowledge_gain_formula():
    checks = [
        delta_knowledge(0.0, 0.0) == 0.0,
        delta_knowledge(50.0, 50.0) == 0.0,
        delta_knowledge(0.0, 100.0) == 100.0,
        abs(delta_knowledge(50.0, 75.0) - 50.0) <= 1e-9,
    ]
    try:
        delta_knowledge(100.0, 100.0)
        checks.append(False)
    except DegenerateBaseline:
        checks.append(True)
    _verdict(4, "knowledge gain reproduces its defining equation and anchors", all(checks))


# --- criterion 5: prompt templates ---------------------------------------------------


def test_criterion_05_prompt_fidelity():
    failures = []
    sentinels = {
        "{Subtitles}": "<<SUB>>",
        "{Captions}": "<<CAP>>",
        "{Clip Length}": "<<LEN>>",
        "{Question}": "<<Q>>",
        "{Options}": "<<OPT>>",
    }
    for kind in TemplateKind:
        golden = (GOLDEN_DIR / f"{kind.value}.txt").read_text(encoding="utf-8")
        body = template_body(kind)
        if body != golden:
            failures.append(f"{kind.value}: template differs from the golden copy")
        substituted = body
        for slot, marker in sentinels.items():
            substituted = substituted.replace(slot, marker)
        restored = substituted
        for slot, marker in sentinels.items():
            restored = restored.replace(marker, slot)
        if restored != golden:
            failures.append(f"{kind.value}: non-slot bytes changed under substitution")
    mcq = template_body(TemplateKind.MULTIPLE_CHOICE)
    if "Respond with only the letter (A, B, C, D, E, etc.)" not in mcq:
        failures.append("letter instruction line missing")
    grounded = template_body(TemplateKind.GROUNDED_QA)
    if "Example 2: [[200, 207], [209, 213], [214, 220]]" not in grounded:
        failures.append("grounded example 2 missing")
    _verdict(5, "templates match golden copies byte-for-byte outside slots", not failures, "; ".join(failures))


# --- criterion 6: time-aware line format ---------------------------------------------


def test_criterion_06_time_aware_rendering():
    block = render_caption_block([ClipCaption(24.0, 32.0, "a person opens a door")], time_aware=True)
    ok = block == "00:00:24 --> 00:00:32: a person opens a door"
    ok = ok and block.startswith("00:00:24 --> 00:00:32: ")
    _verdict(6, "caption lines use the exact timestamped prefix format", ok, repr(block))


# --- criterion 7: the interval grammar under fuzzing -----------------------------------


_GRAMMAR = re.compile(r"\s*\[\s*\[\s*\d+\s*,\s*\d+\s*\]\s*(,\s*\[\s*\d+\s*,\s*\d+\s*\]\s*)*\]\s*")


def test_criterion_07_interval_parser_fuzz():
    assert parse_intervals("[[5, 7]]").intervals == ((5, 7),)
    assert parse_intervals("[[200, 207], [209, 213], [214, 220]]").intervals == (
        (200, 207), (209, 213), (214, 220),
    )
    with pytest.raises(TooManyIntervals):
        parse_intervals("[[1, 2], [3, 4], [5, 6], [7, 8], [9, 10], [11, 12]]")
    with pytest.raises(InvertedInterval):
        parse_intervals("[[7, 5]]")
    with pytest.raises(NonIntegerBound):
        parse_intervals("[[1.5, 2]]")

    rng = random.Random(424242)
    seeds = [
        "[[5, 7]]",
        "[[200, 207], [209, 213], [214, 220]]",
        "[[0, 1], [1, 2], [2, 3], [3, 4], [4, 5]]",
        "[]",
    ]
    alphabet = ".,[]0123456789 ab-"
    panics = 0
    bad_accepts = 0
    for _ in range(10_000):
        chars = list(rng.choice(seeds))
        for _ in range(rng.randint(1, 4)):
            op = rng.randrange(3)
            pos = rng.randrange(len(chars) + 1) if chars else 0
            if op == 0 and chars:
                del chars[min(pos, len(chars) - 1)]
            elif op == 1:
                chars.insert(pos, rng.choice(alphabet))
            elif chars:
                chars[min(pos, len(chars) - 1)] = rng.choice(alphabet)
        candidate = "".join(chars)
        try:
            parsed = parse_intervals(candidate)
        except IntervalParseError:
            continue
        except Exception:  # noqa: BLE001  (a panic is exactly what we count)
            panics += 1
            continue
        if not _GRAMMAR.fullmatch(candidate):
            bad_accepts += 1
        elif not (1 <= len(parsed.intervals) <= 5) or any(
            not (0 <= s < e) for s, e in parsed.intervals
        ):
            bad_accepts += 1
    _verdict(
        7,
        "10k-mutation fuzz: no panics, no grammar-violating accepts",
        panics == 0 and bad_accepts == 0,
        f"panics={panics}, bad accepts={bad_accepts}",
    )


# --- criterion 8: closed loop with resume ---------------------------------------------


_E2E_GOLD = {"q1": "B", "q2": "C", "q3": "D", "q4": "A"}


def _e2e_videos():
    videos = []
    for i in range(5):
        vid = f"vid{i}"
        questions = tuple(
            make_mcq(qid, gold=gold, text=f"What is the value of fact {vid}{qid}")
            for qid, gold in _E2E_GOLD.items()
        )
        labels = {"q1": "speech", "q2": "speech", "q3": "visual", "q4": "visual"}
        videos.append(make_video(vid, 32.0, questions, category_labels=labels))
    return videos


def _e2e_asr(path, payload):
    vid = payload["media_uri"].removeprefix("media://")
    segments = [
        {"start": 0, "end": 8, "text": f"fact {vid}q1 is B."},
        {"start": 8, "end": 16, "text": f"fact {vid}q2 is C."},
    ]
    return 200, json.dumps({"segments": segments})


def _e2e_captioner(path, payload):
    vid = payload["media_uri"].removeprefix("media://")
    start = payload["interval"][0]
    if start == 16.0:
        text = f"fact {vid}q3 is D."
    elif start == 24.0:
        text = f"fact {vid}q4 is A."
    else:
        text = "nothing notable happens here"
    return 200, json.dumps({"caption": text})


def _e2e_endpoints(asr, captioner, llm):
    return {
        Role.CAPTIONER: BackendEndpoint(role=Role.CAPTIONER, base_url=captioner, model_name="cap", max_retries=0),
        Role.ASR: BackendEndpoint(role=Role.ASR, base_url=asr, model_name="asr", max_retries=0),
        Role.LLM: BackendEndpoint(role=Role.LLM, base_url=llm, model_name="llm", max_retries=0),
    }


def test_criterion_08_closed_loop_and_resume(tmp_path, register_mock):
    started = time.monotonic()
    manifest_path = tmp_path / "manifest.jsonl"
    dump_manifests(_e2e_videos(), manifest_path)

    config = RunConfig(
        manifest_path=str(manifest_path),
        endpoints=_e2e_endpoints(
            register_mock("e2e-asr", _e2e_asr),
            register_mock("e2e-cap", _e2e_captioner),
            "mock:transcript-qa",
        ),
        output_dir=str(tmp_path / "out"),
        cache_root=str(tmp_path / "cache"),
        context_limit=100_000,
        initial_clip_length=8.0,
    )
    report = run_pipeline(config)

    counted_asr = CountingProfile(_e2e_asr)
    counted_cap = CountingProfile(_e2e_captioner)
    counted_llm = CountingProfile(mocks.resolve_profile("transcript-qa"))
    resumed_config = dataclasses.replace(
        config,
        endpoints=_e2e_endpoints(
            register_mock("e2e-asr-2", counted_asr),
            register_mock("e2e-cap-2", counted_cap),
            register_mock("e2e-llm-2", counted_llm),
        ),
        cache_root=str(tmp_path / "cache2"),
        resume=True,
    )
    resumed_report = run_pipeline(resumed_config)
    timing = json.loads((tmp_path / "out" / "timing.json").read_text(encoding="utf-8"))
    elapsed = time.monotonic() - started

    backend_calls = counted_asr.calls + counted_cap.calls + counted_llm.calls
    ok = (
        report.accuracy_overall == 100.0
        and report.counts["total"] == 20
        and resumed_report.accuracy_overall == 100.0
        and backend_calls == 0
        and timing["network_calls"] == 0
        and timing["videos_resumed"] == 5
        and elapsed < 30.0
    )
    _verdict(
        8,
        "5 videos / 20 questions: accuracy 100.0, resumed run makes zero calls",
        ok,
        f"accuracy={report.accuracy_overall}, resumed calls={backend_calls}, {elapsed:.1f}s",
    )


# --- criterion 9: where the information lives -------------------------------------------


def _ablation_video():
    questions = []
    for i in range(16):
        questions.append(make_mcq(f"sq{i + 1}", gold="B"))
    for i in range(4):
        questions.append(make_mcq(f"cq{i + 1}", gold="C"))
    return make_video("abl", 64.0, tuple(questions))


def _ablation_asr(path, payload):
    segments = [
        {"start": 4 * i, "end": 4 * (i + 1), "text": f"fact sq{i + 1} is B."} for i in range(16)
    ]
    return 200, json.dumps({"segments": segments})


_CAPTION_FACT_STARTS = {8.0: "cq1", 24.0: "cq2", 40.0: "cq3", 56.0: "cq4"}


def _ablation_captioner(path, payload):
    start = float(payload["interval"][0])
    key = _CAPTION_FACT_STARTS.get(start)
    text = f"fact {key} is C." if key else "nothing notable happens here"
    return 200, json.dumps({"caption": text})


def test_criterion_09_drop_direction(tmp_path, register_mock):
    manifest_path = tmp_path / "manifest.jsonl"
    dump_manifests([_ablation_video()], manifest_path)
    base = RunConfig(
        manifest_path=str(manifest_path),
        endpoints=_e2e_endpoints(
            register_mock("abl-asr", _ablation_asr),
            register_mock("abl-cap", _ablation_captioner),
            "mock:transcript-qa",
        ),
        output_dir=str(tmp_path / "out"),
        cache_root=str(tmp_path / "cache"),
        context_limit=100_000,
        fixed_clip_length=8.0,
    )
    rows = dict(
        (label, report.accuracy_overall)
        for label, report in run_ablation(
            [
                derive_variant(base, "fixed:8"),
                derive_variant(base, "drop:subtitles:0.75"),
                derive_variant(base, "drop:captions:0.75"),
            ],
            table_dir=base.output_dir,
        )
    )
    no_drop = rows["fixed-8"]
    drop_subs = rows["drop-subtitles-0.75"]
    drop_caps = rows["drop-captions-0.75"]
    ok = (
        drop_subs < no_drop
        and drop_caps < no_drop
        and (no_drop - drop_caps) < (no_drop - drop_subs)
        and no_drop == 100.0
        and drop_subs == 40.0
        and drop_caps == 80.0
    )
    _verdict(
        9,
        "dropping subtitles hurts more than dropping captions",
        ok,
        f"no-drop={no_drop}, drop-subtitles={drop_subs}, drop-captions={drop_caps}",
    )


# --- criterion 10: bounded concurrency ------------------------------------------------


def test_criterion_10_concurrency_contract(tmp_path, register_mock):
    def echo_prompt(path, payload):
        content = payload["messages"][-1]["content"]
        return 200, json.dumps({"choices": [{"message": {"content": content}}]})

    instrumented = InstrumentedProfile(echo_prompt, hold_s=0.002)
    endpoint = BackendEndpoint(
        role=Role.LLM,
        base_url=register_mock("batch-instrumented", instrumented),
        model_name="llm",
        max_retries=0,
    )
    requests = [LLMRequest(prompt=f"payload-{i}", request_id=f"req-{i}") for i in range(500)]
    results = execute_batch(requests, endpoint, 64, cache=ResponseCache(tmp_path / "cache"))
    keyed_ok = all(results[f"req-{i}"].text == f"payload-{i}" for i in range(500))
    ok = len(results) == 500 and keyed_ok and instrumented.peak_in_flight <= 64
    _verdict(
        10,
        "500-request batch stays within 64 in flight, all results keyed",
        ok,
        f"peak in flight = {instrumented.peak_in_flight}",
    )
