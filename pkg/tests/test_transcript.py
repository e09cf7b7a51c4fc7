import math

import pytest
from hypothesis import assume, given, strategies as st

from videoscript import (
    ClipCaption,
    NegativeTime,
    NonPositiveInput,
    SubtitleSegment,
    TokenCounter,
    build_transcript,
    plan_clips,
    render_caption_block,
    render_subtitle_block,
    render_timestamp,
)
from videoscript.transcript import join_blocks


def test_timestamp_examples():
    assert render_timestamp(0) == "00:00:00"
    assert render_timestamp(24) == "00:00:24"
    assert render_timestamp(32) == "00:00:32"
    assert render_timestamp(3661) == "01:01:01"
    assert render_timestamp(59.999) == "00:00:59"
    assert render_timestamp(360000) == "100:00:00"


def test_timestamp_rejects_negative():
    with pytest.raises(NegativeTime):
        render_timestamp(-0.001)


@given(st.floats(min_value=0, max_value=359998, allow_nan=False))
def test_timestamp_monotone_under_100_hours(t):
    # Lexicographic order matches time order while hours stay at 2 digits.
    later = t + 1.0
    assert render_timestamp(t) <= render_timestamp(later)


def test_plan_clips_exact_division():
    plan = plan_clips(16.0, 4.0)
    assert plan.clips == ((0.0, 4.0), (4.0, 8.0), (8.0, 12.0), (12.0, 16.0))
    assert plan.count == 4


def test_plan_clips_ragged_tail():
    plan = plan_clips(10.0, 4.0)
    assert plan.clips == ((0.0, 4.0), (4.0, 8.0), (8.0, 10.0))


def test_plan_clips_single_clip_when_length_exceeds_duration():
    plan = plan_clips(5.0, 60.0)
    assert plan.clips == ((0.0, 5.0),)


def test_plan_clips_no_zero_length_tail():
    # 0.1 * 3 != 0.3 in binary floats; the plan must not emit a zero clip.
    plan = plan_clips(0.3, 0.1)
    assert all(start < end for start, end in plan.clips)
    assert plan.clips[-1][1] == 0.3


def test_plan_clips_rejects_nonpositive():
    with pytest.raises(NonPositiveInput):
        plan_clips(0.0, 1.0)
    with pytest.raises(NonPositiveInput):
        plan_clips(10.0, 0.0)


@given(
    st.floats(min_value=0.01, max_value=20000, allow_nan=False),
    st.floats(min_value=0.01, max_value=4000, allow_nan=False),
)
def test_plan_clips_tiles_duration(duration, clip_length):
    assume(duration / clip_length <= 500)
    plan = plan_clips(duration, clip_length)
    clips = plan.clips
    assert clips[0][0] == 0.0
    assert clips[-1][1] == duration
    for (s0, e0), (s1, e1) in zip(clips, clips[1:]):
        assert e0 == s1
    for start, end in clips[:-1]:
        assert end - start == pytest.approx(clip_length)
    last_start, last_end = clips[-1]
    assert last_end - last_start <= clip_length + 1e-9


def test_caption_line_format_worked_example():
    block = render_caption_block([ClipCaption(24.0, 32.0, "A person stands still.")])
    assert block == "00:00:24 --> 00:00:32: A person stands still."
    assert block.startswith("00:00:24 --> 00:00:32: ")


def test_time_aware_flag_applies_to_both_blocks():
    subs = [SubtitleSegment(0.0, 2.0, "hello")]
    caps = [ClipCaption(0.0, 8.0, "a room")]
    assert render_subtitle_block(subs, time_aware=False) == "hello"
    assert render_caption_block(caps, time_aware=False) == "a room"
    assert render_subtitle_block(subs, time_aware=True) == "00:00:00 --> 00:00:02: hello"
    assert render_caption_block(caps, time_aware=True) == "00:00:00 --> 00:00:08: a room"


def test_join_blocks_drops_separator_when_one_side_empty():
    assert join_blocks("subs", "caps") == "subs\ncaps"
    assert join_blocks("", "caps") == "caps"
    assert join_blocks("subs", "") == "subs"
    assert join_blocks("", "") == ""


def test_build_transcript_counts_fused_text():
    counter = TokenCounter()
    subs = [SubtitleSegment(0.0, 2.0, "hello there")]
    caps = [ClipCaption(0.0, 8.0, "a quiet room")]
    transcript = build_transcript(subs, caps, 8.0, counter)
    assert transcript.full_text == transcript.subtitle_block + "\n" + transcript.caption_block
    assert transcript.token_count == math.ceil(len(transcript.full_text) / 4)
    assert transcript.clip_length == 8.0


def test_build_transcript_empty_inputs():
    counter = TokenCounter()
    transcript = build_transcript([], [], 4.0, counter)
    assert transcript.full_text == ""
    assert transcript.token_count == 0
