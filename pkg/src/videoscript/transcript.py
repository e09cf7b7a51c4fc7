"""Clip planning and transcript rendering.

The transcript is the text actually shown to the reasoning model: the
subtitle block first, then the caption block, each one line per unit with
an optional "HH:MM:SS --> HH:MM:SS: " interval prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

from .manifest import ClipCaption, SubtitleSegment


class NonPositiveInput(ValueError):
    pass


class NegativeTime(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ClipPlan:
    """Non-overlapping clips of a fixed length tiling [0, duration]."""

    clip_length: float
    clips: tuple[tuple[float, float], ...]

    @property
    def count(self) -> int:
        return len(self.clips)


@dataclass(frozen=True, slots=True)
class Transcript:
    subtitle_block: str
    caption_block: str
    clip_length: float
    full_text: str
    token_count: int


def plan_clips(duration: float, clip_length: float) -> ClipPlan:
    """Tile [0, duration] with ceil(duration / clip_length) clips.

    Every clip has the requested length except possibly the last, which is
    shorter when the duration is not an exact multiple.
    """
    if duration <= 0 or clip_length <= 0:
        raise NonPositiveInput(f"duration={duration}, clip_length={clip_length}")
    clips: list[tuple[float, float]] = []
    i = 0
    while True:
        start = i * clip_length
        if start >= duration:
            break
        clips.append((start, min((i + 1) * clip_length, duration)))
        i += 1
    return ClipPlan(clip_length=clip_length, clips=tuple(clips))


def render_timestamp(t: float) -> str:
    """Render whole seconds as zero-padded "HH:MM:SS"; fractions round down.

    Hours are unbounded (two digits minimum), so rendered strings order
    lexicographically like their times for anything under 100 hours.
    """
    if t < 0:
        raise NegativeTime(str(t))
    total = int(t)
    hours, rem = divmod(total, 3600)
    minutes, seconds = divmod(rem, 60)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d}"


def _render_lines(units: list[SubtitleSegment] | list[ClipCaption], time_aware: bool) -> list[str]:
    if time_aware:
        return [
            f"{render_timestamp(u.start)} --> {render_timestamp(u.end)}: {u.text}"
            for u in units
        ]
    return [u.text for u in units]


def render_caption_block(captions: list[ClipCaption], time_aware: bool = True) -> str:
    """One line per caption, newline-joined; timestamps prefixed when time-aware."""
    return "\n".join(_render_lines(captions, time_aware))


def render_subtitle_block(subtitles: list[SubtitleSegment], time_aware: bool = True) -> str:
    """Subtitle lines rendered with the same interval prefix rule as captions."""
    return "\n".join(_render_lines(subtitles, time_aware))


def join_blocks(subtitle_block: str, caption_block: str) -> str:
    """Concatenate the two blocks, subtitles first; no separator when one is empty."""
    if subtitle_block and caption_block:
        return subtitle_block + "\n" + caption_block
    return subtitle_block or caption_block


def build_transcript(
    subtitles: list[SubtitleSegment],
    captions: list[ClipCaption],
    clip_length: float,
    counter,
    time_aware: bool = True,
) -> Transcript:
    """Render both blocks and count tokens over the fused text.

    ``counter`` is a TokenCounter from the budget module (anything with a
    ``count(text) -> int`` method works).
    """
    subtitle_block = render_subtitle_block(subtitles, time_aware)
    caption_block = render_caption_block(captions, time_aware)
    full_text = join_blocks(subtitle_block, caption_block)
    return Transcript(
        subtitle_block=subtitle_block,
        caption_block=caption_block,
        clip_length=clip_length,
        full_text=full_text,
        token_count=counter.count(full_text),
    )
