"""Shared fixtures: mock registration with cleanup, manifest builders, and
an in-test caption source that needs no gateway."""

from __future__ import annotations

import pytest

from videoscript import (
    ClipCaption,
    Question,
    QuestionKind,
    TokenCounter,
    VideoManifest,
)
from videoscript import mocks


@pytest.fixture
def counter() -> TokenCounter:
    return TokenCounter()


@pytest.fixture
def register_mock():
    """Register mock profiles for one test and always unregister them."""
    registered: list[str] = []

    def _register(name: str, profile) -> str:
        mocks.register_profile(name, profile)
        registered.append(name)
        return f"mock:{name}"

    yield _register
    for name in registered:
        mocks.unregister_profile(name)


class ConstantCaptionSource:
    """Yields the same caption text for every planned clip."""

    def __init__(self, text: str):
        self.text = text
        self.calls = 0

    def captions(self, video, clips):
        self.calls += 1
        return [ClipCaption(start=start, end=end, text=self.text) for start, end in clips]


@pytest.fixture
def constant_captions():
    return ConstantCaptionSource


def make_mcq(question_id: str, gold: str = "B", n_options: int = 4, text: str | None = None) -> Question:
    letters = "ABCDEFGH"[:n_options]
    return Question(
        question_id=question_id,
        text=text or f"What is the value of fact {question_id}",
        kind=QuestionKind.MULTIPLE_CHOICE,
        options=tuple((letter, f"choice {letter.lower()}") for letter in letters),
        ground_truth=gold,
    )


def make_video(
    video_id: str,
    duration: float,
    questions: tuple[Question, ...],
    category_labels: dict[str, str] | None = None,
) -> VideoManifest:
    return VideoManifest(
        video_id=video_id,
        media_uri=f"media://{video_id}",
        duration=duration,
        questions=questions,
        category_labels=category_labels or {},
    )
