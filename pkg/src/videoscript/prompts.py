"""Prompt template loading and instantiation.

The three task templates live as text assets next to this module. Rendering
is plain string substitution on uniquely occurring slot markers; everything
outside the markers must survive byte-for-byte, so no escaping or reflowing
happens here.
"""

from __future__ import annotations

from enum import Enum
from importlib import resources

from .manifest import Question, QuestionKind
from .transcript import Transcript


class MissingOptions(ValueError):
    def __init__(self, question_id: str):
        self.question_id = question_id
        super().__init__(f"question {question_id} has no options to render")


class TemplateIntegrityError(RuntimeError):
    """A template asset is missing a slot or repeats one."""


class TemplateKind(str, Enum):
    MULTIPLE_CHOICE = "multiple_choice"
    OPEN_ENDED = "open_ended"
    GROUNDED_QA = "grounded_qa"


SLOT_SUBTITLES = "{Subtitles}"
SLOT_CAPTIONS = "{Captions}"
SLOT_CLIP_LENGTH = "{Clip Length}"
SLOT_QUESTION = "{Question}"
SLOT_OPTIONS = "{Options}"

_SLOTS_BY_KIND = {
    TemplateKind.MULTIPLE_CHOICE: (SLOT_SUBTITLES, SLOT_CAPTIONS, SLOT_CLIP_LENGTH, SLOT_QUESTION, SLOT_OPTIONS),
    TemplateKind.OPEN_ENDED: (SLOT_SUBTITLES, SLOT_CAPTIONS, SLOT_CLIP_LENGTH, SLOT_QUESTION),
    TemplateKind.GROUNDED_QA: (SLOT_SUBTITLES, SLOT_CAPTIONS, SLOT_CLIP_LENGTH, SLOT_QUESTION),
}

_TEMPLATE_CACHE: dict[TemplateKind, str] = {}


def template_body(kind: TemplateKind) -> str:
    if kind not in _TEMPLATE_CACHE:
        body = resources.files(__package__).joinpath("templates", f"{kind.value}.txt").read_text("utf-8")
        for slot in _SLOTS_BY_KIND[kind]:
            if body.count(slot) != 1:
                raise TemplateIntegrityError(f"{kind.value}: slot {slot} occurs {body.count(slot)} times")
        _TEMPLATE_CACHE[kind] = body
    return _TEMPLATE_CACHE[kind]


def template_kind_for(question: Question) -> TemplateKind:
    if question.kind in (QuestionKind.MULTIPLE_CHOICE, QuestionKind.KNOWLEDGE_PAIR):
        return TemplateKind.MULTIPLE_CHOICE
    if question.kind is QuestionKind.GROUNDED_QA:
        return TemplateKind.GROUNDED_QA
    return TemplateKind.OPEN_ENDED


def render_clip_length(clip_length: float) -> str:
    if float(clip_length).is_integer():
        return str(int(clip_length))
    return f"{clip_length:.1f}"


def render_options(question: Question) -> str:
    if not question.options:
        raise MissingOptions(question.question_id)
    return "\n".join(f"{letter}. {text}" for letter, text in question.options)


def render_prompt(kind: TemplateKind, transcript: Transcript, question: Question) -> str:
    """Instantiates the template for `kind`; the result differs from the
    stored asset only at slot positions."""
    body = template_body(kind)
    body = body.replace(SLOT_SUBTITLES, transcript.subtitle_block)
    body = body.replace(SLOT_CAPTIONS, transcript.caption_block)
    body = body.replace(SLOT_CLIP_LENGTH, render_clip_length(transcript.clip_length))
    body = body.replace(SLOT_QUESTION, question.text)
    if kind is TemplateKind.MULTIPLE_CHOICE:
        body = body.replace(SLOT_OPTIONS, render_options(question))
    return body


def render_for_question(transcript: Transcript, question: Question) -> str:
    return render_prompt(template_kind_for(question), transcript, question)
