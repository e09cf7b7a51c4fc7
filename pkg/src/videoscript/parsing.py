"""Extracting structured answers from model text.

Letter extraction is a fixed three-rule ladder, applied in order; a miss is
an abstention, never a guess. Interval extraction is a strict grammar over
the whole reply rather than expression evaluation, because model output is
untrusted input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class NoAnswerFound(Exception):
    """No option letter could be extracted; score as an abstention."""


class IntervalParseError(Exception):
    pass


class ParseFailure(IntervalParseError):
    pass


class TooManyIntervals(IntervalParseError):
    pass


class EmptyPrediction(IntervalParseError):
    pass


class NonIntegerBound(IntervalParseError):
    pass


class InvertedInterval(IntervalParseError):
    pass


MAX_INTERVALS = 5


@dataclass(frozen=True, slots=True)
class IntervalPrediction:
    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.intervals:
            raise EmptyPrediction("prediction holds no intervals")
        if len(self.intervals) > MAX_INTERVALS:
            raise TooManyIntervals(f"{len(self.intervals)} intervals, limit {MAX_INTERVALS}")
        for start, end in self.intervals:
            if not (type(start) is int and type(end) is int):
                raise NonIntegerBound(f"[{start}, {end}]")
            if start < 0 or end < 0:
                raise NonIntegerBound(f"negative bound in [{start}, {end}]")
            if start >= end:
                raise InvertedInterval(f"[{start}, {end}]")

    def serialize(self) -> str:
        return "[" + ", ".join(f"[{s}, {e}]" for s, e in self.intervals) + "]"


# Rule 2 patterns, most explicit first. The letter must stand alone, so
# "answer is Bob" never yields B.
_TAIL_PATTERNS = re.compile(
    r"(?:answer\s+is\s*:?\s*\(?([A-Za-z])\)?(?![A-Za-z0-9])"
    r"|answer\s*:\s*\(?([A-Za-z])\)?(?![A-Za-z0-9])"
    r"|\(([A-Za-z])\))",
    re.IGNORECASE,
)

# Rule 3 accepts uppercase only: a lowercase standalone "a" is usually the
# article, not an answer.
_STANDALONE = re.compile(r"(?<![A-Za-z0-9])([A-Z])(?![A-Za-z0-9])")


def parse_letter(text: str, allowed: set[str] | tuple[str, ...]) -> str:
    """Extract an option letter from `text`.

    Ladder: (1) the whole trimmed text is a single allowed letter; (2) the
    last "answer is X" / "answer: X" / "(X)" match whose letter is allowed;
    (3) the first standalone uppercase allowed letter. Raises NoAnswerFound
    when every rule misses.
    """
    allowed_set = {letter.upper() for letter in allowed}
    if not allowed_set:
        raise ValueError("allowed letter set must be non-empty")

    trimmed = text.strip()
    if len(trimmed) == 1 and trimmed.upper() in allowed_set:
        return trimmed.upper()

    tail_hit: str | None = None
    for match in _TAIL_PATTERNS.finditer(text):
        letter = next(group for group in match.groups() if group is not None).upper()
        if letter in allowed_set:
            tail_hit = letter
    if tail_hit is not None:
        return tail_hit

    for match in _STANDALONE.finditer(text):
        if match.group(1) in allowed_set:
            return match.group(1)

    raise NoAnswerFound(text[:120])


class _Scanner:
    __slots__ = ("text", "pos")

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str) -> None:
        if self.peek() != char:
            raise ParseFailure(f"expected {char!r} at position {self.pos}")
        self.pos += 1

    def number(self) -> int:
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        while self.peek().isdigit():
            self.pos += 1
        token = self.text[start : self.pos]
        if not token.lstrip("-"):
            raise ParseFailure(f"expected an integer at position {start}")
        if self.peek() == ".":
            self.pos += 1
            while self.peek().isdigit():
                self.pos += 1
            raise NonIntegerBound(self.text[start : self.pos])
        if token.startswith("-"):
            # Covers "-0" too; a signed literal is out of grammar regardless
            # of its numeric value.
            raise NonIntegerBound(token)
        return int(token)


def parse_intervals(text: str) -> IntervalPrediction:
    """Parse "[[start1, end1], [start2, end2], ...]" covering the entire
    reply, whitespace-tolerant between tokens. Grammar violations raise
    ParseFailure; well-formed lists can still fail the count, integrality,
    and ordering rules with their specific errors.
    """
    if not text.strip():
        raise EmptyPrediction("blank prediction")
    scanner = _Scanner(text)
    scanner.skip_ws()
    scanner.expect("[")
    scanner.skip_ws()
    if scanner.peek() == "]":
        scanner.pos += 1
        scanner.skip_ws()
        if scanner.pos != len(text):
            raise ParseFailure("trailing characters after list")
        raise EmptyPrediction("empty interval list")

    pairs: list[tuple[int, int]] = []
    while True:
        scanner.expect("[")
        scanner.skip_ws()
        start = scanner.number()
        scanner.skip_ws()
        scanner.expect(",")
        scanner.skip_ws()
        end = scanner.number()
        scanner.skip_ws()
        scanner.expect("]")
        pairs.append((start, end))
        scanner.skip_ws()
        if scanner.peek() == ",":
            scanner.pos += 1
            scanner.skip_ws()
            continue
        break
    scanner.expect("]")
    scanner.skip_ws()
    if scanner.pos != len(text):
        raise ParseFailure("trailing characters after list")
    return IntervalPrediction(intervals=tuple(pairs))
