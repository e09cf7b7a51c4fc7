"""Deterministic in-process backends.

An endpoint whose base_url is "mock:<name>" routes requests to the profile
registered under <name> instead of the network. Profiles receive the same
path and JSON payload a live server would and return (status, body text),
so the response-parsing code path is identical for mock and live backends.
"""

from __future__ import annotations

import json
import re
import threading
import time
from typing import Callable, Protocol


class UnknownProfile(KeyError):
    pass


class MockProfile(Protocol):
    def __call__(self, path: str, payload: dict) -> tuple[int, str]:
        ...


_REGISTRY: dict[str, MockProfile] = {}
_LOCK = threading.Lock()


def register_profile(name: str, profile: MockProfile) -> None:
    with _LOCK:
        _REGISTRY[name] = profile


def unregister_profile(name: str) -> None:
    with _LOCK:
        _REGISTRY.pop(name, None)


def resolve_profile(name: str) -> MockProfile:
    with _LOCK:
        try:
            return _REGISTRY[name]
        except KeyError:
            raise UnknownProfile(name) from None


def _chat_body(content: str) -> str:
    return json.dumps({"choices": [{"message": {"content": content}}]}, ensure_ascii=False)


def _format_bound(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:g}"


def _echo_captioner(path: str, payload: dict) -> tuple[int, str]:
    start, end = payload["interval"]
    text = f"mock-caption[{_format_bound(start)},{_format_bound(end)}]"
    return 200, json.dumps({"caption": text})


def _silent_asr(path: str, payload: dict) -> tuple[int, str]:
    return 200, json.dumps({"segments": []})


def _empty_body(path: str, payload: dict) -> tuple[int, str]:
    return 200, ""


_FACT = re.compile(r"fact ([A-Za-z0-9_-]+) is ([A-Za-z0-9][A-Za-z0-9 _-]*?)[.\n]")
_ASKED = re.compile(r"fact ([A-Za-z0-9_-]+)")


def _transcript_qa(path: str, payload: dict) -> tuple[int, str]:
    """Answers questions of the form "... fact <key> ..." by looking up the
    statement "fact <key> is <value>." elsewhere in the prompt. The question
    slot sits after the transcript, so the last key mention is the asked one.
    Unanswerable prompts get prose with no standalone letter in it."""
    prompt = payload["messages"][-1]["content"]
    facts = dict(_FACT.findall(prompt))
    asked = _ASKED.findall(prompt)
    key = asked[-1] if asked else None
    if key is not None and key in facts:
        content = (
            "<think>Scanning the transcript for the requested fact.</think>"
            f"The answer is: {facts[key]}"
        )
    else:
        content = "There isn't enough information in the transcript to tell."
    return 200, _chat_body(content)


def _make_always(text: str) -> MockProfile:
    def profile(path: str, payload: dict) -> tuple[int, str]:
        return 200, _chat_body(text)

    return profile


class CountingProfile:
    """Wraps a profile and counts invocations; the count stands in for
    network-call accounting in tests."""

    def __init__(self, inner: MockProfile):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, path: str, payload: dict) -> tuple[int, str]:
        with self._lock:
            self.calls += 1
        return self.inner(path, payload)


class InstrumentedProfile:
    """Tracks concurrent in-flight invocations so tests can observe the
    effective parallelism of a batch."""

    def __init__(self, inner: MockProfile, hold_s: float = 0.002):
        self.inner = inner
        self.hold_s = hold_s
        self.calls = 0
        self.peak_in_flight = 0
        self._in_flight = 0
        self._lock = threading.Lock()

    def __call__(self, path: str, payload: dict) -> tuple[int, str]:
        with self._lock:
            self._in_flight += 1
            self.calls += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
        try:
            time.sleep(self.hold_s)
            return self.inner(path, payload)
        finally:
            with self._lock:
                self._in_flight -= 1


class FlakyProfile:
    """Fails the first `failures` calls with the given status, then delegates."""

    def __init__(self, inner: MockProfile, failures: int, status: int = 429):
        self.inner = inner
        self.failures = failures
        self.status = status
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, path: str, payload: dict) -> tuple[int, str]:
        with self._lock:
            self.calls += 1
            failing = self.calls <= self.failures
        if failing:
            return self.status, json.dumps({"error": "induced failure"})
        return self.inner(path, payload)


def scripted_asr(segments: list[tuple[float, float, str]]) -> MockProfile:
    body = json.dumps({"segments": [{"start": s, "end": e, "text": t} for s, e, t in segments]})

    def profile(path: str, payload: dict) -> tuple[int, str]:
        return 200, body

    return profile


def _install_builtins() -> None:
    register_profile("echo", _echo_captioner)
    register_profile("silent", _silent_asr)
    register_profile("empty-body", _empty_body)
    register_profile("transcript-qa", _transcript_qa)


_install_builtins()


def always_profile_for(name: str) -> MockProfile | None:
    """Profiles named "always-<TEXT>" reply with <TEXT> verbatim. They are
    materialized on first use rather than pre-registered."""
    if name.startswith("always-") and len(name) > len("always-"):
        return _make_always(name[len("always-") :])
    return None


def lookup(name: str) -> MockProfile:
    with _LOCK:
        profile = _REGISTRY.get(name)
    if profile is not None:
        return profile
    dynamic = always_profile_for(name)
    if dynamic is not None:
        return dynamic
    raise UnknownProfile(name)


Generator = Callable[[str, dict], tuple[int, str]]
