"""HTTP clients for the captioner, ASR, and reasoning-model roles.

One JSON protocol per role (documented in docs/protocol.md), shared by live
backends and the in-process mock profiles, with bounded-concurrency batch
execution, retry with backoff, and a content-addressed response cache.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import httpx

from . import mocks
from .cache import CacheKey, ResponseCache
from .manifest import ClipCaption, SubtitleSegment, normalize_subtitles

logger = logging.getLogger(__name__)

CHAT_PATH = "/v1/chat/completions"
CAPTION_PATH = "/v1/captions"
TRANSCRIPTION_PATH = "/v1/transcriptions"

DEFAULT_MAX_IN_FLIGHT = 64
DEFAULT_CAPTION_PROMPT = "Briefly describe the video within 40 words"
DEFAULT_CAPTION_MAX_NEW_TOKENS = 200
DEFAULT_THINK_MARKERS = ("<think>", "</think>")

_BACKOFF_BASE_S = 0.5
_BACKOFF_CAP_S = 8.0

# Seam for tests: retries sleep through this hook.
_sleep = time.sleep


class GatewayError(Exception):
    pass


class BackendUnavailable(GatewayError):
    pass


class RequestTimeout(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


class ContextLengthExceeded(GatewayError):
    """The backend rejected the request as larger than its context window.
    Kept distinct so callers can re-budget instead of retrying."""


class Role(str, Enum):
    CAPTIONER = "captioner"
    ASR = "asr"
    LLM = "llm"
    JUDGE = "judge"


class Decode(str, Enum):
    GREEDY = "greedy"


@dataclass(frozen=True, slots=True)
class BackendEndpoint:
    role: Role
    base_url: str
    model_name: str
    auth_token_env: str | None = None
    timeout: float = 120.0
    max_retries: int = 3

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")

    @property
    def mock_profile(self) -> str | None:
        if self.base_url.startswith("mock:"):
            return self.base_url[len("mock:") :]
        return None


@dataclass(frozen=True, slots=True)
class CaptionRequest:
    video_id: str
    media_uri: str
    interval: tuple[float, float]
    prompt: str = DEFAULT_CAPTION_PROMPT
    max_new_tokens: int = DEFAULT_CAPTION_MAX_NEW_TOKENS
    decode: Decode = Decode.GREEDY

    def __post_init__(self):
        start, end = self.interval
        if not (0 <= start < end):
            raise ValueError(f"invalid interval [{start}, {end}]")
        if not self.prompt:
            raise ValueError("caption prompt must be non-empty")

    @property
    def request_id(self) -> str:
        return f"{self.video_id}[{self.interval[0]:g},{self.interval[1]:g}]"


@dataclass(frozen=True, slots=True)
class LLMRequest:
    prompt: str
    request_id: str
    temperature: float = 1.0
    max_output_tokens: int | None = None


@dataclass(frozen=True, slots=True)
class Completion:
    """A model reply: `text` has any reasoning-trace span removed, `raw_text`
    is the body's content verbatim."""

    text: str
    raw_text: str


@dataclass
class NetworkStats:
    """Counts actual backend round trips (cache hits excluded)."""

    calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def bump(self) -> None:
        with self._lock:
            self.calls += 1


def strip_think_markers(text: str, markers: tuple[str, str] = DEFAULT_THINK_MARKERS) -> str:
    open_m, close_m = markers
    pattern = re.escape(open_m) + r".*?" + re.escape(close_m)
    stripped = re.sub(pattern, "", text, flags=re.DOTALL)
    # A dangling opener means the trace was cut off mid-thought; nothing
    # after it is an answer.
    dangling = stripped.find(open_m)
    if dangling != -1:
        stripped = stripped[:dangling]
    return stripped.strip()


def _auth_headers(ep: BackendEndpoint) -> dict[str, str]:
    if ep.auth_token_env:
        token = os.environ.get(ep.auth_token_env)
        if token:
            return {"Authorization": f"Bearer {token}"}
    return {}


def _send_once(ep: BackendEndpoint, path: str, payload: dict) -> tuple[int, str]:
    profile_name = ep.mock_profile
    if profile_name is not None:
        profile = mocks.lookup(profile_name)
        return profile(path, payload)
    url = ep.base_url.rstrip("/") + path
    response = httpx.post(url, json=payload, headers=_auth_headers(ep), timeout=ep.timeout)
    return response.status_code, response.text


_CONTEXT_LENGTH_MARKERS = ("context_length", "context length", "maximum context")


def _classify_http_error(status: int, body: str) -> GatewayError:
    if status == 400 and any(marker in body.lower() for marker in _CONTEXT_LENGTH_MARKERS):
        return ContextLengthExceeded(body[:500])
    return BackendUnavailable(f"status {status}: {body[:200]}")


def _is_retryable_status(status: int) -> bool:
    return status == 429 or status >= 500


def _request_body(
    ep: BackendEndpoint,
    path: str,
    payload: dict,
    cache: ResponseCache | None,
    key: CacheKey | None,
    stats: NetworkStats | None = None,
) -> str:
    if cache is not None and key is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    last_error: GatewayError | None = None
    for attempt in range(ep.max_retries + 1):
        if attempt:
            delay = min(_BACKOFF_CAP_S, _BACKOFF_BASE_S * 2 ** (attempt - 1))
            _sleep(delay * (0.5 + random.random() / 2))
        started = time.monotonic()
        try:
            if stats is not None:
                stats.bump()
            status, body = _send_once(ep, path, payload)
        except httpx.TimeoutException as exc:
            last_error = RequestTimeout(str(exc))
            logger.warning("%s attempt %d timed out", path, attempt + 1)
            continue
        except httpx.HTTPError as exc:
            last_error = BackendUnavailable(str(exc))
            logger.warning("%s attempt %d failed: %s", path, attempt + 1, exc)
            continue
        if status == 200:
            if cache is not None and key is not None:
                cache.put(key, body, elapsed_s=time.monotonic() - started)
            return body
        error = _classify_http_error(status, body)
        if isinstance(error, ContextLengthExceeded) or not _is_retryable_status(status):
            raise error
        last_error = error
        logger.warning("%s attempt %d got status %d", path, attempt + 1, status)
    assert last_error is not None
    raise last_error


def _parse_json_body(body: str) -> dict:
    if not body.strip():
        raise MalformedResponse("empty response body")
    try:
        parsed = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"invalid JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise MalformedResponse("response body is not an object")
    return parsed


def caption(
    req: CaptionRequest,
    ep: BackendEndpoint,
    cache: ResponseCache | None = None,
    stats: NetworkStats | None = None,
) -> ClipCaption:
    if ep.role is not Role.CAPTIONER:
        raise ValueError(f"caption() needs a captioner endpoint, got {ep.role.value}")
    payload = {
        "model": ep.model_name,
        "media_uri": req.media_uri,
        "interval": list(req.interval),
        "prompt": req.prompt,
        "max_new_tokens": req.max_new_tokens,
        "decode": req.decode.value,
    }
    key = CacheKey(
        role=ep.role.value,
        model=ep.model_name,
        prompt=req.prompt,
        media_uri=req.media_uri,
        interval=req.interval,
        temperature=0.0,
        max_tokens=req.max_new_tokens,
    )
    body = _request_body(ep, CAPTION_PATH, payload, cache, key, stats)
    parsed = _parse_json_body(body)
    text = parsed.get("caption")
    if not isinstance(text, str):
        raise MalformedResponse("caption field missing or not a string")
    return ClipCaption(start=req.interval[0], end=req.interval[1], text=text)


def transcribe(
    media_uri: str,
    ep: BackendEndpoint,
    cache: ResponseCache | None = None,
    stats: NetworkStats | None = None,
) -> list[SubtitleSegment]:
    if ep.role is not Role.ASR:
        raise ValueError(f"transcribe() needs an ASR endpoint, got {ep.role.value}")
    payload = {"model": ep.model_name, "media_uri": media_uri}
    key = CacheKey(role=ep.role.value, model=ep.model_name, prompt="", media_uri=media_uri)
    body = _request_body(ep, TRANSCRIPTION_PATH, payload, cache, key, stats)
    parsed = _parse_json_body(body)
    raw_segments = parsed.get("segments")
    if not isinstance(raw_segments, list):
        raise MalformedResponse("segments field missing or not a list")
    segments = []
    for entry in raw_segments:
        try:
            segments.append(SubtitleSegment(start=entry["start"], end=entry["end"], text=entry["text"]))
        except (TypeError, KeyError, ValueError) as exc:
            raise MalformedResponse(f"bad segment {entry!r}: {exc}") from exc
    return normalize_subtitles(segments)


def complete_full(
    req: LLMRequest,
    ep: BackendEndpoint,
    cache: ResponseCache | None = None,
    think_markers: tuple[str, str] = DEFAULT_THINK_MARKERS,
    stats: NetworkStats | None = None,
) -> Completion:
    if ep.role not in (Role.LLM, Role.JUDGE):
        raise ValueError(f"complete() needs an LLM or judge endpoint, got {ep.role.value}")
    payload: dict = {
        "model": ep.model_name,
        "messages": [{"role": "user", "content": req.prompt}],
        "temperature": req.temperature,
    }
    if req.max_output_tokens is not None:
        payload["max_tokens"] = req.max_output_tokens
    key = CacheKey(
        role=ep.role.value,
        model=ep.model_name,
        prompt=req.prompt,
        temperature=req.temperature,
        max_tokens=req.max_output_tokens,
    )
    body = _request_body(ep, CHAT_PATH, payload, cache, key, stats)
    parsed = _parse_json_body(body)
    try:
        raw_text = parsed["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"missing choices[0].message.content: {exc}") from exc
    if not isinstance(raw_text, str):
        raise MalformedResponse("message content is not a string")
    if raw_text != strip_think_markers(raw_text, think_markers):
        logger.debug("raw completion for %s: %s", req.request_id, raw_text)
    return Completion(text=strip_think_markers(raw_text, think_markers), raw_text=raw_text)


def complete(
    req: LLMRequest,
    ep: BackendEndpoint,
    cache: ResponseCache | None = None,
    think_markers: tuple[str, str] = DEFAULT_THINK_MARKERS,
    stats: NetworkStats | None = None,
) -> str:
    return complete_full(req, ep, cache, think_markers, stats).text


def execute_batch(
    requests: Sequence[LLMRequest | CaptionRequest],
    ep: BackendEndpoint,
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    cache: ResponseCache | None = None,
    think_markers: tuple[str, str] = DEFAULT_THINK_MARKERS,
    stats: NetworkStats | None = None,
) -> dict[str, Completion | ClipCaption | GatewayError]:
    """Runs the batch with at most max_in_flight requests outstanding.

    Results are keyed by request_id; a failed request maps to its
    GatewayError instead of aborting the batch.
    """
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be at least 1")
    ids = [req.request_id for req in requests]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate request_id in batch")
    if not requests:
        return {}

    def run_one(req: LLMRequest | CaptionRequest) -> Completion | ClipCaption | GatewayError:
        try:
            if isinstance(req, CaptionRequest):
                return caption(req, ep, cache, stats)
            return complete_full(req, ep, cache, think_markers, stats)
        except GatewayError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        outcomes = list(pool.map(run_one, requests))
    return dict(zip(ids, outcomes))
