"""Content-addressed response cache.

Keys digest the full request identity (role, model, prompt, media, interval,
decode parameters) so any change in the request invalidates the entry. Values
store the raw response body, which makes cache hits byte-identical to live
responses and lets a resumed run finish without network access.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True, slots=True)
class CacheKey:
    role: str
    model: str
    prompt: str
    media_uri: str | None = None
    interval: tuple[float, float] | None = None
    temperature: float = 0.0
    max_tokens: int | None = None

    def digest(self) -> str:
        payload = {
            "role": self.role,
            "model": self.model,
            "prompt": self.prompt,
            "media_uri": self.media_uri,
            "interval": list(self.interval) if self.interval is not None else None,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class ResponseCache:
    """Filesystem cache: <root>/<role>/<first 2 hex>/<digest>.json"""

    root: Path
    hits: int = field(default=0, init=False)
    misses: int = field(default=0, init=False)

    def _path(self, key: CacheKey) -> Path:
        digest = key.digest()
        return Path(self.root) / key.role / digest[:2] / f"{digest}.json"

    def get(self, key: CacheKey) -> str | None:
        path = self._path(key)
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            self.misses += 1
            return None
        self.hits += 1
        return record["body"]

    def put(self, key: CacheKey, body: str, elapsed_s: float = 0.0) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        summary = {
            "role": key.role,
            "model": key.model,
            "prompt_chars": len(key.prompt),
            "media_uri": key.media_uri,
            "interval": list(key.interval) if key.interval is not None else None,
        }
        record = json.dumps(
            {"digest": key.digest(), "request": summary, "body": body, "elapsed_s": elapsed_s},
            ensure_ascii=False,
        )
        # Write-then-rename keeps a crashed run from leaving a torn entry.
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(record)
            os.replace(tmp, path)
        except OSError:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
