"""Provider-agnostic LLM gateway with on-disk caching, bounded retries, and a
deterministic replay store.

Every downstream stage takes a Gateway, so the whole pipeline runs without
network access by pointing the gateway at recorded fixtures. Cache and
fixture stores share one layout: <store>/<first two hex of digest>/<digest>.json
holding {"request": ..., "response": ...}, written atomically.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import PipelineError
from .util import atomic_write_text, sha256_text

FINISH_STATES = ("complete", "truncated", "refused")
PROVENANCES = ("live", "cache", "replay")


class BackendUnavailable(PipelineError):
    code = "backend_unavailable"


class RateLimited(PipelineError):
    code = "rate_limited"


class Refused(PipelineError):
    code = "refused"


class TransientBackendError(PipelineError):
    code = "transient_backend_error"


class CacheIoError(PipelineError):
    code = "cache_io_error"


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    model_tag: str = "default"
    temperature: float = 0.0
    max_output: int = 4096

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be in [0, 1]")

    def to_json_obj(self) -> dict:
        return {
            "prompt": self.prompt,
            "model_tag": self.model_tag,
            "temperature": self.temperature,
            "max_output": self.max_output,
        }


@dataclass(frozen=True)
class LlmResponse:
    text: str
    finish_state: str = "complete"
    provenance: str = "live"

    def __post_init__(self):
        if self.finish_state not in FINISH_STATES:
            raise ValueError(f"finish_state must be one of {FINISH_STATES}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        if not self.text and self.finish_state == "complete":
            raise ValueError("empty text cannot be marked complete")

    def to_json_obj(self) -> dict:
        return {"text": self.text, "finish_state": self.finish_state, "provenance": self.provenance}


def cache_key(request: LlmRequest) -> str:
    """Stable digest of (prompt, model_tag, temperature, max_output)."""
    canonical = json.dumps(request.to_json_obj(), sort_keys=True, ensure_ascii=False)
    return sha256_text(canonical)


def entry_path(store: Path | str, key: str) -> Path:
    return Path(store) / key[:2] / f"{key}.json"


def record_fixture(request: LlmRequest, response: LlmResponse, store: Path | str) -> str:
    """Persist a (request, response) pair; returns the key. Last write wins."""
    key = cache_key(request)
    payload = {"request": request.to_json_obj(), "response": response.to_json_obj()}
    try:
        atomic_write_text(entry_path(store, key), json.dumps(payload, ensure_ascii=False, indent=2) + "\n")
    except OSError as exc:
        raise CacheIoError(f"cannot write fixture {key}: {exc}") from exc
    return key


def load_entry(store: Path | str, key: str) -> LlmResponse | None:
    """Read a stored response; corrupted or missing entries read as None."""
    path = entry_path(store, key)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        resp = payload["response"]
        return LlmResponse(
            text=resp["text"],
            finish_state=resp["finish_state"],
            provenance=resp.get("provenance", "live"),
        )
    except FileNotFoundError:
        return None
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError):
        return None


class ReplayBackend:
    """Serves only recorded fixtures; never fabricates a response."""

    def __init__(self, store: Path | str):
        self.store = Path(store)

    def complete(self, request: LlmRequest) -> LlmResponse:
        key = cache_key(request)
        found = load_entry(self.store, key)
        if found is None:
            raise BackendUnavailable(
                f"no replay fixture for key {key} (model={request.model_tag!r}, "
                f"temperature={request.temperature})"
            )
        return replace(found, provenance="replay")


class HttpBackend:
    """Plain HTTPS chat-completion backend (OpenAI-style wire shape).

    Credentials come from the environment variable named by api_key_env and
    are never written to disk. 429 maps to RateLimited and 5xx to a transient
    error so the gateway's retry policy applies; other HTTP errors surface
    immediately as BackendUnavailable.
    """

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "LLM_API_KEY",
        timeout: float = 120.0,
        session=None,
    ):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def complete(self, request: LlmRequest) -> LlmResponse:
        import os

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": request.model_tag,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        }
        try:
            resp = self.session.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
        except Exception as exc:  # connection-level failures are retryable
            raise TransientBackendError(f"request failed: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimited("backend rate limit")
        if resp.status_code >= 500:
            raise TransientBackendError(f"backend returned {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendUnavailable(f"backend returned {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
            choice = payload["choices"][0]
            text = choice["message"]["content"] or ""
            finish_reason = choice.get("finish_reason", "stop")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed backend response: {exc}") from exc
        finish_state = {"stop": "complete", "length": "truncated", "content_filter": "refused"}.get(
            finish_reason, "complete"
        )
        if not text:
            finish_state = "refused"
        return LlmResponse(text=text, finish_state=finish_state, provenance="live")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 0.5
    max_delay: float = 8.0
    jitter: float = 0.25


class Gateway:
    """Front door for completions: cache lookup, bounded retries with
    exponential backoff + jitter on transient errors, and an in-flight cap
    shared across worker threads."""

    def __init__(
        self,
        backend,
        cache_dir: Path | str | None = None,
        retry: RetryPolicy = RetryPolicy(),
        max_in_flight: int = 4,
        sleep=time.sleep,
        rng: random.Random | None = None,
    ):
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.retry = retry
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._sem = threading.BoundedSemaphore(max_in_flight)

    def complete(self, request: LlmRequest) -> LlmResponse:
        if self.cache_dir is not None:
            cached = load_entry(self.cache_dir, cache_key(request))
            if cached is not None:
                return replace(cached, provenance="cache")
        response = self._complete_with_retry(request)
        if self.cache_dir is not None:
            record_fixture(request, response, self.cache_dir)
        return response

    def _complete_with_retry(self, request: LlmRequest) -> LlmResponse:
        last: PipelineError | None = None
        for attempt in range(self.retry.max_attempts):
            try:
                with self._sem:
                    return self.backend.complete(request)
            except (RateLimited, TransientBackendError) as exc:
                last = exc
                if attempt == self.retry.max_attempts - 1:
                    break
                delay = min(self.retry.base_delay * (2**attempt), self.retry.max_delay)
                delay += self._rng.uniform(0, self.retry.jitter)
                self._sleep(delay)
        assert last is not None
        raise last
