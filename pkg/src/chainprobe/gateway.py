"""Uniform chat-completion client plus a deterministic replay provider.

Live profiles speak the single-user-message chat-completion wire format over
HTTP with bounded retries and exponential backoff. Replay profiles answer
from a recorded fixture keyed by a content hash of (model name, template id
and version, slot values), which makes the whole downstream pipeline a
deterministic function of its inputs.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import httpx

from .model import ChainProbeError, ModelRef, canonical_json, content_digest
from .prompts import PromptText, template_version

REPLAY_PROVIDER = "replay"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class AuthMissing(ChainProbeError):
    """The profile's auth environment variable is not set."""


class RetriesExhausted(ChainProbeError):
    """Transient failures persisted beyond the retry budget."""

    def __init__(self, message: str, last_cause: Exception | None = None):
        super().__init__(message)
        self.last_cause = last_cause


class MalformedProviderReply(ChainProbeError):
    """The provider answered with something other than a usable completion."""


class FixtureMiss(ChainProbeError):
    """No fixture entry recorded for the requested key."""

    def __init__(self, key: str, detail: str = ""):
        super().__init__(f"replay fixture has no entry for key {key}" + (f" ({detail})" if detail else ""))
        self.key = key


@dataclass(frozen=True)
class ProviderProfile:
    name: str
    endpoint_url: str
    auth_env_var: str = ""
    max_parallel: int = 4
    retry_max: int = 3
    backoff_base_ms: int = 250

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.retry_max < 0:
            raise ValueError("retry_max must be >= 0")
        if self.backoff_base_ms <= 0:
            raise ValueError("backoff_base_ms must be > 0")

    @property
    def is_replay(self) -> bool:
        return self.name == REPLAY_PROVIDER or self.endpoint_url.startswith("replay:")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "endpoint_url": self.endpoint_url,
            "auth_env_var": self.auth_env_var,
            "max_parallel": self.max_parallel,
            "retry_max": self.retry_max,
            "backoff_base_ms": self.backoff_base_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProviderProfile":
        return cls(
            name=d["name"],
            endpoint_url=d["endpoint_url"],
            auth_env_var=d.get("auth_env_var", ""),
            max_parallel=d.get("max_parallel", 4),
            retry_max=d.get("retry_max", 3),
            backoff_base_ms=d.get("backoff_base_ms", 250),
        )


def replay_profile(max_parallel: int = 8) -> ProviderProfile:
    return ProviderProfile(
        name=REPLAY_PROVIDER,
        endpoint_url="replay:",
        auth_env_var="",
        max_parallel=max_parallel,
        retry_max=0,
    )


@dataclass(frozen=True)
class CompletionRequest:
    model: ModelRef
    prompt: PromptText
    max_output_tokens: int = 1024
    temperature: float | None = None

    def __post_init__(self) -> None:
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be > 0")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    latency_ms: int = 0
    provider_meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")


def replay_key(model_name: str, prompt: PromptText) -> str:
    """Content hash identifying one (model, prompt) exchange.

    Hashes template id, template version, and slot values instead of the full
    prompt text; any byte change to a template asset changes its version and
    therefore every key rendered from it.
    """
    return content_digest(
        {
            "model_name": model_name,
            "template_id": prompt.template_id.value,
            "template_version": template_version(prompt.template_id),
            "slots": prompt.slots,
        }
    )


class ReplayFixture:
    """Recorded prompt -> response mapping, stored as JSONL of {key, text}."""

    def __init__(self, entries: dict[str, str] | None = None):
        self._entries: dict[str, str] = dict(entries or {})
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def lookup(self, key: str, detail: str = "") -> str:
        try:
            return self._entries[key]
        except KeyError:
            raise FixtureMiss(key, detail) from None

    def record(self, key: str, text: str) -> None:
        with self._lock:
            self._entries[key] = text

    @classmethod
    def load(cls, path: str | Path) -> "ReplayFixture":
        entries: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                entries[record["key"]] = record["text"]
        return cls(entries)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self._entries):
                fh.write(canonical_json({"key": key, "text": self._entries[key]}) + "\n")


def replay_complete(fixture: ReplayFixture, request: CompletionRequest) -> CompletionResponse:
    """Deterministic lookup of a recorded response; FixtureMiss when absent."""
    key = replay_key(request.model.model_name, request.prompt)
    detail = (
        f"model={request.model.model_name} template={request.prompt.template_id.value} "
        f"slots={canonical_json(request.prompt.slots)}"
    )
    text = fixture.lookup(key, detail)
    return CompletionResponse(text=text, latency_ms=0, provider_meta={"replay_key": key})


class ProviderGateway:
    """Shareable client for one provider profile.

    Enforces the profile's in-flight concurrency cap and nothing else;
    responses may complete out of request order.
    """

    def __init__(
        self,
        profile: ProviderProfile,
        *,
        fixture: ReplayFixture | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        timeout_s: float = 60.0,
    ):
        if profile.is_replay and fixture is None:
            raise ValueError(f"profile {profile.name} is a replay profile but no fixture was given")
        self.profile = profile
        self._fixture = fixture
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._semaphore = threading.BoundedSemaphore(profile.max_parallel)
        self._client: httpx.Client | None = None
        if not profile.is_replay:
            self._client = httpx.Client(transport=transport, timeout=timeout_s)

    def close(self) -> None:
        if self._client is not None:
            self._client.close()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._semaphore:
            if self.profile.is_replay:
                assert self._fixture is not None
                return replay_complete(self._fixture, request)
            return self._complete_http(request)

    # -- live transport ----------------------------------------------------

    def _auth_headers(self) -> dict[str, str]:
        if not self.profile.auth_env_var:
            return {}
        token = os.environ.get(self.profile.auth_env_var)
        if not token:
            raise AuthMissing(
                f"environment variable {self.profile.auth_env_var} is not set "
                f"(required by profile {self.profile.name})"
            )
        return {"Authorization": f"Bearer {token}"}

    def _payload(self, request: CompletionRequest) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "model": request.model.model_name,
            "messages": [{"role": "user", "content": request.prompt.text}],
            "max_tokens": request.max_output_tokens,
        }
        temperature = (
            request.temperature if request.temperature is not None else request.model.temperature
        )
        if temperature is not None:
            payload["temperature"] = temperature
        return payload

    def _complete_http(self, request: CompletionRequest) -> CompletionResponse:
        assert self._client is not None
        headers = self._auth_headers()
        payload = self._payload(request)
        started = time.monotonic()
        last_cause: Exception | None = None
        for attempt in range(self.profile.retry_max + 1):
            try:
                response = self._client.post(
                    self.profile.endpoint_url, json=payload, headers=headers
                )
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_cause = exc
            else:
                if response.status_code == 200:
                    text = self._extract_text(response)
                    latency_ms = int((time.monotonic() - started) * 1000)
                    return CompletionResponse(
                        text=text,
                        latency_ms=latency_ms,
                        provider_meta={"status_code": 200, "attempts": attempt + 1},
                    )
                if response.status_code not in _RETRYABLE_STATUS:
                    raise MalformedProviderReply(
                        f"provider {self.profile.name} returned status {response.status_code}: "
                        f"{response.text[:200]}"
                    )
                last_cause = httpx.HTTPStatusError(
                    f"status {response.status_code}", request=response.request, response=response
                )
            if attempt < self.profile.retry_max:
                backoff_s = self.profile.backoff_base_ms * (2**attempt) / 1000.0
                jitter_s = self._rng.uniform(0, self.profile.backoff_base_ms / 1000.0)
                self._sleep(backoff_s + jitter_s)
        raise RetriesExhausted(
            f"gave up after {self.profile.retry_max + 1} attempts against "
            f"profile {self.profile.name}: {last_cause}",
            last_cause,
        )

    @staticmethod
    def _extract_text(response: httpx.Response) -> str:
        try:
            body = response.json()
            message = body["choices"][0]["message"]
            content = message.get("content")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedProviderReply(f"cannot parse completion body: {exc}") from exc
        if content is None:
            content = ""
        if not isinstance(content, str):
            raise MalformedProviderReply(f"completion content has type {type(content).__name__}")
        return content


def complete(
    profile: ProviderProfile,
    request: CompletionRequest,
    *,
    fixture: ReplayFixture | None = None,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> CompletionResponse:
    """One-shot convenience wrapper around a throwaway gateway."""
    gateway = ProviderGateway(profile, fixture=fixture, transport=transport, sleep=sleep, rng=rng)
    try:
        return gateway.complete(request)
    finally:
        gateway.close()
