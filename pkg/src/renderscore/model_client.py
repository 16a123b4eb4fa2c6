"""Provider-agnostic chat transport for prompt bundles.

One request shape (text plus ordered PNG attachments) adapted to each
provider's wire format by a thin adapter table.  Transient failures
retry with exponential backoff; auth failures do not.  A per-endpoint
token bucket bounds concurrent in-flight requests.
"""

from __future__ import annotations

import base64
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .prompts import PromptBundle

__all__ = [
    "AuthFailure",
    "GenerationConfig",
    "ModelClientError",
    "ModelResponse",
    "ProviderError",
    "RateLimited",
    "call_model",
    "profile",
]

_MAX_RETRIES = 3
_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ModelClientError(RuntimeError):
    """Base class for model transport failures."""


class AuthFailure(ModelClientError):
    """Credentials missing or rejected; retrying cannot help."""


class RateLimited(ModelClientError):
    """Still throttled after all retries."""


class ProviderError(ModelClientError):
    """The provider answered with a non-retryable error."""


@dataclass(frozen=True)
class GenerationConfig:
    """How to call the model: endpoint, decoding, retry/backoff behavior."""

    provider: str = "mock"  # mock | openai-chat | anthropic-messages
    endpoint: str = ""
    model: str = ""
    credential_env: str = ""  # env var holding the API key; "" = unauthenticated
    max_new_tokens: int = 4096
    temperature: float = 0.0  # greedy by default
    timeout: float = 120.0
    max_retries: int = _MAX_RETRIES
    backoff_base: float = 0.5  # seconds; doubles per retry
    max_in_flight: int = 4
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")
        if self.provider not in ("mock", "openai-chat", "anthropic-messages"):
            raise ValueError(f"unknown provider {self.provider!r}")

    def credential(self) -> str:
        if not self.credential_env:
            return ""
        value = os.environ.get(self.credential_env, "")
        if not value:
            raise AuthFailure(f"environment variable {self.credential_env} is not set")
        return value


def profile(name: str, **overrides) -> GenerationConfig:
    """Named decoding presets.

    "greedy" is the default commercial-model setting; "open-model" uses
    sampling with a repetition penalty, which suits open-weight models
    that loop on markup.
    """
    if name == "greedy":
        base: dict[str, Any] = {}
    elif name == "open-model":
        base = {"temperature": 0.5, "extra": {"repetition_penalty": 1.1}}
    else:
        raise ValueError(f"unknown profile {name!r}")
    base.update(overrides)
    return GenerationConfig(**base)


@dataclass(frozen=True)
class ModelResponse:
    raw: str
    usage: dict[str, Any] = field(default_factory=dict)
    latency: float = 0.0

    def __post_init__(self):
        if not isinstance(self.raw, str):
            raise ValueError("response text must be a string")


# ── per-endpoint concurrency bound ───────────────────────────────────────

_limiters: dict[str, threading.BoundedSemaphore] = {}
_limiters_lock = threading.Lock()


def _limiter(endpoint: str, capacity: int) -> threading.BoundedSemaphore:
    with _limiters_lock:
        sem = _limiters.get(endpoint)
        if sem is None:
            sem = threading.BoundedSemaphore(capacity)
            _limiters[endpoint] = sem
        return sem


# ── provider adapters ────────────────────────────────────────────────────


def _openai_request(bundle: PromptBundle, config: GenerationConfig) -> tuple[dict, dict]:
    content: list[dict] = [{"type": "text", "text": bundle.text}]
    for img in bundle.images:
        data = base64.b64encode(img).decode("ascii")
        content.append(
            {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{data}"}}
        )
    payload = {
        "model": config.model,
        "max_tokens": config.max_new_tokens,
        "temperature": config.temperature,
        "messages": [{"role": "user", "content": content}],
    }
    payload.update(config.extra)
    headers = {"Content-Type": "application/json"}
    key = config.credential()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return payload, headers


def _openai_parse(data: dict) -> tuple[str, dict]:
    return data["choices"][0]["message"]["content"], data.get("usage", {})


def _anthropic_request(bundle: PromptBundle, config: GenerationConfig) -> tuple[dict, dict]:
    content: list[dict] = [{"type": "text", "text": bundle.text}]
    for img in bundle.images:
        data = base64.b64encode(img).decode("ascii")
        content.append(
            {
                "type": "image",
                "source": {"type": "base64", "media_type": "image/png", "data": data},
            }
        )
    payload = {
        "model": config.model,
        "max_tokens": config.max_new_tokens,
        "temperature": config.temperature,
        "messages": [{"role": "user", "content": content}],
    }
    payload.update(config.extra)
    headers = {"Content-Type": "application/json", "anthropic-version": "2023-06-01"}
    key = config.credential()
    if key:
        headers["x-api-key"] = key
    return payload, headers


def _anthropic_parse(data: dict) -> tuple[str, dict]:
    text = "".join(part.get("text", "") for part in data.get("content", []))
    return text, data.get("usage", {})


_ADAPTERS: dict[str, tuple[Callable, Callable]] = {
    "openai-chat": (_openai_request, _openai_parse),
    "anthropic-messages": (_anthropic_request, _anthropic_parse),
}


# ── transport ────────────────────────────────────────────────────────────


def call_model(bundle: PromptBundle, config: GenerationConfig) -> ModelResponse:
    """One chat round trip; the bundle is never mutated.

    The mock provider answers from config.extra["fixed_response"]
    without touching the network, so generation pipelines stay testable
    and deterministic offline.
    """
    start = time.monotonic()
    if config.provider == "mock":
        raw = config.extra.get("fixed_response", "")
        if callable(raw):
            raw = raw(bundle)
        return ModelResponse(raw=str(raw), usage={"mock": True}, latency=time.monotonic() - start)

    import requests

    build, parse = _ADAPTERS[config.provider]
    payload, headers = build(bundle, config)
    limiter = _limiter(config.endpoint, config.max_in_flight)

    last_status = None
    last_message = ""
    attempts = config.max_retries + 1
    for attempt in range(attempts):
        if attempt:
            time.sleep(config.backoff_base * (2 ** (attempt - 1)))
        with limiter:
            try:
                response = requests.post(
                    config.endpoint, json=payload, headers=headers, timeout=config.timeout
                )
            except requests.RequestException as exc:
                last_status, last_message = None, str(exc)
                continue
        if response.status_code == 200:
            raw, usage = parse(response.json())
            return ModelResponse(raw=raw, usage=usage, latency=time.monotonic() - start)
        last_status = response.status_code
        last_message = response.text[:500]
        if response.status_code in (401, 403):
            raise AuthFailure(f"provider rejected credentials: HTTP {response.status_code}")
        if response.status_code not in _RETRYABLE_STATUS:
            raise ProviderError(f"HTTP {response.status_code}: {last_message}")

    if last_status == 429:
        raise RateLimited(f"still throttled after {config.max_retries} retries")
    raise ProviderError(
        f"gave up after {attempts} attempts "
        f"(last: {'HTTP ' + str(last_status) if last_status else last_message})"
    )
