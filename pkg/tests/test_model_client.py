"""Model transport: adapters, retries, credentials, and the mock provider."""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from renderscore.model_client import (
    AuthFailure,
    GenerationConfig,
    ModelResponse,
    ProviderError,
    RateLimited,
    call_model,
    profile,
)
from renderscore.prompts import build_direct_prompt, build_text_augmented_prompt
from renderscore.render import Screenshot, Viewport


def shot():
    return Screenshot(np.full((5, 5, 3), 128, np.uint8), Viewport(), "t")


# ── configuration ────────────────────────────────────────────────────────


def test_config_defaults_match_decoding_contract():
    config = GenerationConfig()
    assert config.max_new_tokens == 4096
    assert config.temperature == 0.0
    assert config.max_retries == 3


def test_config_validation():
    with pytest.raises(ValueError):
        GenerationConfig(max_new_tokens=0)
    with pytest.raises(ValueError):
        GenerationConfig(provider="carrier-pigeon")


def test_profiles():
    greedy = profile("greedy")
    assert greedy.temperature == 0.0 and greedy.extra == {}
    open_model = profile("open-model")
    assert open_model.temperature == 0.5
    assert open_model.extra == {"repetition_penalty": 1.1}
    with pytest.raises(ValueError):
        profile("quantum")


def test_profile_overrides():
    config = profile("open-model", provider="openai-chat", endpoint="http://x", model="m")
    assert config.temperature == 0.5 and config.model == "m"


def test_response_validation():
    with pytest.raises(ValueError):
        ModelResponse(raw=None)


# ── mock provider ────────────────────────────────────────────────────────


def test_mock_provider_echoes_fixed_response():
    config = GenerationConfig(extra={"fixed_response": "<html><body>hi</body></html>"})
    bundle = build_direct_prompt(shot())
    first = call_model(bundle, config)
    second = call_model(bundle, config)
    assert first.raw == "<html><body>hi</body></html>"
    assert first.raw == second.raw
    assert first.usage == {"mock": True}


def test_mock_provider_accepts_callable():
    config = GenerationConfig(extra={"fixed_response": lambda b: f"<p>{b.strategy}</p>"})
    bundle = build_text_augmented_prompt(shot(), ["x"])
    assert call_model(bundle, config).raw == "<p>text_augmented</p>"


# ── scripted HTTP endpoint ───────────────────────────────────────────────


class _ScriptedModel(BaseHTTPRequestHandler):
    script: list[tuple[int, dict]] = []
    seen: list[dict] = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length)) if length else {}
        type(self).seen.append({"headers": dict(self.headers), "body": body})
        status, payload = (
            type(self).script[len(type(self).seen) - 1]
            if len(type(self).seen) <= len(type(self).script)
            else type(self).script[-1]
        )
        raw = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture()
def scripted():
    server = HTTPServer(("127.0.0.1", 0), _ScriptedModel)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()

    def program(script):
        _ScriptedModel.script = script
        _ScriptedModel.seen = []
        return f"http://127.0.0.1:{server.server_address[1]}/v1/chat"

    yield program
    server.shutdown()
    thread.join(timeout=5)


def openai_ok(text):
    return (
        200,
        {"choices": [{"message": {"content": text}}], "usage": {"total_tokens": 42}},
    )


def fast_config(endpoint, **kw):
    defaults = dict(
        provider="openai-chat", endpoint=endpoint, model="m", backoff_base=0.01, timeout=5.0
    )
    defaults.update(kw)
    return GenerationConfig(**defaults)


def test_openai_adapter_wire_shape(scripted, monkeypatch):
    monkeypatch.setenv("TEST_MODEL_KEY", "sk-123")
    endpoint = scripted([openai_ok("<p>done</p>")])
    bundle = build_direct_prompt(shot())
    response = call_model(bundle, fast_config(endpoint, credential_env="TEST_MODEL_KEY"))
    assert response.raw == "<p>done</p>"
    assert response.usage == {"total_tokens": 42}
    assert response.latency > 0
    seen = _ScriptedModel.seen[0]
    assert seen["headers"]["Authorization"] == "Bearer sk-123"
    body = seen["body"]
    assert body["model"] == "m" and body["max_tokens"] == 4096 and body["temperature"] == 0.0
    parts = body["messages"][0]["content"]
    assert parts[0] == {"type": "text", "text": bundle.text}
    prefix = "data:image/png;base64,"
    encoded = parts[1]["image_url"]["url"]
    assert encoded.startswith(prefix)
    assert base64.b64decode(encoded[len(prefix) :]) == bundle.images[0]


def test_anthropic_adapter_wire_shape(scripted, monkeypatch):
    monkeypatch.setenv("TEST_MODEL_KEY", "ak-456")
    endpoint = scripted(
        [(200, {"content": [{"type": "text", "text": "<p>a</p>"}, {"type": "text", "text": "<p>b</p>"}]})]
    )
    bundle = build_direct_prompt(shot())
    config = fast_config(endpoint, provider="anthropic-messages", credential_env="TEST_MODEL_KEY")
    response = call_model(bundle, config)
    assert response.raw == "<p>a</p><p>b</p>"
    seen = _ScriptedModel.seen[0]
    assert seen["headers"]["x-api-key"] == "ak-456"
    assert seen["headers"]["anthropic-version"] == "2023-06-01"
    image_part = seen["body"]["messages"][0]["content"][1]
    assert image_part["source"]["media_type"] == "image/png"
    assert base64.b64decode(image_part["source"]["data"]) == bundle.images[0]


def test_retries_through_throttling(scripted):
    endpoint = scripted([(429, {}), (429, {}), (429, {}), openai_ok("<p>ok</p>")])
    response = call_model(build_direct_prompt(shot()), fast_config(endpoint))
    assert response.raw == "<p>ok</p>"
    assert len(_ScriptedModel.seen) == 4


def test_rate_limited_after_budget(scripted):
    endpoint = scripted([(429, {})])
    with pytest.raises(RateLimited):
        call_model(build_direct_prompt(shot()), fast_config(endpoint, max_retries=2))
    assert len(_ScriptedModel.seen) == 3


def test_auth_failure_does_not_retry(scripted):
    endpoint = scripted([(401, {})])
    with pytest.raises(AuthFailure):
        call_model(build_direct_prompt(shot()), fast_config(endpoint))
    assert len(_ScriptedModel.seen) == 1


def test_client_error_does_not_retry(scripted):
    endpoint = scripted([(400, {"error": "bad request"})])
    with pytest.raises(ProviderError):
        call_model(build_direct_prompt(shot()), fast_config(endpoint))
    assert len(_ScriptedModel.seen) == 1


def test_server_error_is_retried(scripted):
    endpoint = scripted([(502, {}), openai_ok("<p>recovered</p>")])
    response = call_model(build_direct_prompt(shot()), fast_config(endpoint))
    assert response.raw == "<p>recovered</p>"
    assert len(_ScriptedModel.seen) == 2


def test_missing_credential_fails_before_network():
    config = GenerationConfig(
        provider="openai-chat", endpoint="http://127.0.0.1:1", credential_env="NO_SUCH_VAR_XYZ"
    )
    with pytest.raises(AuthFailure, match="NO_SUCH_VAR_XYZ"):
        call_model(build_direct_prompt(shot()), config)


def test_unreachable_endpoint_exhausts_retries():
    config = GenerationConfig(
        provider="openai-chat",
        endpoint="http://127.0.0.1:1/v1",
        backoff_base=0.01,
        timeout=0.5,
        max_retries=1,
    )
    with pytest.raises(ProviderError):
        call_model(build_direct_prompt(shot()), config)
