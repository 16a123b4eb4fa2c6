"""Run configuration loading and object construction."""

from __future__ import annotations

import json
import sys

import pytest

from renderscore.config import ConfigError, RunConfig, load_config
from renderscore.metrics import FallbackEmbedder, HttpEmbedder
from renderscore.render import SubprocessRenderer, WebSocketRenderer


def write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_defaults():
    config = load_config(None)
    assert config.renderer_command is None
    assert config.renderer_ws_url is None
    assert config.parallelism == 1
    assert config.token_limit == 100_000
    assert config.match_threshold == 0.5
    assert config.merge_budget == 50
    assert config.viewport.width == 1280


def test_full_file(tmp_path):
    path = write_config(
        tmp_path,
        {
            "renderer": {"command": [sys.executable, "-m", "renderscore.stub"], "timeout": 12},
            "viewport": {"width": 800, "height": 600, "full_page": False},
            "embedder": {"sidecar_url": "http://127.0.0.1:9999", "input_side": 224},
            "model": {"profile": "open-model", "provider": "openai-chat", "endpoint": "http://m", "model": "x"},
            "parallelism": 3,
            "token_limit": 5000,
            "match_threshold": 0.4,
            "merge_budget": 10,
        },
    )
    config = load_config(path)
    assert config.renderer_command[0] == sys.executable
    assert config.renderer_timeout == 12.0
    assert config.viewport.width == 800 and config.viewport.full_page is False
    assert config.sidecar_url == "http://127.0.0.1:9999"
    assert config.model.temperature == 0.5  # open-model profile
    assert config.model.extra == {"repetition_penalty": 1.1}
    assert config.parallelism == 3
    assert config.token_limit == 5000
    assert config.match_threshold == 0.4


def test_overrides_beat_file(tmp_path):
    path = write_config(tmp_path, {"parallelism": 2})
    config = load_config(path, parallelism=8)
    assert config.parallelism == 8


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.json")


def test_invalid_json_rejected(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="valid JSON"):
        load_config(path)


def test_unknown_keys_rejected(tmp_path):
    path = write_config(tmp_path, {"renderrer": {}})
    with pytest.raises(ConfigError, match="renderrer"):
        load_config(path)


def test_missing_renderer_binary_rejected(tmp_path):
    path = write_config(tmp_path, {"renderer": {"command": ["/no/such/binary-xyz"]}})
    with pytest.raises(ConfigError, match="not found"):
        load_config(path)


def test_command_and_ws_url_conflict():
    with pytest.raises(ConfigError, match="not both"):
        RunConfig(renderer_command=("x",), renderer_ws_url="ws://y")


def test_parallelism_floor():
    with pytest.raises(ConfigError):
        RunConfig(parallelism=0)


def test_factory_methods():
    config = RunConfig()
    renderer = config.make_renderer()
    assert isinstance(renderer, SubprocessRenderer)
    renderer.close()
    assert isinstance(config.make_embedder(), FallbackEmbedder)

    ws = RunConfig(renderer_ws_url="ws://127.0.0.1:9/render")
    assert isinstance(ws.make_renderer(), WebSocketRenderer)
    http = RunConfig(sidecar_url="http://127.0.0.1:9")
    embedder = http.make_embedder()
    assert isinstance(embedder, HttpEmbedder)
    assert embedder.input_side == 224


def test_snapshot_carries_no_secrets(tmp_path):
    path = write_config(
        tmp_path,
        {"model": {"provider": "openai-chat", "endpoint": "http://m", "credential_env": "MY_KEY"}},
    )
    snap = load_config(path).snapshot()
    assert snap["model_provider"] == "openai-chat"
    assert "MY_KEY" not in json.dumps(snap)  # env var name only lives in the config object
    assert snap["viewport"]["width"] == 1280
