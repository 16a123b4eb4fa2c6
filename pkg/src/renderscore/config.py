"""Run configuration: JSON file -> validated settings -> live objects.

One config file drives every CLI command.  All sections are optional;
defaults give a working local setup (bundled renderer subprocess,
dependency-free embedder, mock model).
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .metrics import Embedder, FallbackEmbedder, HttpEmbedder
from .model_client import GenerationConfig, profile
from .render import (
    DEFAULT_TIMEOUT,
    Renderer,
    SubprocessRenderer,
    Viewport,
    WebSocketRenderer,
    stub_renderer_command,
)

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """The config file is malformed or references missing resources."""


@dataclass(frozen=True)
class RunConfig:
    renderer_command: tuple[str, ...] | None = None  # None: bundled renderer
    renderer_ws_url: str | None = None  # set: connect instead of spawning
    renderer_timeout: float = DEFAULT_TIMEOUT
    viewport: Viewport = field(default_factory=Viewport)
    sidecar_url: str | None = None  # None: fallback embedder
    embedder_input_side: int = 224
    model: GenerationConfig = field(default_factory=GenerationConfig)
    parallelism: int = 1
    token_limit: int = 100_000
    match_threshold: float = 0.5
    merge_budget: int = 50

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.renderer_command and self.renderer_ws_url:
            raise ConfigError("configure either a renderer command or a ws_url, not both")

    def make_renderer(self) -> Renderer:
        if self.renderer_ws_url:
            return WebSocketRenderer(self.renderer_ws_url, timeout=self.renderer_timeout)
        command = list(self.renderer_command or stub_renderer_command())
        return SubprocessRenderer(command, timeout=self.renderer_timeout)

    def make_embedder(self) -> Embedder:
        if self.sidecar_url:
            return HttpEmbedder(self.sidecar_url, input_side=self.embedder_input_side)
        return FallbackEmbedder()

    def snapshot(self) -> dict[str, Any]:
        """Provenance copy for reports; credentials stay as env var names."""
        return {
            "renderer_command": list(self.renderer_command) if self.renderer_command else None,
            "renderer_ws_url": self.renderer_ws_url,
            "viewport": self.viewport.to_wire(),
            "sidecar_url": self.sidecar_url,
            "model_provider": self.model.provider,
            "model": self.model.model,
            "parallelism": self.parallelism,
            "token_limit": self.token_limit,
            "match_threshold": self.match_threshold,
            "merge_budget": self.merge_budget,
        }


def _build_model(section: Mapping[str, Any]) -> GenerationConfig:
    section = dict(section)
    name = section.pop("profile", "greedy")
    try:
        return profile(name, **section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model section: {exc}") from None


def _build_viewport(section: Mapping[str, Any]) -> Viewport:
    try:
        return Viewport(**section)
    except TypeError as exc:
        raise ConfigError(f"viewport section: {exc}") from None


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read a JSON config file; keyword overrides win over file values."""
    data: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")

    known = {
        "renderer",
        "viewport",
        "embedder",
        "model",
        "parallelism",
        "token_limit",
        "match_threshold",
        "merge_budget",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    kwargs: dict[str, Any] = {}
    renderer = data.get("renderer", {})
    if "command" in renderer:
        command = renderer["command"]
        if not isinstance(command, list) or not all(isinstance(c, str) for c in command):
            raise ConfigError("renderer.command must be a list of strings")
        if shutil.which(command[0]) is None and not Path(command[0]).exists():
            raise ConfigError(f"renderer command not found: {command[0]}")
        kwargs["renderer_command"] = tuple(command)
    if "ws_url" in renderer:
        kwargs["renderer_ws_url"] = str(renderer["ws_url"])
    if "timeout" in renderer:
        kwargs["renderer_timeout"] = float(renderer["timeout"])
    if "viewport" in data:
        kwargs["viewport"] = _build_viewport(data["viewport"])
    embedder = data.get("embedder", {})
    if "sidecar_url" in embedder:
        kwargs["sidecar_url"] = embedder["sidecar_url"]
    if "input_side" in embedder:
        kwargs["embedder_input_side"] = int(embedder["input_side"])
    if "model" in data:
        kwargs["model"] = _build_model(data["model"])
    for key in ("parallelism", "token_limit", "merge_budget"):
        if key in data:
            kwargs[key] = int(data[key])
    if "match_threshold" in data:
        kwargs["match_threshold"] = float(data["match_threshold"])

    kwargs.update(overrides)
    try:
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
