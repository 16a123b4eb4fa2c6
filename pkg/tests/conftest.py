"""Shared fixtures: a session-scoped reference renderer subprocess."""

from __future__ import annotations

import pytest

from renderscore.render import SubprocessRenderer, stub_renderer_command


@pytest.fixture(scope="session")
def stub():
    client = SubprocessRenderer(stub_renderer_command(), timeout=30.0)
    yield client
    client.close()
