"""Bundled reference renderer, run as a separate process.

``python -m renderscore.stub`` serves the renderer protocol (see
renderscore.render) on stdio, or over a websocket with ``--ws``.  The
engine rasterizes a constrained HTML/CSS subset deterministically, which
makes it suitable as a hermetic fixture and as a fallback when no browser
bridge is configured.
"""

from .engine import SUPPORTED_SUBSET, render_page

__all__ = ["SUPPORTED_SUBSET", "render_page"]
