"""renderscore: visual fidelity scoring for HTML reproductions of webpages.

The package measures how faithfully a candidate HTML/CSS page reproduces a
reference page.  It renders both sides through an external renderer process,
detects visible text blocks with a color-instrumentation trick (no OCR),
matches blocks across the two pages, and scores five dimensions: block
coverage, text, position, color, and whole-image visual similarity.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .dom import (
    CommentNode,
    DomStats,
    ElementNode,
    HtmlDocument,
    ParseError,
    TextNode,
    TextSegment,
    compute_stats,
    extract_text_segments,
    parse_document,
    serialize,
)
from .curate import FilterVerdict, dedup_key, filter_page, make_standalone
from .blocks import BlockSet, TextBlock, detect_blocks
from .matching import MatchResult, match_blocks, text_similarity
from .metrics import (
    EvaluationError,
    FallbackEmbedder,
    HttpEmbedder,
    MetricReport,
    evaluate_pair,
)
from .render import (
    DEFAULT_VIEWPORT,
    Renderer,
    RendererPool,
    Screenshot,
    SubprocessRenderer,
    Viewport,
    WebSocketRenderer,
    stub_renderer_command,
)
from .winrate import WinRateModel, fit, published_model, simulate_win_rate

__all__ = [
    "BlockSet",
    "CommentNode",
    "DEFAULT_VIEWPORT",
    "DomStats",
    "ElementNode",
    "EvaluationError",
    "FallbackEmbedder",
    "FilterVerdict",
    "HtmlDocument",
    "HttpEmbedder",
    "MatchResult",
    "MetricReport",
    "ParseError",
    "Renderer",
    "RendererPool",
    "Screenshot",
    "SubprocessRenderer",
    "TextBlock",
    "TextNode",
    "TextSegment",
    "Viewport",
    "WebSocketRenderer",
    "WinRateModel",
    "compute_stats",
    "dedup_key",
    "detect_blocks",
    "evaluate_pair",
    "extract_text_segments",
    "filter_page",
    "fit",
    "make_standalone",
    "match_blocks",
    "parse_document",
    "published_model",
    "serialize",
    "simulate_win_rate",
    "stub_renderer_command",
    "text_similarity",
    "__version__",
]
