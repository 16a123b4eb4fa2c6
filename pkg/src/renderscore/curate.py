"""Corpus curation: standalone-ization, size/content filters, dedup.

``make_standalone`` rewrites a page so it renders with no network access and
no original asset files: active and embedded content is removed, hyperlinks
are neutralized, and media sources point at a local placeholder image.  The
transform is idempotent and leaves zero external URLs in the output.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass, field, replace

from .dom import (
    CommentNode,
    ElementNode,
    HtmlDocument,
    Node,
    TextNode,
    TokenCounter,
    approx_token_count,
    document_digest,
    extract_text_segments,
    serialize,
)

__all__ = [
    "DedupIndex",
    "FilterVerdict",
    "MEDIA_PLACEHOLDER",
    "dedup_key",
    "filter_page",
    "make_standalone",
]

MEDIA_PLACEHOLDER = "rick.jpg"

# Elements removed outright: active content, embedded documents, vector
# graphics, audio, and external resource pointers.
_STRIP_TAGS = frozenset({"script", "audio", "iframe", "map", "svg", "link", "base"})

# Attributes rewritten to the placeholder when they carry a media source.
_MEDIA_SRC_TAGS = frozenset({"img", "source", "video", "track", "embed", "input"})

_IMAGERY_TAGS = frozenset({"img", "picture", "svg", "video", "canvas"})

# Fetchable absolute URL: scheme://, protocol-relative //, or a bare
# fetch scheme.  data: URIs are self-contained and stay.
_EXTERNAL_URL = re.compile(r"^\s*(?:(?:https?|ftp|wss?|ftps):)?//|^\s*(?:https?|ftp|wss?|ftps):", re.I)
_STYLE_URL = re.compile(r"url\(\s*(['\"]?)([^)'\"]*)\1\s*\)", re.I)


def _is_external(value: str) -> bool:
    return bool(_EXTERNAL_URL.match(value))


def _clone(node: Node) -> Node:
    if isinstance(node, ElementNode):
        return ElementNode(node.tag, dict(node.attrs), [_clone(c) for c in node.children])
    if isinstance(node, TextNode):
        return TextNode(node.text)
    return CommentNode(node.text)


def _scrub_style(value: str) -> str:
    def fix(match: re.Match[str]) -> str:
        url = match.group(2)
        return f"url({MEDIA_PLACEHOLDER})" if _is_external(url) else match.group(0)

    return _STYLE_URL.sub(fix, value)


def _scrub_element(el: ElementNode) -> None:
    el.children = [
        child
        for child in el.children
        if not isinstance(child, CommentNode)
        and not (isinstance(child, ElementNode) and child.tag in _STRIP_TAGS)
    ]
    attrs = el.attrs
    attrs.pop("href", None)
    if el.tag == "object":
        attrs.pop("data", None)
    attrs.pop("srcset", None)
    if el.tag in _MEDIA_SRC_TAGS and "src" in attrs:
        if el.tag != "input" or (attrs.get("type") or "").lower() == "image":
            attrs["src"] = MEDIA_PLACEHOLDER
    if "poster" in attrs:
        attrs["poster"] = MEDIA_PLACEHOLDER
    # Final sweep: nothing fetchable may survive in any attribute.
    for name in list(attrs):
        value = attrs[name]
        if value is None:
            continue
        if name == "style":
            attrs[name] = _scrub_style(value)
        elif _is_external(value):
            if name in ("src", "poster"):
                attrs[name] = MEDIA_PLACEHOLDER
            else:
                del attrs[name]
    for child in el.children:
        if isinstance(child, ElementNode):
            _scrub_element(child)


def make_standalone(doc: HtmlDocument) -> HtmlDocument:
    """Return a copy of the page that renders offline with no assets.

    Removes script/audio/iframe/map/svg/link/base subtrees and all
    comments, drops href and object-data attributes, points every media
    source at a bundled placeholder, and strips any remaining absolute URL
    from attributes (inline style url() references included).  Applying
    the transform twice yields byte-identical output.
    """
    root = _clone(doc.root)
    assert isinstance(root, ElementNode)
    _scrub_element(root)
    out = HtmlDocument(source="", root=root, doctype=doc.doctype, origin_id=doc.origin_id)
    out.source = serialize(out)
    return out


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reason: str  # "ok" | "too_long" | "only_images" | "only_text" | "duplicate"


def dedup_key(doc: HtmlDocument) -> str:
    """Content fingerprint: formatting- and comment-insensitive sha256."""
    return document_digest(doc)


class DedupIndex:
    """Thread-safe registry of dedup keys already accepted into a corpus."""

    def __init__(self) -> None:
        self._seen: set[str] = set()
        self._lock = threading.Lock()

    def add_if_new(self, key: str) -> bool:
        with self._lock:
            if key in self._seen:
                return False
            self._seen.add(key)
            return True

    def __contains__(self, key: str) -> bool:
        with self._lock:
            return key in self._seen

    def __len__(self) -> int:
        return len(self._seen)


def filter_page(
    doc: HtmlDocument,
    *,
    token_limit: int = 100_000,
    token_counter: TokenCounter = approx_token_count,
    dedup_index: DedupIndex | None = None,
) -> FilterVerdict:
    """Decide whether a page belongs in an evaluation corpus.

    Rejection reasons, checked in order: too_long (comment-free source
    exceeds token_limit), only_images (no visible text at all), only_text
    (no imagery elements), duplicate (dedup_index already has this page's
    key; the key is registered for kept pages when an index is supplied).
    """
    tokens = token_counter(serialize(doc, include_comments=False))
    if tokens > token_limit:
        return FilterVerdict(False, "too_long")
    if not extract_text_segments(doc):
        return FilterVerdict(False, "only_images")
    has_imagery = any(el.tag in _IMAGERY_TAGS for el in doc.root.iter_elements())
    if not has_imagery:
        return FilterVerdict(False, "only_text")
    if dedup_index is not None and not dedup_index.add_if_new(dedup_key(doc)):
        return FilterVerdict(False, "duplicate")
    return FilterVerdict(True, "ok")
