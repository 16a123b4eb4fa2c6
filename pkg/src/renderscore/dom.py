"""HTML document model: tolerant parsing, serialization, stats, text walk.

The parser is built on the stdlib event tokenizer and applies a documented
recovery subset of standard tree construction:

- ``head`` and ``body`` are synthesized when absent and stray top-level
  content is folded into them, so every document roots at
  ``html > (head, body)``.
- Void elements never take children; ``<tag/>`` on a non-void tag opens and
  immediately closes it.
- A start tag implicitly closes open elements that cannot contain it
  (``<p>`` before a block start, ``<li>`` before ``<li>``, table cells and
  rows, ``<option>``, definition list items).
- An end tag with no matching open element is ignored; an end tag that
  matches a non-top element pops everything above it.
- ``script`` and ``style`` bodies are kept verbatim (no entity decoding).
- Processing instructions and unknown declarations are dropped; comments
  and the doctype are preserved.

Serialization escapes text and attribute values minimally and round-trips:
``parse(serialize(parse(x)))`` equals ``parse(x)``.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser
from typing import Callable, Iterator, Union

__all__ = [
    "CommentNode",
    "DomStats",
    "ElementNode",
    "HtmlDocument",
    "Node",
    "ParseError",
    "TextNode",
    "TextSegment",
    "VOID_ELEMENTS",
    "RAW_TEXT_ELEMENTS",
    "approx_token_count",
    "compute_stats",
    "extract_text_segments",
    "parse_document",
    "serialize",
    "serialize_node",
]


class ParseError(ValueError):
    """Raised for input that cannot produce a document (empty, undecodable)."""


VOID_ELEMENTS = frozenset(
    {
        "area",
        "base",
        "br",
        "col",
        "embed",
        "hr",
        "img",
        "input",
        "link",
        "meta",
        "param",
        "source",
        "track",
        "wbr",
    }
)

RAW_TEXT_ELEMENTS = frozenset({"script", "style"})

# Tags whose content never paints as page text.
NON_RENDERED_SUBTREES = frozenset({"head", "script", "style", "title", "template", "noscript"})

# Elements allowed to live in <head>; used when folding stray top-level
# nodes into the synthesized skeleton.
_HEAD_ONLY = frozenset({"meta", "title", "base"})
_HEAD_OK = _HEAD_ONLY | {"link", "style"}

_BLOCK_STARTERS = frozenset(
    {
        "address",
        "article",
        "aside",
        "blockquote",
        "details",
        "div",
        "dl",
        "fieldset",
        "figure",
        "footer",
        "form",
        "h1",
        "h2",
        "h3",
        "h4",
        "h5",
        "h6",
        "header",
        "hr",
        "main",
        "nav",
        "ol",
        "p",
        "pre",
        "section",
        "table",
        "ul",
    }
)

# start tag -> open tags it implicitly closes (nearest first).
_IMPLIED_CLOSERS: dict[str, frozenset[str]] = {
    "li": frozenset({"li"}),
    "dt": frozenset({"dt", "dd"}),
    "dd": frozenset({"dt", "dd"}),
    "tr": frozenset({"tr", "td", "th"}),
    "td": frozenset({"td", "th"}),
    "th": frozenset({"td", "th"}),
    "option": frozenset({"option"}),
    "optgroup": frozenset({"option", "optgroup"}),
    "thead": frozenset({"tr", "td", "th", "tbody"}),
    "tbody": frozenset({"tr", "td", "th", "thead"}),
    "tfoot": frozenset({"tr", "td", "th", "tbody"}),
}
for _t in _BLOCK_STARTERS:
    _IMPLIED_CLOSERS[_t] = _IMPLIED_CLOSERS.get(_t, frozenset()) | {"p"}

# Inline formatting context that an implied close may unwind through.
_FORMATTING = frozenset(
    {"a", "b", "i", "em", "strong", "u", "s", "small", "span", "font", "code", "sub", "sup", "mark"}
)


@dataclass
class TextNode:
    text: str


@dataclass
class CommentNode:
    text: str


@dataclass
class ElementNode:
    tag: str
    attrs: dict[str, str | None] = field(default_factory=dict)
    children: list["Node"] = field(default_factory=list)

    def iter_elements(self) -> Iterator["ElementNode"]:
        """Yield this element and every descendant element, preorder."""
        yield self
        for child in self.children:
            if isinstance(child, ElementNode):
                yield from child.iter_elements()

    def find_all(self, tag: str) -> list["ElementNode"]:
        return [el for el in self.iter_elements() if el.tag == tag]

    def get_style(self) -> dict[str, str]:
        """Parse the inline style attribute into a property map."""
        raw = self.attrs.get("style") or ""
        style: dict[str, str] = {}
        for decl in raw.split(";"):
            if ":" not in decl:
                continue
            prop, _, value = decl.partition(":")
            prop = prop.strip().lower()
            if prop:
                style[prop] = value.strip()
        return style


Node = Union[ElementNode, TextNode, CommentNode]


@dataclass
class HtmlDocument:
    """A parsed page: source text, normalized tree, optional identifiers."""

    source: str
    root: ElementNode
    doctype: str | None = None
    origin_id: str = ""

    @property
    def head(self) -> ElementNode:
        return next(el for el in self.root.children if isinstance(el, ElementNode) and el.tag == "head")

    @property
    def body(self) -> ElementNode:
        return next(el for el in self.root.children if isinstance(el, ElementNode) and el.tag == "body")


@dataclass(frozen=True)
class DomStats:
    total_tags: int
    unique_tags: int
    dom_depth: int
    approx_tokens: int


@dataclass(frozen=True)
class TextSegment:
    """One visible text node: its normalized text and path from the root.

    ``node_path`` is the sequence of child indices leading from the root
    element to the text node, so the node can be relocated in the tree.
    ``visible`` is False for segments under display:none / visibility:hidden
    / [hidden]; such segments are only produced with include_hidden=True.
    """

    node_path: tuple[int, ...]
    text: str
    visible: bool = True


# ── parsing ──────────────────────────────────────────────────────────────


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.top: list[Node] = []
        self.stack: list[ElementNode] = []
        self.doctype: str | None = None

    # -- helpers

    def _append(self, node: Node) -> None:
        target = self.stack[-1].children if self.stack else self.top
        if isinstance(node, TextNode) and target and isinstance(target[-1], TextNode):
            target[-1].text += node.text
        else:
            target.append(node)

    def _implied_close(self, tag: str) -> None:
        closers = _IMPLIED_CLOSERS.get(tag)
        if not closers:
            return
        # Repeatedly pop the nearest offender (a <tr> closes both the open
        # cell and the open row), unwinding only through formatting tags.
        while True:
            popped = False
            for depth in range(len(self.stack) - 1, -1, -1):
                open_tag = self.stack[depth].tag
                if open_tag in closers:
                    del self.stack[depth:]
                    popped = True
                    break
                if open_tag not in _FORMATTING:
                    return
            if not popped:
                return

    # -- tokenizer events

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        self._implied_close(tag)
        attr_map: dict[str, str | None] = {}
        for name, value in attrs:
            attr_map.setdefault(name, value)
        element = ElementNode(tag, attr_map)
        self._append(element)
        if tag not in VOID_ELEMENTS:
            self.stack.append(element)

    def handle_startendtag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        self._implied_close(tag)
        attr_map: dict[str, str | None] = {}
        for name, value in attrs:
            attr_map.setdefault(name, value)
        self._append(ElementNode(tag, attr_map))

    def handle_endtag(self, tag: str) -> None:
        if tag in VOID_ELEMENTS:
            return
        for depth in range(len(self.stack) - 1, -1, -1):
            if self.stack[depth].tag == tag:
                del self.stack[depth:]
                return
        # No matching open element: ignore the stray end tag.

    def handle_data(self, data: str) -> None:
        if data:
            self._append(TextNode(data))

    def handle_comment(self, data: str) -> None:
        self._append(CommentNode(data))

    def handle_decl(self, decl: str) -> None:
        if self.doctype is None and decl.lower().startswith("doctype"):
            self.doctype = decl

    def handle_pi(self, data: str) -> None:  # dropped by design
        pass

    def unknown_decl(self, data: str) -> None:  # dropped by design
        pass


def _is_ws_text(node: Node) -> bool:
    return isinstance(node, TextNode) and not node.text.strip()


def _normalize_tree(top: list[Node]) -> ElementNode:
    """Fold an event-level node list into an html > (head, body) skeleton."""
    html: ElementNode | None = None
    pre: list[Node] = []
    post: list[Node] = []
    for node in top:
        if html is None and isinstance(node, ElementNode) and node.tag == "html":
            html = node
        elif html is None:
            pre.append(node)
        else:
            post.append(node)

    source_children = pre + (list(html.children) if html is not None else []) + post
    html = ElementNode("html", dict(html.attrs) if html is not None else {})

    head = ElementNode("head")
    body = ElementNode("body")
    seen_head_el = False
    seen_body = False
    in_head_phase = True
    for node in source_children:
        if _is_ws_text(node):
            continue  # inter-section formatting whitespace, not renderable
        if isinstance(node, ElementNode) and node.tag == "head":
            if not seen_head_el:
                head.attrs = dict(node.attrs)
                seen_head_el = True
            head.children.extend(node.children)
            continue
        if isinstance(node, ElementNode) and node.tag == "body":
            if not seen_body:
                body.attrs = dict(node.attrs)
                seen_body = True
            in_head_phase = False
            body.children.extend(node.children)
            continue
        if in_head_phase:
            if isinstance(node, CommentNode):
                head.children.append(node)
                continue
            if isinstance(node, ElementNode) and node.tag in _HEAD_OK:
                head.children.append(node)
                continue
            in_head_phase = False
        body.children.append(node)

    html.children = [head, body]
    return html


def parse_document(source: str | bytes, origin_id: str = "") -> HtmlDocument:
    """Parse HTML text into a normalized document tree.

    Accepts str or UTF-8 bytes.  Raises ParseError for empty input or bytes
    that do not decode.  Never raises on malformed markup: recovery rules
    (module docstring) always produce an ``html > (head, body)`` tree.
    """
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not valid UTF-8: {exc}") from None
    if not isinstance(source, str):
        raise ParseError(f"expected str or bytes, got {type(source).__name__}")
    if not source.strip():
        raise ParseError("empty document")

    builder = _TreeBuilder()
    builder.feed(source)
    builder.close()
    root = _normalize_tree(builder.top)
    return HtmlDocument(source=source, root=root, doctype=builder.doctype, origin_id=origin_id)


# ── serialization ────────────────────────────────────────────────────────


def _escape_text(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(value: str) -> str:
    return value.replace("&", "&amp;").replace('"', "&quot;")


def serialize_node(node: Node, *, include_comments: bool = True) -> str:
    parts: list[str] = []
    _serialize_into(node, parts, include_comments, raw=False)
    return "".join(parts)


def _serialize_into(node: Node, parts: list[str], include_comments: bool, raw: bool) -> None:
    if isinstance(node, TextNode):
        parts.append(node.text if raw else _escape_text(node.text))
        return
    if isinstance(node, CommentNode):
        if include_comments:
            parts.append(f"<!--{node.text}-->")
        return
    parts.append(f"<{node.tag}")
    for name, value in node.attrs.items():
        if value is None:
            parts.append(f" {name}")
        else:
            parts.append(f' {name}="{_escape_attr(value)}"')
    parts.append(">")
    if node.tag in VOID_ELEMENTS:
        return
    child_raw = node.tag in RAW_TEXT_ELEMENTS
    for child in node.children:
        _serialize_into(child, parts, include_comments, child_raw)
    parts.append(f"</{node.tag}>")


def serialize(doc: HtmlDocument, *, include_comments: bool = True) -> str:
    """Render the document tree back to HTML text."""
    prefix = f"<!{doc.doctype}>" if doc.doctype else ""
    return prefix + serialize_node(doc.root, include_comments=include_comments)


# ── statistics ───────────────────────────────────────────────────────────


def approx_token_count(text: str) -> int:
    """Cheap token estimate: one token per 4 bytes of UTF-8, rounded up."""
    return math.ceil(len(text.encode("utf-8")) / 4)


TokenCounter = Callable[[str], int]


def compute_stats(doc: HtmlDocument, token_counter: TokenCounter = approx_token_count) -> DomStats:
    """Tag totals, tag vocabulary, tree depth (root=1), token estimate.

    Tokens are counted over the comment-free serialization, so comments
    never contribute to size-based filtering.
    """
    total = 0
    tags: set[str] = set()
    max_depth = 0
    work: list[tuple[ElementNode, int]] = [(doc.root, 1)]
    while work:
        element, depth = work.pop()
        total += 1
        tags.add(element.tag)
        max_depth = max(max_depth, depth)
        for child in element.children:
            if isinstance(child, ElementNode):
                work.append((child, depth + 1))
    text = serialize(doc, include_comments=False)
    return DomStats(
        total_tags=total,
        unique_tags=len(tags),
        dom_depth=max_depth,
        approx_tokens=token_counter(text),
    )


# ── text extraction ──────────────────────────────────────────────────────

_WS_RUN = re.compile(r"\s+")


def normalize_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return _WS_RUN.sub(" ", text).strip()


def _is_hidden(element: ElementNode) -> bool:
    if "hidden" in element.attrs:
        return True
    style = element.get_style()
    if style.get("display", "").strip() == "none":
        return True
    if style.get("visibility", "").strip() == "hidden":
        return True
    return False


def extract_text_segments(doc: HtmlDocument, *, include_hidden: bool = False) -> list[TextSegment]:
    """Visible text nodes in document order, whitespace-normalized.

    Content inside head/script/style/title subtrees never appears.  Nodes
    under hidden elements are skipped unless include_hidden is set, in
    which case they are returned with visible=False.
    """
    segments: list[TextSegment] = []

    def walk(element: ElementNode, path: tuple[int, ...], hidden: bool) -> None:
        for index, child in enumerate(element.children):
            if isinstance(child, TextNode):
                text = normalize_ws(child.text)
                if text and (include_hidden or not hidden):
                    segments.append(TextSegment(path + (index,), text, visible=not hidden))
            elif isinstance(child, ElementNode):
                if child.tag in NON_RENDERED_SUBTREES:
                    continue
                walk(child, path + (index,), hidden or _is_hidden(child))

    walk(doc.root, (), _is_hidden(doc.root))
    return segments


def node_at_path(doc: HtmlDocument, path: tuple[int, ...]) -> Node:
    """Resolve a node_path produced by extract_text_segments."""
    node: Node = doc.root
    for index in path:
        if not isinstance(node, ElementNode):
            raise IndexError(f"path {path} descends through a leaf")
        node = node.children[index]
    return node


def _canonical_into(node: Node, parts: list[str]) -> None:
    if isinstance(node, TextNode):
        text = normalize_ws(node.text)
        if text:
            parts.append(_escape_text(text))
        return
    if isinstance(node, CommentNode):
        return
    parts.append(f"<{node.tag}")
    for name, value in node.attrs.items():
        parts.append(f" {name}" if value is None else f' {name}="{_escape_attr(value)}"')
    parts.append(">")
    if node.tag in VOID_ELEMENTS:
        return
    for child in node.children:
        _canonical_into(child, parts)
    parts.append(f"</{node.tag}>")


def document_digest(doc: HtmlDocument) -> str:
    """Content fingerprint insensitive to comments and formatting whitespace.

    Whitespace-only text nodes are dropped and runs inside text collapse to
    one space before hashing, so indentation/pretty-printing variants of the
    same page collide.
    """
    parts: list[str] = []
    _canonical_into(doc.root, parts)
    return hashlib.sha256("".join(parts).encode("utf-8")).hexdigest()
