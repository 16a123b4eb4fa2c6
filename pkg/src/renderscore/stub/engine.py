"""Deterministic layout and raster engine for the reference renderer.

Supported subset (anything else is ignored, never fatal):

- Block layout: vertical stacking, margins (no collapsing), padding,
  explicit px width/height.  Unknown elements behave as blocks.
- Inline flow: span/a/b/strong/i/em/u/s/small/code/sub/sup/mark/font/label
  contribute styled text to the parent's line flow; ``br`` breaks lines;
  greedy word wrap at the content width; line height is 1.2x font size.
- Inline ``style`` attributes only (no stylesheets): color,
  background-color, font-size (px), margin/padding and their sides (px),
  width/height (px), display (none | anything-else), ``!important``
  suffixes are stripped.  Colors: #rgb, #rrggbb, rgb()/rgba(), named.
- Tag defaults: heading font sizes, paragraph/heading/list vertical
  margins, list left padding, body margin 8.
- ``img`` paints an opaque placeholder rectangle (block-level, sized by
  width/height attributes or style, default 100x100); ``hr`` a 2px rule.
- Text renders aliased (no antialiasing), so every glyph pixel carries
  the exact requested color; font weight/family are fixed.

The engine reports, per text node, the ink bounding box of the pixels it
painted, and per element, its padding-box rectangle; both keyed by the
node's child-index path from the root element.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from PIL import Image, ImageDraw, ImageFont

from ..dom import ElementNode, HtmlDocument, Node, TextNode, normalize_ws, parse_document

__all__ = ["SUPPORTED_SUBSET", "PageRender", "render_page"]

SUPPORTED_SUBSET = {
    "properties": [
        "color",
        "background-color",
        "font-size",
        "margin",
        "margin-top",
        "margin-right",
        "margin-bottom",
        "margin-left",
        "padding",
        "padding-top",
        "padding-right",
        "padding-bottom",
        "padding-left",
        "width",
        "height",
        "display",
    ],
    "units": ["px"],
    "stylesheets": False,
    "device_scale": [1.0],
}

_INLINE_TAGS = frozenset(
    {"span", "a", "b", "strong", "i", "em", "u", "s", "small", "code", "sub", "sup", "mark", "font", "label"}
)
_SKIP_TAGS = frozenset({"head", "script", "style", "title", "template", "noscript"})

_DEFAULT_FONT_SIZES = {"h1": 32, "h2": 24, "h3": 19, "h4": 16, "h5": 13, "h6": 11, "pre": 13, "code": 13}
_DEFAULT_VMARGINS = {
    "p": (16, 16),
    "h1": (21, 21),
    "h2": (20, 20),
    "h3": (18, 18),
    "h4": (21, 21),
    "h5": (22, 22),
    "h6": (25, 25),
    "ul": (16, 16),
    "ol": (16, 16),
    "blockquote": (16, 16),
    "hr": (8, 8),
    "pre": (13, 13),
}
_DEFAULT_LEFT_PADDING = {"ul": 40, "ol": 40}
_IMG_PLACEHOLDER = (65, 105, 225)

_NAMED_COLORS = {
    "black": (0, 0, 0),
    "white": (255, 255, 255),
    "red": (255, 0, 0),
    "green": (0, 128, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 255, 0),
    "orange": (255, 165, 0),
    "purple": (128, 0, 128),
    "gray": (128, 128, 128),
    "grey": (128, 128, 128),
    "silver": (192, 192, 192),
    "maroon": (128, 0, 0),
    "navy": (0, 0, 128),
    "teal": (0, 128, 128),
    "aqua": (0, 255, 255),
    "cyan": (0, 255, 255),
    "fuchsia": (255, 0, 255),
    "magenta": (255, 0, 255),
    "lime": (0, 255, 0),
    "olive": (128, 128, 0),
    "royalblue": (65, 105, 225),
    "lightgray": (211, 211, 211),
    "lightgrey": (211, 211, 211),
    "darkgray": (169, 169, 169),
    "pink": (255, 192, 203),
    "brown": (165, 42, 42),
    "gold": (255, 215, 0),
    "beige": (245, 245, 220),
    "ivory": (255, 255, 240),
    "coral": (255, 127, 80),
    "salmon": (250, 128, 114),
    "khaki": (240, 230, 140),
    "plum": (221, 160, 221),
    "crimson": (220, 20, 60),
    "indigo": (75, 0, 130),
    "violet": (238, 130, 238),
    "turquoise": (64, 224, 208),
    "tan": (210, 180, 140),
    "sienna": (160, 82, 45),
    "slategray": (112, 128, 144),
    "steelblue": (70, 130, 180),
    "tomato": (255, 99, 71),
    "whitesmoke": (245, 245, 245),
    "lavender": (230, 230, 250),
    "midnightblue": (25, 25, 112),
    "forestgreen": (34, 139, 34),
    "firebrick": (178, 34, 34),
    "goldenrod": (218, 165, 32),
    "darkslategray": (47, 79, 79),
}

_RGB_RE = re.compile(r"rgba?\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*(?:,[^)]*)?\)", re.I)
_PX_RE = re.compile(r"(-?\d+(?:\.\d+)?)px\s*$", re.I)


def parse_color(value: str | None) -> tuple[int, int, int] | None:
    if not value:
        return None
    value = value.replace("!important", "").strip().lower()
    if value in _NAMED_COLORS:
        return _NAMED_COLORS[value]
    if value.startswith("#"):
        digits = value[1:]
        if len(digits) == 3 and all(c in "0123456789abcdef" for c in digits):
            return tuple(int(c * 2, 16) for c in digits)  # type: ignore[return-value]
        if len(digits) == 6 and all(c in "0123456789abcdef" for c in digits):
            return tuple(int(digits[i : i + 2], 16) for i in (0, 2, 4))  # type: ignore[return-value]
        return None
    match = _RGB_RE.match(value)
    if match:
        return tuple(min(255, int(g)) for g in match.groups())  # type: ignore[return-value]
    return None


def _parse_px(value: str | None) -> float | None:
    if not value:
        return None
    value = value.replace("!important", "").strip()
    match = _PX_RE.match(value)
    if match:
        return float(match.group(1))
    try:
        return float(value)  # bare numbers in width/height attributes
    except ValueError:
        return None


_FONTS: dict[int, ImageFont.FreeTypeFont] = {}


def _font(size: int) -> ImageFont.FreeTypeFont:
    size = max(5, int(size))
    if size not in _FONTS:
        _FONTS[size] = ImageFont.load_default(size=size)
    return _FONTS[size]


@dataclass
class _Style:
    color: tuple[int, int, int] = (0, 0, 0)
    font_size: int = 16


@dataclass
class _Frag:
    x: float
    y: float  # line top; finalized when the line closes
    text: str
    font_size: int
    color: tuple[int, int, int]
    path: tuple[int, ...]


@dataclass
class _Ops:
    rects: list[tuple[int, tuple[float, float, float, float], tuple[int, int, int]]] = field(
        default_factory=list
    )
    texts: list[tuple[int, _Frag]] = field(default_factory=list)
    serial: int = 0

    def next_serial(self) -> int:
        self.serial += 1
        return self.serial


class _LineFlow:
    """Greedy word-wrapping inline flow inside one block's content box."""

    def __init__(self, engine: "_Engine", x: float, y: float, width: float, base: _Style):
        self.engine = engine
        self.x = x
        self.top = y
        self.width = max(width, 1.0)
        self.base = base
        self.cursor = x
        self.line_top = y
        self.line_frags: list[_Frag] = []
        self.line_height = 0
        self.pending_space = False
        self.consumed = 0.0
        self.any_content = False

    def _line_advance(self) -> None:
        height = self.line_height or math.ceil(1.2 * self.base.font_size)
        for frag in self.line_frags:
            frag.y = self.line_top
            self.engine.ops.texts.append((self.engine.ops.next_serial(), frag))
        self.consumed = (self.line_top + height) - self.top
        self.line_top += height
        self.cursor = self.x
        self.line_frags = []
        self.line_height = 0
        self.pending_space = False

    def add_break(self) -> None:
        self.any_content = True
        self._line_advance()

    def add_text(self, raw: str, style: _Style, path: tuple[int, ...]) -> None:
        text = normalize_ws(raw)
        leading_ws = raw[:1].isspace()
        trailing_ws = raw[-1:].isspace()
        if not text:
            if raw.strip() == "" and raw:
                self.pending_space = self.pending_space or bool(self.line_frags)
            return
        self.any_content = True
        font = _font(style.font_size)
        space_w = font.getlength(" ")
        for index, word in enumerate(text.split(" ")):
            need_space = (index > 0) or (self.pending_space or (leading_ws and bool(self.line_frags)))
            word_w = font.getlength(word)
            advance = word_w + (space_w if need_space and self.cursor > self.x else 0)
            if self.line_frags and self.cursor + advance > self.x + self.width:
                self._line_advance()
                need_space = False
            elif need_space and self.cursor > self.x:
                self.cursor += space_w
            frag = _Frag(self.cursor, self.line_top, word, style.font_size, style.color, path)
            self.line_frags.append(frag)
            self.engine.text_pieces.setdefault(path, []).append(frag)
            self.cursor += word_w
            self.line_height = max(self.line_height, math.ceil(1.2 * style.font_size))
            self.pending_space = False
        self.pending_space = trailing_ws

    def finish(self) -> float:
        if self.line_frags:
            self._line_advance()
        return self.consumed if self.any_content else 0.0


class _Engine:
    def __init__(self, doc: HtmlDocument, viewport: dict):
        self.doc = doc
        self.page_width = int(viewport.get("width", 1280))
        self.view_height = int(viewport.get("height", 800))
        self.full_page = bool(viewport.get("full_page", True))
        self.ops = _Ops()
        self.text_pieces: dict[tuple[int, ...], list[_Frag]] = {}
        self.element_boxes: dict[tuple[int, ...], tuple[float, float, float, float] | None] = {}
        self.inline_paths: set[tuple[int, ...]] = set()
        self.background = (255, 255, 255)

    # -- style helpers

    @staticmethod
    def _style_decls(el: ElementNode) -> dict[str, str]:
        return {k: v.replace("!important", "").strip() for k, v in el.get_style().items()}

    @staticmethod
    def _box_px(decls: dict[str, str], base: str, defaults: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
        top, right, bottom, left = defaults
        if base in decls:
            parts = [p for p in decls[base].split() if p]
            values = [(_parse_px(p) or 0.0) for p in parts]
            if len(values) == 1:
                top = right = bottom = left = values[0]
            elif len(values) == 2:
                top = bottom = values[0]
                right = left = values[1]
            elif len(values) == 3:
                top, right, bottom = values[0], values[1], values[2]
                left = values[1]
            elif len(values) >= 4:
                top, right, bottom, left = values[:4]
        for side, idx in (("top", 0), ("right", 1), ("bottom", 2), ("left", 3)):
            key = f"{base}-{side}"
            if key in decls:
                value = _parse_px(decls[key])
                if value is not None:
                    box = [top, right, bottom, left]
                    box[idx] = value
                    top, right, bottom, left = box
        return top, right, bottom, left

    # -- layout

    def run(self) -> float:
        body = self.doc.body
        body_path = tuple(
            (i,) for i, c in enumerate(self.doc.root.children) if c is body
        )[0]
        decls = self._style_decls(body)
        bg = parse_color(decls.get("background-color"))
        if bg:
            self.background = bg
        height = self._layout_block(body, body_path, 0.0, 0.0, float(self.page_width), _Style())
        return height

    def _hidden(self, decls: dict[str, str]) -> bool:
        return decls.get("display", "").strip() == "none"

    def _layout_block(
        self, el: ElementNode, path: tuple[int, ...], x: float, y: float, avail: float, inherited: _Style
    ) -> float:
        decls = self._style_decls(el)
        if self._hidden(decls) or "hidden" in el.attrs:
            self.element_boxes[path] = None
            self._mark_subtree_hidden(el, path)
            return 0.0

        style = _Style(
            color=parse_color(decls.get("color")) or inherited.color,
            font_size=int(_parse_px(decls.get("font-size")) or _DEFAULT_FONT_SIZES.get(el.tag, inherited.font_size)),
        )
        default_vm = _DEFAULT_VMARGINS.get(el.tag, (0, 0))
        default_margin = (float(default_vm[0]), 0.0, float(default_vm[1]), 0.0)
        if el.tag == "body":
            default_margin = (8.0, 8.0, 8.0, 8.0)
        mt, mr, mb, ml = self._box_px(decls, "margin", default_margin)
        default_pad = (0.0, 0.0, 0.0, float(_DEFAULT_LEFT_PADDING.get(el.tag, 0)))
        pt, pr, pb, pl = self._box_px(decls, "padding", default_pad)

        outer_width = _parse_px(decls.get("width"))
        if outer_width is None:
            outer_width = max(avail - ml - mr, 1.0)
        else:
            outer_width += pl + pr  # width sets the content box

        if el.tag == "img":
            return self._layout_img(el, path, x, y, decls, (mt, mr, mb, ml))
        if el.tag == "hr":
            rule_y = y + mt
            self.ops.rects.append(
                (self.ops.next_serial(), (x + ml, rule_y, x + ml + outer_width, rule_y + 2), (128, 128, 128))
            )
            self.element_boxes[path] = (x + ml, rule_y, x + ml + outer_width, rule_y + 2)
            return mt + 2 + mb

        content_x = x + ml + pl
        content_y = y + mt + pt
        content_width = max(outer_width - pl - pr, 1.0)

        bg = parse_color(decls.get("background-color"))
        bg_slot = None
        if bg is not None and el.tag != "body":
            bg_slot = len(self.ops.rects)
            self.ops.rects.append((self.ops.next_serial(), (0, 0, 0, 0), bg))

        cursor = content_y
        flow: _LineFlow | None = None

        def close_flow() -> None:
            nonlocal cursor, flow
            if flow is not None:
                cursor += flow.finish()
                flow = None

        for index, child in enumerate(el.children):
            child_path = path + (index,)
            if isinstance(child, TextNode):
                if flow is None:
                    flow = _LineFlow(self, content_x, cursor, content_width, style)
                flow.add_text(child.text, style, child_path)
            elif isinstance(child, ElementNode):
                if child.tag in _SKIP_TAGS:
                    self._mark_subtree_hidden(child, child_path, include_self=True)
                    continue
                if child.tag == "br":
                    if flow is None:
                        flow = _LineFlow(self, content_x, cursor, content_width, style)
                    flow.add_break()
                elif child.tag in _INLINE_TAGS:
                    if flow is None:
                        flow = _LineFlow(self, content_x, cursor, content_width, style)
                    self._layout_inline(child, child_path, flow, style)
                else:
                    close_flow()
                    cursor += self._layout_block(child, child_path, content_x, cursor, content_width, style)
        close_flow()

        content_height = _parse_px(decls.get("height"))
        if content_height is None:
            content_height = cursor - content_y
        box = (x + ml, y + mt, x + ml + outer_width, y + mt + pt + content_height + pb)
        if bg_slot is not None:
            serial, _, color = self.ops.rects[bg_slot]
            self.ops.rects[bg_slot] = (serial, box, color)
        self.element_boxes[path] = box
        return mt + pt + content_height + pb + mb

    def _layout_inline(
        self, el: ElementNode, path: tuple[int, ...], flow: _LineFlow, inherited: _Style
    ) -> None:
        decls = self._style_decls(el)
        if self._hidden(decls) or "hidden" in el.attrs:
            self.element_boxes[path] = None
            self._mark_subtree_hidden(el, path)
            return
        style = _Style(
            color=parse_color(decls.get("color")) or inherited.color,
            font_size=int(_parse_px(decls.get("font-size")) or _DEFAULT_FONT_SIZES.get(el.tag, inherited.font_size)),
        )
        self.inline_paths.add(path)
        for index, child in enumerate(el.children):
            child_path = path + (index,)
            if isinstance(child, TextNode):
                flow.add_text(child.text, style, child_path)
            elif isinstance(child, ElementNode):
                if child.tag in _SKIP_TAGS:
                    self._mark_subtree_hidden(child, child_path, include_self=True)
                elif child.tag == "br":
                    flow.add_break()
                else:
                    # Inline children, and block-in-inline (out of subset)
                    # flattened into the same flow.
                    self._layout_inline(child, child_path, flow, style)

    def _mark_subtree_hidden(
        self, el: ElementNode, path: tuple[int, ...], *, include_self: bool = False
    ) -> None:
        if include_self:
            self.element_boxes[path] = None
        for index, child in enumerate(el.children):
            child_path = path + (index,)
            if isinstance(child, TextNode):
                self.text_pieces.setdefault(child_path, [])
            elif isinstance(child, ElementNode):
                self._mark_subtree_hidden(child, child_path, include_self=True)

    # -- raster

    def paint(self, content_height: float) -> Image.Image:
        height = max(int(math.ceil(content_height)), self.view_height if self.full_page else 0)
        if not self.full_page:
            height = self.view_height
        height = max(height, 1)
        image = Image.new("RGB", (self.page_width, height), self.background)
        draw = ImageDraw.Draw(image)
        draw.fontmode = "1"  # aliased: every painted pixel is the exact color
        ops: list[tuple[int, str, object]] = []
        for serial, box, color in self.ops.rects:
            ops.append((serial, "rect", (box, color)))
        for serial, frag in self.ops.texts:
            ops.append((serial, "text", frag))
        for _, kind, payload in sorted(ops, key=lambda t: t[0]):
            if kind == "rect":
                (x0, y0, x1, y1), color = payload  # type: ignore[misc]
                if x1 > x0 and y1 > y0:
                    draw.rectangle([x0, y0, x1 - 1, y1 - 1], fill=color)
            else:
                frag = payload  # type: ignore[assignment]
                draw.text((frag.x, frag.y), frag.text, font=_font(frag.font_size), fill=frag.color)
        return image

    # -- reporting

    def text_ink_boxes(self) -> dict[tuple[int, ...], tuple[float, float, float, float] | None]:
        out: dict[tuple[int, ...], tuple[float, float, float, float] | None] = {}
        for path, frags in self.text_pieces.items():
            box: tuple[float, float, float, float] | None = None
            for frag in frags:
                # getmask2 reproduces draw.text placement exactly: the
                # returned offset plus the mask bbox is the painted extent.
                mask, (dx, dy) = _font(frag.font_size).getmask2(frag.text, mode="1")
                mask_box = mask.getbbox()
                if mask_box is None:
                    continue
                l, t, r, b = mask_box
                piece = (frag.x + dx + l, frag.y + dy + t, frag.x + dx + r, frag.y + dy + b)
                box = piece if box is None else (
                    min(box[0], piece[0]),
                    min(box[1], piece[1]),
                    max(box[2], piece[2]),
                    max(box[3], piece[3]),
                )
            out[path] = box
        return out

    def _layout_img(self, el, path, x, y, decls, margins) -> float:
        mt, mr, mb, ml = margins
        width = _parse_px(decls.get("width")) or _parse_px(el.attrs.get("width")) or 100.0
        height = _parse_px(decls.get("height")) or _parse_px(el.attrs.get("height")) or 100.0
        box = (x + ml, y + mt, x + ml + width, y + mt + height)
        self.ops.rects.append((self.ops.next_serial(), box, _IMG_PLACEHOLDER))
        self.element_boxes[path] = box
        return mt + height + mb


@dataclass
class PageRender:
    image: Image.Image
    text_rects: dict[tuple[int, ...], tuple[float, float, float, float] | None]
    element_rects: dict[tuple[int, ...], tuple[float, float, float, float] | None]


def render_page(html: str, viewport: dict | None = None) -> PageRender:
    """Parse, lay out, and rasterize a page; report layout rectangles."""
    viewport = viewport or {}
    scale = float(viewport.get("device_scale", 1.0))
    if scale != 1.0:
        raise ValueError("unsupported: device_scale other than 1.0")
    doc = parse_document(html)
    engine = _Engine(doc, viewport)
    content_height = engine.run()
    image = engine.paint(content_height)
    text_rects = engine.text_ink_boxes()
    element_rects = dict(engine.element_boxes)
    # Inline elements report the union of their descendants' ink boxes.
    for path in engine.inline_paths:
        box: tuple[float, float, float, float] | None = None
        for text_path, piece in text_rects.items():
            if piece is None or text_path[: len(path)] != path:
                continue
            box = piece if box is None else (
                min(box[0], piece[0]),
                min(box[1], piece[1]),
                max(box[2], piece[2]),
                max(box[3], piece[3]),
            )
        element_rects[path] = box
    element_rects[()] = (0.0, 0.0, float(image.width), float(image.height))
    return PageRender(image=image, text_rects=text_rects, element_rects=element_rects)
