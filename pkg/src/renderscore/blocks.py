"""Text-block detection by color instrumentation (no OCR).

The page is rendered three times: once untouched (baseline) and twice with
every visible text node forced to a distinct probe color, a different one
in each instrumented render.  A pixel belongs to text segment *i* iff its
color in instrumented render A quantizes to segment i's first probe color
AND its color in render B quantizes to segment i's second probe color.

Probe colors sit on a 32-level-per-channel lattice (values 4, 12, ..,
252), i.e. the centers of 8-wide bins; a pixel value matches a lattice
color iff every channel is within 3 of it.  Segment i's pair is
``(usable[i], usable[(i + P//2) % P])`` over the usable palette (lattice
minus colors near the page background), so the two renders never agree by
accident: static pixels keep one color in both renders and no segment
uses the same color twice, and distinct segments can never claim the same
pixel because the pair mapping is injective.  Cross-attribution is
structurally impossible; no tuning is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dom import (
    ElementNode,
    HtmlDocument,
    TextNode,
    extract_text_segments,
    node_at_path,
    serialize,
)
from .render import DEFAULT_VIEWPORT, Rect, Renderer, Screenshot, Viewport

__all__ = [
    "BlockSet",
    "DetectionDegenerate",
    "PaletteExhausted",
    "ProbeAssignment",
    "TextBlock",
    "assign_probe_colors",
    "detect_blocks",
    "instrument_document",
]

_LEVELS = 32
_STEP = 8
_FIRST = 4
_TOLERANCE = 3
_BACKGROUND_CLEARANCE = 12


class PaletteExhausted(RuntimeError):
    """More text segments than distinct probe colors."""


class DetectionDegenerate(RuntimeError):
    """Most instrumented segments produced no pixels; results untrustworthy."""


@dataclass(frozen=True)
class TextBlock:
    """A detected run of painted text: content, extent, dominant color."""

    text: str
    bbox: Rect
    area: float  # bbox area; for merged blocks, the sum of member areas
    color: tuple[int, int, int]
    pixel_count: int = 0
    node_path: tuple[int, ...] | None = None

    @property
    def center(self) -> tuple[float, float]:
        return (self.bbox.x + self.bbox.width / 2.0, self.bbox.y + self.bbox.height / 2.0)


@dataclass
class BlockSet:
    """All text blocks of one rendered page, in reading order."""

    blocks: list[TextBlock]
    page_width: int
    page_height: int
    background: tuple[int, int, int] = (255, 255, 255)


@dataclass(frozen=True)
class ProbeAssignment:
    """Per-segment probe color pairs plus the background they avoid."""

    colors_a: tuple[tuple[int, int, int], ...]
    colors_b: tuple[tuple[int, int, int], ...]
    background: tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.colors_a)

    def pair(self, index: int) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
        return self.colors_a[index], self.colors_b[index]


def _lattice_colors() -> np.ndarray:
    values = np.arange(_FIRST, _FIRST + _LEVELS * _STEP, _STEP)
    grid = np.stack(np.meshgrid(values, values, values, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3)  # ordered by (r, g, b)


def assign_probe_colors(
    segment_count: int, background: tuple[int, int, int] = (255, 255, 255)
) -> ProbeAssignment:
    """Pick two disjoint probe colors per segment, away from the background.

    Raises PaletteExhausted when segment_count exceeds the usable palette
    (about 32k colors), which bounds supported segments well above 4096.
    """
    lattice = _lattice_colors()
    bg = np.asarray(background, dtype=np.int64)
    usable = lattice[np.abs(lattice - bg).max(axis=1) > _BACKGROUND_CLEARANCE]
    count = len(usable)
    if segment_count > count:
        raise PaletteExhausted(f"{segment_count} segments exceed the {count}-color palette")
    offset = count // 2
    colors_a = [tuple(int(v) for v in usable[i]) for i in range(segment_count)]
    colors_b = [tuple(int(v) for v in usable[(i + offset) % count]) for i in range(segment_count)]
    return ProbeAssignment(tuple(colors_a), tuple(colors_b), tuple(int(v) for v in bg))


def instrument_document(
    doc: HtmlDocument, colors: tuple[tuple[int, int, int], ...]
) -> HtmlDocument:
    """Rewrap each visible text node in a span forcing one probe color."""
    from .curate import _clone  # tree clone helper

    segments = extract_text_segments(doc)
    if len(colors) != len(segments):
        raise ValueError(f"{len(colors)} colors for {len(segments)} segments")
    root = _clone(doc.root)
    assert isinstance(root, ElementNode)
    clone = HtmlDocument(source=doc.source, root=root, doctype=doc.doctype, origin_id=doc.origin_id)
    for segment, color in zip(segments, colors):
        parent = node_at_path(clone, segment.node_path[:-1])
        assert isinstance(parent, ElementNode)
        index = segment.node_path[-1]
        text_node = parent.children[index]
        assert isinstance(text_node, TextNode)
        r, g, b = color
        wrapper = ElementNode(
            "span",
            {"style": f"color:rgb({r},{g},{b}) !important;text-shadow:none !important"},
            [text_node],
        )
        parent.children[index] = wrapper
    clone.source = serialize(clone)
    return clone


# ── decoding ─────────────────────────────────────────────────────────────


def _quantize(pixels: np.ndarray) -> np.ndarray:
    """Map HxWx3 uint8 to a packed lattice index, or -1 off-lattice.

    A channel value v matches lattice level k=(v-1)//8 iff v % 8 != 0
    (equivalently |v - (4+8k)| <= 3); any channel off-lattice invalidates
    the pixel.
    """
    v = pixels.astype(np.int32)
    valid = (v % _STEP != 0).all(axis=-1)
    k = (v - 1) // _STEP
    packed = (k[..., 0] * _LEVELS + k[..., 1]) * _LEVELS + k[..., 2]
    return np.where(valid, packed, -1)


def _pack_color(color: tuple[int, int, int]) -> int:
    k = tuple((c - 1) // _STEP for c in color)
    return (k[0] * _LEVELS + k[1]) * _LEVELS + k[2]


def _modal_color(pixels: np.ndarray) -> tuple[int, int, int]:
    """Most frequent color; ties break toward the smallest packed value."""
    flat = pixels.reshape(-1, 3).astype(np.int64)
    packed = (flat[:, 0] << 16) | (flat[:, 1] << 8) | flat[:, 2]
    values, counts = np.unique(packed, return_counts=True)
    winner = int(values[int(np.argmax(counts))])
    return ((winner >> 16) & 0xFF, (winner >> 8) & 0xFF, winner & 0xFF)


def _border_background(shot: Screenshot) -> tuple[int, int, int]:
    px = shot.pixels
    border = np.concatenate(
        [px[0, :, :], px[-1, :, :], px[:, 0, :], px[:, -1, :]], axis=0
    ).reshape(-1, 1, 3)
    return _modal_color(border)


def detect_blocks(
    doc: HtmlDocument,
    renderer: Renderer,
    viewport: Viewport = DEFAULT_VIEWPORT,
    *,
    baseline: Screenshot | None = None,
) -> BlockSet:
    """Render, instrument twice, and decode per-segment text blocks.

    Returns blocks in reading order (top-to-bottom, then left-to-right).
    Segments that paint no pixels are omitted; if more than half of them
    vanish the run raises DetectionDegenerate rather than return garbage.
    A precomputed baseline screenshot may be passed to save one render.
    """
    if baseline is None:
        baseline = renderer.render(serialize(doc), viewport, doc_ref=doc.origin_id)
    segments = extract_text_segments(doc)
    background = _border_background(baseline)
    if not segments:
        return BlockSet([], baseline.width, baseline.height, background)

    assignment = assign_probe_colors(len(segments), background)
    shot_a = renderer.render(serialize(instrument_document(doc, assignment.colors_a)), viewport)
    shot_b = renderer.render(serialize(instrument_document(doc, assignment.colors_b)), viewport)

    height = min(baseline.height, shot_a.height, shot_b.height)
    width = min(baseline.width, shot_a.width, shot_b.width)
    qa = _quantize(shot_a.pixels[:height, :width])
    qb = _quantize(shot_b.pixels[:height, :width])

    size = _LEVELS**3
    lut_a = np.zeros(size + 1, dtype=np.int32)  # slot [size] absorbs qa == -1
    lut_b = np.zeros(size + 1, dtype=np.int32)
    for i in range(len(segments)):
        lut_a[_pack_color(assignment.colors_a[i])] = i + 1
        lut_b[_pack_color(assignment.colors_b[i])] = i + 1
    ida = lut_a[qa]
    idb = lut_b[qb]
    hit = (ida > 0) & (ida == idb)

    ys, xs = np.nonzero(hit)
    seg_ids = ida[ys, xs] - 1

    blocks: list[TextBlock] = []
    missing = 0
    base_px = baseline.pixels[:height, :width]
    order = np.argsort(seg_ids, kind="stable")
    sorted_ids = seg_ids[order]
    boundaries = np.searchsorted(sorted_ids, np.arange(len(segments) + 1))
    for i, segment in enumerate(segments):
        lo, hi = boundaries[i], boundaries[i + 1]
        if lo == hi:
            missing += 1
            continue
        sel = order[lo:hi]
        sy, sx = ys[sel], xs[sel]
        x0, x1 = int(sx.min()), int(sx.max())
        y0, y1 = int(sy.min()), int(sy.max())
        bbox = Rect(float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))
        color = _modal_color(base_px[sy, sx].reshape(-1, 1, 3))
        blocks.append(
            TextBlock(
                text=segment.text,
                bbox=bbox,
                area=bbox.area(),
                color=color,
                pixel_count=int(len(sel)),
                node_path=segment.node_path,
            )
        )
    if missing * 2 > len(segments):
        raise DetectionDegenerate(
            f"{missing} of {len(segments)} instrumented segments painted no pixels"
        )
    blocks.sort(key=lambda b: (b.bbox.y, b.bbox.x))
    return BlockSet(blocks, baseline.width, baseline.height, background)
