"""Block detection: probe palette guarantees and end-to-end decoding."""

from __future__ import annotations

import numpy as np
import pytest

from corpus import make_page
from renderscore.blocks import (
    BlockSet,
    DetectionDegenerate,
    PaletteExhausted,
    _quantize,
    assign_probe_colors,
    detect_blocks,
    instrument_document,
)
from renderscore.dom import extract_text_segments, parse_document, serialize
from renderscore.render import LayoutTarget, Viewport

VIEW = Viewport(width=800, height=600)


# ── palette ──────────────────────────────────────────────────────────────


def test_probe_colors_distinct_and_paired():
    pa = assign_probe_colors(500, background=(255, 255, 255))
    assert len(set(pa.colors_a)) == 500
    assert len(set(pa.colors_b)) == 500
    for i in range(500):
        assert pa.colors_a[i] != pa.colors_b[i]


def test_probe_colors_clear_of_background():
    bg = (250, 250, 250)
    pa = assign_probe_colors(4096, background=bg)
    for color in pa.colors_a + pa.colors_b:
        assert max(abs(c - b) for c, b in zip(color, bg)) > 12


def test_probe_colors_on_lattice():
    pa = assign_probe_colors(64)
    for color in pa.colors_a + pa.colors_b:
        assert all((c - 4) % 8 == 0 and 4 <= c <= 252 for c in color)


def test_palette_capacity_covers_4096_segments():
    assert len(assign_probe_colors(4096)) == 4096


def test_palette_exhausted():
    with pytest.raises(PaletteExhausted):
        assign_probe_colors(40_000)


def test_quantize_tolerance_window():
    # Center 4+8k matches, +-3 matches, +-4 (the bin edge) does not.
    img = np.array(
        [[[4, 4, 4], [7, 1, 4], [8, 4, 4], [0, 4, 4], [252, 255, 249]]], dtype=np.uint8
    )
    q = _quantize(img)[0]
    assert q[0] == 0
    assert q[1] == 0  # 7->level 0, 1->level 0, 4->level 0
    assert q[2] == -1  # 8 is equidistant from 4 and 12: off-lattice
    assert q[3] == -1  # 0 is 4 away from the first center
    assert q[4] == (31 * 32 + 31) * 32 + 31


# ── instrumentation ──────────────────────────────────────────────────────


def test_instrument_wraps_every_segment():
    doc = parse_document("<p>one</p><p>two <b>three</b></p>")
    segments = extract_text_segments(doc)
    colors = tuple((4 + 8 * i, 4, 4) for i in range(len(segments)))
    clone = instrument_document(doc, colors)
    html = serialize(clone)
    for r, g, b in colors:
        assert f"color:rgb({r},{g},{b}) !important" in html
    # The original document is untouched.
    assert "!important" not in serialize(doc)


def test_instrument_rejects_wrong_count():
    doc = parse_document("<p>one</p>")
    with pytest.raises(ValueError):
        instrument_document(doc, ((4, 4, 4), (12, 4, 4)))


# ── detection ────────────────────────────────────────────────────────────


def test_detect_simple_page(stub):
    doc = parse_document(
        '<html><body><h1 style="color:navy">Heading</h1>'
        '<p style="color:rgb(200,12,4)">first paragraph body</p>'
        "<p>second paragraph body</p></body></html>"
    )
    blocks = detect_blocks(doc, stub, VIEW)
    segments = extract_text_segments(doc)
    assert len(blocks.blocks) == len(segments)
    assert [b.text for b in blocks.blocks] == [s.text for s in segments]
    assert blocks.background == (255, 255, 255)
    assert blocks.blocks[0].color == (0, 0, 128)
    assert blocks.blocks[1].color == (200, 12, 4)
    assert blocks.blocks[2].color == (0, 0, 0)
    for block in blocks.blocks:
        assert block.pixel_count > 0
        assert block.area == block.bbox.area() > 0


def test_detected_boxes_match_layout_oracle(stub):
    for seed in range(3):
        html = make_page(seed)
        doc = parse_document(html)
        blocks = detect_blocks(doc, stub, VIEW)
        by_path = {b.node_path: b for b in blocks.blocks}
        segments = extract_text_segments(doc)
        targets = [LayoutTarget("text", s.node_path) for s in segments]
        rects = stub.query_layout(serialize(doc), targets, VIEW)
        for segment, rect in zip(segments, rects):
            assert rect is not None
            block = by_path.get(segment.node_path)
            assert block is not None, segment.text
            assert block.bbox.iou(rect) >= 0.9, (segment.text, block.bbox, rect)


def test_no_cross_attribution(stub):
    # Two visually adjacent same-styled segments must split exactly.
    doc = parse_document(
        "<html><body><p>alpha beta</p><p>gamma delta</p></body></html>"
    )
    blocks = detect_blocks(doc, stub, VIEW)
    assert len(blocks.blocks) == 2
    a, b = blocks.blocks
    assert a.bbox.intersection_area(b.bbox) == 0.0


def test_detect_reading_order(stub):
    doc = parse_document(
        "<html><body><p>first row</p><p>second row</p><p>third row</p></body></html>"
    )
    blocks = detect_blocks(doc, stub, VIEW)
    tops = [b.bbox.y for b in blocks.blocks]
    assert tops == sorted(tops)
    assert [b.text for b in blocks.blocks] == ["first row", "second row", "third row"]


def test_detect_empty_page(stub):
    doc = parse_document("<html><body><img src='x.png' width='50' height='50'></body></html>")
    blocks = detect_blocks(doc, stub, VIEW)
    assert blocks.blocks == []
    assert blocks.page_width == VIEW.width


def test_detect_respects_background_color(stub):
    doc = parse_document(
        '<html><body style="background-color:#202428"><p style="color:white">light text</p></body></html>'
    )
    blocks = detect_blocks(doc, stub, VIEW)
    assert blocks.background == (0x20, 0x24, 0x28)
    assert blocks.blocks[0].color == (255, 255, 255)


def test_detect_degenerate_when_most_text_is_clipped(stub):
    below_fold = "".join(f"<p>hidden row {i}</p>" for i in range(8))
    doc = parse_document(
        f'<html><body><p>visible</p><div style="height:2000px"></div>{below_fold}</body></html>'
    )
    with pytest.raises(DetectionDegenerate):
        detect_blocks(doc, stub, Viewport(width=400, height=200, full_page=False))


def test_detect_many_segments(stub):
    items = "".join(f"<li>entry number {i}</li>" for i in range(60))
    doc = parse_document(f"<html><body><ul>{items}</ul></body></html>")
    blocks = detect_blocks(doc, stub, Viewport(width=600, height=400))
    assert len(blocks.blocks) == 60
    texts = [b.text for b in blocks.blocks]
    assert texts == [f"entry number {i}" for i in range(60)]
