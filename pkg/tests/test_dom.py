"""Document model: parsing recovery, stats, serialization round-trips."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renderscore.dom import (
    CommentNode,
    ElementNode,
    ParseError,
    TextNode,
    approx_token_count,
    compute_stats,
    extract_text_segments,
    node_at_path,
    parse_document,
    serialize,
)


def elements(doc):
    return list(doc.root.iter_elements())


def test_simple_page_grows_a_head():
    doc = parse_document("<html><body><p>hi</p></body></html>")
    assert [el.tag for el in elements(doc)] == ["html", "head", "body", "p"]
    p = elements(doc)[3]
    assert len(p.children) == 1
    assert isinstance(p.children[0], TextNode)
    assert p.children[0].text == "hi"


def test_bare_fragment_gets_full_skeleton():
    doc = parse_document("<p>a<p>b")
    tags = [el.tag for el in elements(doc)]
    assert tags == ["html", "head", "body", "p", "p"]
    body = doc.body
    assert [c.children[0].text for c in body.children] == ["a", "b"]


def test_explicit_structure_preserved():
    doc = parse_document("<html><head><title>t</title></head><body><div>x</div></body></html>")
    assert [el.tag for el in elements(doc)] == ["html", "head", "title", "body", "div"]


def test_head_only_elements_fold_into_head():
    doc = parse_document('<meta charset="utf-8"><title>t</title><p>body text</p>')
    head_tags = [el.tag for el in doc.head.iter_elements()]
    assert head_tags == ["head", "meta", "title"]
    assert [el.tag for el in doc.body.iter_elements()] == ["body", "p"]


def test_unclosed_list_items():
    doc = parse_document("<ul><li>a<li>b<li>c</ul>")
    ul = doc.body.children[0]
    assert isinstance(ul, ElementNode) and ul.tag == "ul"
    assert [c.tag for c in ul.children] == ["li", "li", "li"]


def test_paragraph_closed_by_block_start():
    doc = parse_document("<p>one<div>two</div>")
    body = doc.body
    assert [c.tag for c in body.children] == ["p", "div"]


def test_stray_end_tag_ignored():
    doc = parse_document("<div>a</span></div><p>b</p>")
    assert [c.tag for c in doc.body.children] == ["div", "p"]


def test_void_elements_take_no_children():
    doc = parse_document("<p>a<br>b<img src='x.png'>c</p>")
    p = doc.body.children[0]
    kinds = [(n.tag if isinstance(n, ElementNode) else n.text) for n in p.children]
    assert kinds == ["a", "br", "b", "img", "c"]
    img = p.children[3]
    assert img.attrs["src"] == "x.png"


def test_self_closed_nonvoid_is_empty_element():
    doc = parse_document("<html><head/><body><div><p>hi</p></div></body></html>")
    stats = compute_stats(doc)
    assert stats.total_tags == 5
    assert stats.unique_tags == 5
    assert stats.dom_depth == 4


def test_lone_html_synthesizes_skeleton():
    # Standard tree construction inserts head and body even here.
    doc = parse_document("<html></html>")
    stats = compute_stats(doc)
    assert stats.total_tags == 3
    assert stats.unique_tags == 3
    assert stats.dom_depth == 2


def test_stats_counts_and_depth():
    doc = parse_document("<html><body><div><div><p>x</p></div><p>y</p></div></body></html>")
    stats = compute_stats(doc)
    assert stats.total_tags == 7  # html head body div div p p
    assert stats.unique_tags == 5
    assert stats.dom_depth == 5  # html > body > div > div > p
    assert stats.total_tags >= stats.unique_tags >= 1


def test_stats_tokens_ignore_comments():
    with_comment = parse_document("<p>hi</p><!-- " + "x" * 400 + " -->")
    without = parse_document("<p>hi</p>")
    assert compute_stats(with_comment).approx_tokens == compute_stats(without).approx_tokens


def test_approx_token_count_is_ceil_of_quarter_bytes():
    assert approx_token_count("") == 0
    assert approx_token_count("abcd") == 1
    assert approx_token_count("abcde") == 2
    assert approx_token_count("é" * 2) == 1  # 2 chars, 4 utf-8 bytes


def test_empty_input_rejected():
    with pytest.raises(ParseError):
        parse_document("")
    with pytest.raises(ParseError):
        parse_document("   \n  ")


def test_bad_bytes_rejected():
    with pytest.raises(ParseError):
        parse_document(b"\xff\xfe<p>hi</p>")


def test_bytes_accepted():
    doc = parse_document("<p>café</p>".encode("utf-8"))
    seg = extract_text_segments(doc)
    assert seg[0].text == "café"


def test_doctype_preserved():
    doc = parse_document("<!DOCTYPE html><html><body><p>x</p></body></html>")
    assert doc.doctype == "DOCTYPE html"
    assert serialize(doc).startswith("<!DOCTYPE html>")


def test_comments_preserved_and_strippable():
    doc = parse_document("<div><!-- note -->x</div>")
    assert "<!-- note -->" in serialize(doc)
    assert "note" not in serialize(doc, include_comments=False)


def test_entities_decoded_once():
    doc = parse_document("<p>a &amp; b &lt;tag&gt;</p>")
    seg = extract_text_segments(doc)
    assert seg[0].text == "a & b <tag>"
    # Serialization re-escapes, so the round trip is stable.
    again = parse_document(serialize(doc))
    assert extract_text_segments(again)[0].text == "a & b <tag>"


def test_duplicate_attribute_first_wins():
    doc = parse_document('<div class="a" class="b">x</div>')
    div = doc.body.children[0]
    assert div.attrs["class"] == "a"


def test_script_content_kept_verbatim():
    src = "<html><head><script>if (a < b && c) { go(); }</script></head><body>x</body></html>"
    doc = parse_document(src)
    script = doc.head.children[0]
    assert script.tag == "script"
    assert script.children[0].text == "if (a < b && c) { go(); }"
    assert "a < b && c" in serialize(doc)


def test_roundtrip_fixed_pages():
    pages = [
        "<html><body><p>hi</p></body></html>",
        "<p>a<p>b",
        '<div style="color:red" data-x>t &amp; u</div>',
        "<!DOCTYPE html><html><head><title>T</title></head><body><ul><li>1<li>2</ul></body></html>",
        "<table><tr><td>a<td>b<tr><td>c</table>",
    ]
    for page in pages:
        once = parse_document(page)
        twice = parse_document(serialize(once))
        assert serialize(once) == serialize(twice)


_tag = st.sampled_from(["div", "p", "span", "b", "ul", "li", "h1"])
_text = st.text(alphabet=st.characters(codec="utf-8", exclude_characters="<>&\x00\r"), max_size=12)


@st.composite
def _markup(draw, depth=0):
    if depth > 3 or draw(st.booleans()):
        return draw(_text)
    tag = draw(_tag)
    inner = "".join(draw(st.lists(_markup(depth=depth + 1), max_size=3)))
    return f"<{tag}>{inner}</{tag}>"


@settings(max_examples=60, deadline=None)
@given(_markup())
def test_roundtrip_stability_property(markup):
    source = f"<html><body>{markup}</body></html>"
    once = parse_document(source)
    twice = parse_document(serialize(once))
    assert serialize(once) == serialize(twice)


def test_segments_document_order_and_paths():
    doc = parse_document("<div><p>one</p><p>two <b>three</b></p></div>first")
    # Stray top-level text lands in body after the div content.
    segs = extract_text_segments(doc)
    assert [s.text for s in segs] == ["one", "two", "three", "first"]
    for seg in segs:
        node = node_at_path(doc, seg.node_path)
        assert isinstance(node, TextNode)


def test_segments_skip_head_script_style_title():
    doc = parse_document(
        "<html><head><title>T</title><style>p{}</style></head>"
        "<body><script>var x=1;</script><p>real</p></body></html>"
    )
    segs = extract_text_segments(doc)
    assert [s.text for s in segs] == ["real"]


def test_segments_whitespace_normalized():
    doc = parse_document("<p>  a\n\t b  </p>")
    assert extract_text_segments(doc)[0].text == "a b"


def test_hidden_segments():
    doc = parse_document(
        '<div style="display:none">gone</div>'
        '<div style="visibility:hidden">also</div>'
        "<div hidden>too</div><p>shown</p>"
    )
    assert [s.text for s in extract_text_segments(doc)] == ["shown"]
    all_segs = extract_text_segments(doc, include_hidden=True)
    assert [(s.text, s.visible) for s in all_segs] == [
        ("gone", False),
        ("also", False),
        ("too", False),
        ("shown", True),
    ]
