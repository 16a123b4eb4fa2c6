"""Report assembly invariants and the three output formats."""

from __future__ import annotations

import csv
import json

import pytest

from renderscore.metrics import MetricReport
from renderscore.report import (
    PairOutcome,
    assemble_report,
    load_report,
    write_csv,
    write_gallery,
    write_json,
)


def report_for(page_id, block=1.0, text=1.0, position=1.0, color=1.0, visual=1.0):
    return MetricReport(
        block_match=block,
        text=text,
        position=position,
        color=color,
        visual=visual,
        matched_pairs=3,
        ref_blocks=3,
        cand_blocks=3,
        page_id=page_id,
        embedder_id="fallback-gray32",
    )


def outcomes_fixture():
    return [
        PairOutcome(page_id="b", report=report_for("b", block=0.5, color=0.8)),
        PairOutcome(page_id="a", report=report_for("a")),
        PairOutcome(page_id="c", stage="render", message="boom", cause_kind="RenderTimeout"),
    ]


def test_outcome_validation():
    with pytest.raises(ValueError):
        PairOutcome(page_id="x")  # neither report nor failure
    with pytest.raises(ValueError):
        PairOutcome(page_id="x", report=report_for("x"), stage="render")


def test_aggregates_cover_successes_only():
    batch = assemble_report(outcomes_fixture(), {"run": 1})
    agg = batch["aggregates"]
    assert agg["pages_scored"] == 2
    assert agg["pages_failed"] == 1
    assert agg["block_match"] == pytest.approx((1.0 + 0.5) / 2)
    assert agg["color"] == pytest.approx((1.0 + 0.8) / 2)
    assert agg["text"] == 1.0


def test_pages_sorted_and_failures_staged():
    batch = assemble_report(outcomes_fixture(), {})
    ids = [p["page_id"] for p in batch["pages"]]
    assert ids == ["a", "b", "c"]
    failed = batch["pages"][2]
    assert failed["status"] == "failed"
    assert failed["stage"] == "render"
    assert failed["cause_kind"] == "RenderTimeout"
    assert "block_match" not in failed


def test_all_failed_yields_null_means():
    outcomes = [PairOutcome(page_id="x", stage="parse", message="nope")]
    agg = assemble_report(outcomes, {})["aggregates"]
    assert agg["block_match"] is None
    assert agg["pages_scored"] == 0


def test_json_round_trip_is_deterministic(tmp_path):
    batch = assemble_report(outcomes_fixture(), {"config": {"parallelism": 2}})
    p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
    write_json(batch, p1)
    write_json(batch, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert load_report(p1) == batch


def test_csv_aggregate_row_recomputes_from_pages(tmp_path):
    batch = assemble_report(outcomes_fixture(), {})
    path = tmp_path / "report.csv"
    write_csv(batch, path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["page_id"] for r in rows] == ["a", "b", "c", "AGGREGATE"]
    scored = [r for r in rows if r["status"] == "ok"]
    recomputed = sum(float(r["block_match"]) for r in scored) / len(scored)
    assert float(rows[-1]["block_match"]) == pytest.approx(recomputed)
    assert rows[2]["stage"] == "render"


def test_gallery_links_pages_and_marks_failures(tmp_path):
    ref_dir = tmp_path / "ref"
    cand_dir = tmp_path / "cand"
    ref_dir.mkdir()
    cand_dir.mkdir()
    for stem in ("a", "b"):
        (ref_dir / f"{stem}.html").write_text("<p>r</p>")
        (cand_dir / f"{stem}.html").write_text("<p>c</p>")
    batch = assemble_report(outcomes_fixture(), {})
    out = tmp_path / "gallery.html"
    write_gallery(batch, out, ref_dir, cand_dir)
    doc = out.read_text(encoding="utf-8")
    assert 'src="ref/a.html"' in doc
    assert 'src="cand/b.html"' in doc
    assert "render: boom" in doc
    assert doc.count("<iframe") == 4  # two scored rows, two sides each
