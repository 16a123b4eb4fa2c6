"""Batch report assembly and output formats.

The JSON report is the canonical artifact; the CSV table and the HTML
gallery are derived views of the same data.  Aggregate means cover
successfully scored pages only; failures are listed with their pipeline
stage and never contribute to means.
"""

from __future__ import annotations

import csv
import html
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .metrics import MetricReport

__all__ = [
    "PairOutcome",
    "SCORE_DIMS",
    "assemble_report",
    "load_report",
    "write_csv",
    "write_gallery",
    "write_json",
]

SCORE_DIMS = ("block_match", "text", "position", "color", "visual")


@dataclass(frozen=True)
class PairOutcome:
    """One page pair: either a metric report or a staged failure."""

    page_id: str
    report: MetricReport | None = None
    stage: str = ""
    message: str = ""
    cause_kind: str = ""

    def __post_init__(self):
        if (self.report is None) == (not self.stage):
            raise ValueError("an outcome carries exactly one of report or failure stage")

    @property
    def ok(self) -> bool:
        return self.report is not None


def assemble_report(outcomes: Sequence[PairOutcome], provenance: Mapping[str, Any]) -> dict:
    """Build the canonical report structure; pages sorted by id."""
    pages = []
    for outcome in sorted(outcomes, key=lambda o: o.page_id):
        if outcome.ok:
            entry: dict[str, Any] = {"page_id": outcome.page_id, "status": "ok"}
            entry.update(outcome.report.to_dict())
            entry.pop("page_id", None)
            entry["page_id"] = outcome.page_id
        else:
            entry = {
                "page_id": outcome.page_id,
                "status": "failed",
                "stage": outcome.stage,
                "message": outcome.message,
            }
            if outcome.cause_kind:
                entry["cause_kind"] = outcome.cause_kind
        pages.append(entry)

    scored = [o.report for o in outcomes if o.ok]
    aggregates: dict[str, Any] = {
        "pages_scored": len(scored),
        "pages_failed": len(outcomes) - len(scored),
    }
    for dim in SCORE_DIMS:
        values = [getattr(r, dim) for r in scored]
        aggregates[dim] = sum(values) / len(values) if values else None

    return {"pages": pages, "aggregates": aggregates, "provenance": dict(provenance)}


def write_json(report: Mapping[str, Any], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


_CSV_COLUMNS = (
    "page_id",
    "status",
    *SCORE_DIMS,
    "matched_pairs",
    "ref_blocks",
    "cand_blocks",
    "stage",
    "message",
)


def write_csv(report: Mapping[str, Any], path: str | Path) -> None:
    """Per-page rows plus one AGGREGATE row recomputed from the pages."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for page in report["pages"]:
            writer.writerow({col: page.get(col, "") for col in _CSV_COLUMNS})
        scored = [p for p in report["pages"] if p["status"] == "ok"]
        aggregate_row: dict[str, Any] = {"page_id": "AGGREGATE", "status": ""}
        for dim in SCORE_DIMS:
            values = [p[dim] for p in scored]
            aggregate_row[dim] = sum(values) / len(values) if values else ""
        writer.writerow(aggregate_row)


_GALLERY_STYLE = """
body { font-family: sans-serif; margin: 1.5em; background: #fafafa; }
table { border-collapse: collapse; width: 100%; }
th, td { border: 1px solid #ccc; padding: 6px 10px; text-align: left; vertical-align: top; }
th { background: #eee; }
iframe { width: 460px; height: 320px; border: 1px solid #999; background: #fff; }
td.scores { white-space: nowrap; font-variant-numeric: tabular-nums; }
tr.failed td { background: #fbeaea; }
"""


def write_gallery(
    report: Mapping[str, Any],
    path: str | Path,
    ref_dir: str | Path,
    cand_dir: str | Path,
) -> None:
    """Static side-by-side page: reference, candidate, and scores per row."""
    path = Path(path)
    base = path.parent

    def rel(directory: str | Path, page_id: str) -> str:
        return os.path.relpath(Path(directory) / f"{page_id}.html", base)

    rows = []
    for page in report["pages"]:
        pid = html.escape(page["page_id"])
        if page["status"] == "ok":
            scores = "<br>".join(
                f"{dim}: {page[dim]:.4f}" for dim in SCORE_DIMS
            )
            rows.append(
                f"<tr><td>{pid}</td>"
                f'<td><iframe src="{html.escape(rel(ref_dir, page["page_id"]))}" loading="lazy"></iframe></td>'
                f'<td><iframe src="{html.escape(rel(cand_dir, page["page_id"]))}" loading="lazy"></iframe></td>'
                f'<td class="scores">{scores}</td></tr>'
            )
        else:
            reason = html.escape(f'{page["stage"]}: {page["message"]}')
            rows.append(
                f'<tr class="failed"><td>{pid}</td><td colspan="2">{reason}</td><td></td></tr>'
            )

    aggregates = report["aggregates"]
    summary = ", ".join(
        f"{dim} {aggregates[dim]:.4f}" for dim in SCORE_DIMS if aggregates[dim] is not None
    )
    doc = (
        "<!DOCTYPE html><html><head><meta charset='utf-8'>"
        "<title>Fidelity report</title>"
        f"<style>{_GALLERY_STYLE}</style></head><body>"
        f"<h1>Fidelity report</h1>"
        f"<p>{aggregates['pages_scored']} scored, {aggregates['pages_failed']} failed"
        f"{'. Means: ' + summary if summary else ''}</p>"
        "<table><tr><th>page</th><th>reference</th><th>candidate</th><th>scores</th></tr>"
        + "".join(rows)
        + "</table></body></html>"
    )
    path.write_text(doc, encoding="utf-8")
