"""Batch commands: curate, generate, evaluate, winrate, stats.

Exit codes: 0 success, 2 usage or configuration error, 3 renderer
unavailable, 4 run drowned in render timeouts, 5 embedding service
unavailable.  Per-page failures are recorded in reports and do not
abort a batch unless they cross the majority threshold.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .curate import DedupIndex, filter_page, make_standalone
from .dom import ParseError, compute_stats, extract_text_segments, parse_document, serialize
from .metrics import EmbedderUnavailable, EvaluationError, evaluate_pair
from .model_client import AuthFailure, ModelClientError, call_model
from .prompts import (
    NoHtmlFound,
    build_direct_prompt,
    build_self_revision_prompt,
    build_text_augmented_prompt,
    extract_html,
)
from .render import RenderError, RendererPool, RendererUnavailable
from .report import (
    PairOutcome,
    SCORE_DIMS,
    assemble_report,
    load_report,
    write_csv,
    write_gallery,
    write_json,
)
from .winrate import WinRateModel, published_model, simulate_win_rate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RENDERER_UNAVAILABLE = 3
EXIT_RENDER_TIMEOUT = 4
EXIT_EMBEDDER_UNAVAILABLE = 5

FILTER_REASONS = ("ok", "too_long", "only_images", "only_text", "duplicate")


def _html_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in (".html", ".htm"))


def _require_dir(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"{what} is not a directory: {p}")
    return p


def _config_from_args(args) -> RunConfig:
    overrides = {}
    if getattr(args, "parallel", None):
        overrides["parallelism"] = args.parallel
    return load_config(args.config, **overrides)


# ── curate ───────────────────────────────────────────────────────────────


def cmd_curate(args) -> int:
    in_dir = _require_dir(args.in_dir, "input directory")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _config_from_args(args)
    token_limit = args.token_limit or config.token_limit

    counts = {reason: 0 for reason in FILTER_REASONS}
    unreadable: list[dict] = []
    index = DedupIndex()
    written = 0
    for path in _html_files(in_dir):
        try:
            doc = parse_document(path.read_bytes(), origin_id=path.name)
        except (OSError, ParseError) as exc:
            unreadable.append({"file": path.name, "error": str(exc)})
            continue
        verdict = filter_page(doc, token_limit=token_limit, dedup_index=index)
        counts[verdict.reason] += 1
        if verdict.keep:
            standalone = make_standalone(doc)
            (out_dir / path.name).write_text(standalone.source, encoding="utf-8")
            written += 1

    summary = {"counts": counts, "written": written, "unreadable": unreadable}
    (out_dir / "curation_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for reason in FILTER_REASONS:
        print(f"{reason}: {counts[reason]}")
    if unreadable:
        print(f"unreadable: {len(unreadable)}")
        for entry in unreadable:
            print(f"  {entry['file']}: {entry['error']}", file=sys.stderr)
    print(f"written: {written} -> {out_dir}")
    return EXIT_OK


# ── generate ─────────────────────────────────────────────────────────────


def _default_mock_response(bundle) -> str:
    digest = hashlib.sha256(bundle.text.encode()).hexdigest()[:12]
    return (
        "<html><head><title>mock</title></head><body>"
        f"<h1>mock {bundle.strategy}</h1><p>{digest}</p>"
        "</body></html>"
    )


def cmd_generate(args) -> int:
    ref_dir = _require_dir(args.ref_dir, "reference directory")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _config_from_args(args)
    strategy = args.strategy.replace("-", "_")

    prior_dir: Path | None = None
    if strategy == "self_revision":
        if not args.prior_dir:
            print("error: --prior-dir is required for self-revision", file=sys.stderr)
            return EXIT_USAGE
        prior_dir = _require_dir(args.prior_dir, "prior generation directory")

    model_config = config.model
    if model_config.provider == "mock" and "fixed_response" not in model_config.extra:
        extra = dict(model_config.extra)
        extra["fixed_response"] = _default_mock_response
        model_config = dataclasses.replace(model_config, extra=extra)

    files = _html_files(ref_dir)
    generated = 0
    failures: list[tuple[str, str]] = []
    renderer = config.make_renderer()
    try:
        try:
            renderer.version()
        except RendererUnavailable as exc:
            print(f"error: renderer unavailable: {exc}", file=sys.stderr)
            return EXIT_RENDERER_UNAVAILABLE
        for path in files:
            stem = path.stem
            try:
                doc = parse_document(path.read_bytes(), origin_id=path.name)
                shot = renderer.render(serialize(doc), config.viewport, doc_ref=stem)
                texts = [s.text for s in extract_text_segments(doc)]
                if strategy == "direct":
                    bundle = build_direct_prompt(shot)
                elif strategy == "text_augmented":
                    bundle = build_text_augmented_prompt(shot, texts)
                else:
                    prior_path = prior_dir / f"{stem}.html"
                    if not prior_path.exists():
                        raise FileNotFoundError(f"missing initial solution: {prior_path.name}")
                    prior_code = prior_path.read_text(encoding="utf-8")
                    prior_shot = renderer.render(prior_code, config.viewport, doc_ref=f"{stem}:prior")
                    bundle = build_self_revision_prompt(shot, prior_shot, prior_code, texts)
                response = call_model(bundle, model_config)
                page = extract_html(response.raw)
            except AuthFailure as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            except RendererUnavailable as exc:
                print(f"error: renderer unavailable: {exc}", file=sys.stderr)
                return EXIT_RENDERER_UNAVAILABLE
            except (ParseError, RenderError, ModelClientError, NoHtmlFound, OSError, ValueError) as exc:
                failures.append((stem, f"{type(exc).__name__}: {exc}"))
                continue
            (out_dir / f"{stem}.html").write_text(page, encoding="utf-8")
            transcript = bundle.to_transcript()
            transcript["response"] = response.raw
            transcript["usage"] = response.usage
            transcript["latency"] = response.latency
            (out_dir / f"{stem}.transcript.json").write_text(
                json.dumps(transcript, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            generated += 1
    finally:
        renderer.close()

    print(f"generated: {generated} / {len(files)} ({strategy})")
    for stem, why in failures:
        print(f"  failed {stem}: {why}", file=sys.stderr)
    return EXIT_OK


# ── evaluate ─────────────────────────────────────────────────────────────


def cmd_evaluate(args) -> int:
    ref_dir = _require_dir(args.ref_dir, "reference directory")
    cand_dir = _require_dir(args.cand_dir, "candidate directory")
    out_dir = Path(args.out)
    config = _config_from_args(args)

    refs = {p.stem: p for p in _html_files(ref_dir)}
    cands = {p.stem: p for p in _html_files(cand_dir)}
    outcomes: list[PairOutcome] = []
    for stem in sorted(set(refs) ^ set(cands)):
        outcomes.append(
            PairOutcome(page_id=stem, stage="parse", message="missing counterpart")
        )
    shared = sorted(set(refs) & set(cands))

    embedder = config.make_embedder()
    pool = RendererPool(config.make_renderer, size=config.parallelism)
    renderer_version = ""
    try:
        try:
            with pool.lease() as renderer:
                info = renderer.version()
                renderer_version = f"{info.get('name', '?')}/{info.get('version', '?')}"
        except RendererUnavailable as exc:
            print(f"error: renderer unavailable: {exc}", file=sys.stderr)
            return EXIT_RENDERER_UNAVAILABLE
        if config.sidecar_url:
            try:
                embedder.embedder_id  # health probe
            except EmbedderUnavailable as exc:
                print(f"error: embedding service unavailable: {exc}", file=sys.stderr)
                return EXIT_EMBEDDER_UNAVAILABLE

        def score(stem: str) -> PairOutcome:
            ref_html = refs[stem].read_bytes().decode("utf-8", errors="replace")
            cand_html = cands[stem].read_bytes().decode("utf-8", errors="replace")
            with pool.lease() as renderer:
                report = evaluate_pair(
                    ref_html,
                    cand_html,
                    renderer,
                    embedder,
                    config.viewport,
                    threshold=config.match_threshold,
                    merge_budget=config.merge_budget,
                    page_id=stem,
                    include_debug=args.debug_blocks,
                )
            return PairOutcome(page_id=stem, report=report)

        try:
            with ThreadPoolExecutor(max_workers=config.parallelism) as executor:
                futures = {executor.submit(score, stem): stem for stem in shared}
                for future in futures:
                    stem = futures[future]
                    try:
                        outcomes.append(future.result())
                    except EvaluationError as exc:
                        outcomes.append(
                            PairOutcome(
                                page_id=exc.page_id or stem,
                                stage=exc.stage,
                                message=str(exc),
                                cause_kind=exc.cause_kind,
                            )
                        )
        except RendererUnavailable as exc:
            print(f"error: renderer unavailable: {exc}", file=sys.stderr)
            return EXIT_RENDERER_UNAVAILABLE
        except EmbedderUnavailable as exc:
            print(f"error: embedding service unavailable: {exc}", file=sys.stderr)
            return EXIT_EMBEDDER_UNAVAILABLE
    finally:
        pool.close()

    provenance = {
        "config": config.snapshot(),
        "package_version": __version__,
        "renderer_version": renderer_version,
        "embedder_id": embedder.embedder_id,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    batch = assemble_report(outcomes, provenance)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(batch, out_dir / "report.json")
    write_csv(batch, out_dir / "report.csv")
    write_gallery(batch, out_dir / "gallery.html", ref_dir, cand_dir)

    aggregates = batch["aggregates"]
    print(f"scored {aggregates['pages_scored']}, failed {aggregates['pages_failed']}")
    for dim in SCORE_DIMS:
        value = aggregates[dim]
        print(f"  {dim}: {value:.4f}" if value is not None else f"  {dim}: n/a")
    print(f"report: {out_dir / 'report.json'}")

    failed = [o for o in outcomes if not o.ok]
    if outcomes and len(failed) * 2 > len(outcomes):
        timeouts = sum(1 for o in failed if o.cause_kind == "RenderTimeout")
        if timeouts * 2 >= len(failed):
            return EXIT_RENDER_TIMEOUT
        return 1
    return EXIT_OK


# ── winrate ──────────────────────────────────────────────────────────────


def cmd_winrate(args) -> int:
    for path in (args.candidate_report, args.baseline_report):
        if not Path(path).is_file():
            raise ConfigError(f"report file not found: {path}")
    candidate = load_report(args.candidate_report)
    baseline = load_report(args.baseline_report)

    cand_pages = {p["page_id"]: p for p in candidate["pages"] if p["status"] == "ok"}
    base_pages = {p["page_id"]: p for p in baseline["pages"] if p["status"] == "ok"}
    if set(cand_pages) != set(base_pages):
        extra = sorted(set(cand_pages) ^ set(base_pages))
        raise ConfigError(f"report sets are misaligned on: {', '.join(extra[:10])}")
    if not cand_pages:
        raise ConfigError("no successfully scored pages shared by both reports")

    model = WinRateModel.load(args.model_file) if args.model_file else published_model()
    for flag in model.flags:
        print(f"warning: model flag: {flag}", file=sys.stderr)

    page_ids = sorted(cand_pages)
    result = simulate_win_rate(
        model, [(cand_pages[pid], base_pages[pid]) for pid in page_ids]
    )
    print(f"win rate: {result.win_rate:.4f} ({result.wins}/{result.total})")

    out_path = Path(args.out) if args.out else Path(args.candidate_report).parent / "winrate.json"
    payload = {
        "win_rate": result.win_rate,
        "wins": result.wins,
        "total": result.total,
        "model_flags": list(model.flags),
        "per_page": [
            {"page_id": pid, "probability": prob}
            for pid, prob in zip(page_ids, result.probabilities)
        ],
    }
    out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"written: {out_path}")
    return EXIT_OK


# ── stats ────────────────────────────────────────────────────────────────


def cmd_stats(args) -> int:
    in_dir = _require_dir(args.in_dir, "input directory")
    rows = []
    unreadable = []
    for path in _html_files(in_dir):
        try:
            doc = parse_document(path.read_bytes(), origin_id=path.name)
        except (OSError, ParseError) as exc:
            unreadable.append((path.name, str(exc)))
            continue
        stats = compute_stats(doc)
        rows.append(
            {
                "file": path.name,
                "total_tags": stats.total_tags,
                "unique_tags": stats.unique_tags,
                "dom_depth": stats.dom_depth,
                "approx_tokens": stats.approx_tokens,
            }
        )

    header = f"{'file':<40} {'tags':>6} {'uniq':>5} {'depth':>5} {'tokens':>8}"
    print(header)
    for row in rows:
        print(
            f"{row['file']:<40} {row['total_tags']:>6} {row['unique_tags']:>5} "
            f"{row['dom_depth']:>5} {row['approx_tokens']:>8}"
        )
    if rows:
        def mean(key):
            return sum(r[key] for r in rows) / len(rows)

        print(
            f"{'MEAN':<40} {mean('total_tags'):>6.1f} {mean('unique_tags'):>5.1f} "
            f"{mean('dom_depth'):>5.1f} {mean('approx_tokens'):>8.1f}"
        )
    for name, why in unreadable:
        print(f"unreadable {name}: {why}", file=sys.stderr)
    if args.json:
        Path(args.json).write_text(
            json.dumps({"pages": rows}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


# ── argument parsing ─────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="renderscore",
        description="Score how faithfully candidate HTML/CSS reproduces reference pages.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="FILE", help="JSON run configuration")
    shared.add_argument("--parallel", type=int, metavar="N", help="worker count override")

    sub = parser.add_subparsers(dest="command", required=True)

    curate = sub.add_parser("curate", parents=[shared], help="standalone-ize and filter pages")
    curate.add_argument("in_dir")
    curate.add_argument("out_dir")
    curate.add_argument("--token-limit", type=int, default=0, help="length filter override")
    curate.set_defaults(func=cmd_curate)

    generate = sub.add_parser("generate", parents=[shared], help="prompt a model to rebuild pages")
    generate.add_argument("ref_dir")
    generate.add_argument("out_dir")
    generate.add_argument(
        "--strategy",
        choices=["direct", "text-augmented", "self-revision"],
        default="direct",
    )
    generate.add_argument("--prior-dir", help="prior generations (self-revision input)")
    generate.set_defaults(func=cmd_generate)

    evaluate = sub.add_parser("evaluate", parents=[shared], help="score candidates against references")
    evaluate.add_argument("ref_dir")
    evaluate.add_argument("cand_dir")
    evaluate.add_argument("--out", default="report", help="output directory")
    evaluate.add_argument(
        "--debug-blocks", action="store_true", help="include matched-block detail in the report"
    )
    evaluate.set_defaults(func=cmd_evaluate)

    winrate = sub.add_parser("winrate", parents=[shared], help="simulate preference win rate")
    winrate.add_argument("candidate_report")
    winrate.add_argument("baseline_report")
    winrate.add_argument("--model-file", help="fitted model JSON (default: shipped coefficients)")
    winrate.add_argument("--out", help="output JSON path")
    winrate.set_defaults(func=cmd_winrate)

    stats = sub.add_parser("stats", parents=[shared], help="corpus structure statistics")
    stats.add_argument("in_dir")
    stats.add_argument("--json", help="also write JSON to this path")
    stats.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
