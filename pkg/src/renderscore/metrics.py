"""Five-dimension fidelity scores between a reference and a candidate page.

- block_match: how much of both pages' text-block mass found a partner
  (matched block sizes over total block sizes, unmatched included).
- text: mean character-overlap similarity over matched pairs.
- position: mean closeness of matched block centers, each normalized by
  its own page's dimensions; 1 - max(|dx|, |dy|).
- color: mean perceptual closeness of matched block text colors,
  1 - CIEDE2000/100.
- visual: cosine similarity of whole-page embeddings after text pixels
  are masked out and inpainted, and the image is resized to the
  embedder's square input.

All scores live in [0, 1]; higher is more faithful.
"""

from __future__ import annotations

import io
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import cv2
import numpy as np
from PIL import Image

from .blocks import BlockSet, DetectionDegenerate, PaletteExhausted, TextBlock, detect_blocks
from .colordiff import color_distance
from .dom import HtmlDocument, ParseError, parse_document, serialize
from .matching import DEFAULT_MERGE_BUDGET, DEFAULT_THRESHOLD, MatchResult, match_blocks
from .render import (
    DEFAULT_VIEWPORT,
    RenderError,
    Renderer,
    RendererUnavailable,
    Screenshot,
    Viewport,
)

__all__ = [
    "EmbedderUnavailable",
    "Embedder",
    "EmbeddingVector",
    "EvaluationError",
    "FallbackEmbedder",
    "HttpEmbedder",
    "LabColor",
    "MetricReport",
    "block_match_score",
    "color_score",
    "cosine_similarity",
    "evaluate_pair",
    "mask_and_inpaint",
    "position_score",
    "text_score",
    "visual_score",
]

LabColor = tuple[float, float, float]
EmbeddingVector = np.ndarray  # 1-D float64, L2-normalized (or all-zero)

_INPAINT_RADIUS = 3


class EmbedderUnavailable(RuntimeError):
    """The embedding backend cannot be reached or refuses the request."""


class EvaluationError(RuntimeError):
    """A pair evaluation failed at a known stage.

    ``stage`` is one of: parse, render, detect, match, metric, embed.
    ``cause_kind`` holds the underlying exception class name so callers
    can distinguish, say, timeouts from rejected pages.
    """

    def __init__(self, stage: str, message: str, *, page_id: str = "", cause_kind: str = ""):
        super().__init__(message)
        self.stage = stage
        self.page_id = page_id
        self.cause_kind = cause_kind


# ── matched-pair scores ──────────────────────────────────────────────────


def block_match_score(result: MatchResult) -> float:
    """Matched block mass over total block mass, unmatched included.

    Sizes are block areas after merge repair.  Two empty pages agree
    perfectly (1.0); text on exactly one side is total disagreement (0.0).
    """
    total = sum(b.area for b in result.merged_ref) + sum(b.area for b in result.merged_cand)
    if total == 0:
        return 1.0
    if not result.merged_ref or not result.merged_cand:
        return 0.0
    matched = sum(rb.area + cb.area for rb, cb, _ in result.pairs)
    return matched / total


def text_score(result: MatchResult) -> float:
    """Mean matched-pair text similarity; 0.0 with no matched pairs."""
    if not result.pairs:
        return 0.0
    return sum(sim for _, _, sim in result.pairs) / len(result.pairs)


def position_score(result: MatchResult, ref: BlockSet, cand: BlockSet) -> float:
    """Mean center agreement: 1 - max(|dx|, |dy|) in page-normalized units."""
    if not result.pairs:
        return 0.0
    total = 0.0
    for rb, cb, _ in result.pairs:
        rcx, rcy = rb.center
        ccx, ccy = cb.center
        dx = abs(rcx / ref.page_width - ccx / cand.page_width)
        dy = abs(rcy / ref.page_height - ccy / cand.page_height)
        total += 1.0 - max(dx, dy)
    return total / len(result.pairs)


def color_score(result: MatchResult) -> float:
    """Mean matched-pair color agreement: 1 - CIEDE2000/100, clamped."""
    if not result.pairs:
        return 0.0
    total = 0.0
    for rb, cb, _ in result.pairs:
        delta = color_distance(rb.color, cb.color)
        total += min(1.0, max(0.0, 1.0 - delta / 100.0))
    return total / len(result.pairs)


# ── visual score ─────────────────────────────────────────────────────────


def mask_and_inpaint(pixels: np.ndarray, blocks: Sequence[TextBlock]) -> np.ndarray:
    """Remove text from a screenshot: fill block boxes by inpainting.

    Fast-marching inpainting with radius 3 over the union of block
    bounding boxes.  With no blocks the image is returned unchanged
    (a copy), so pages without text are compared as-is.
    """
    if not blocks:
        return pixels.copy()
    height, width = pixels.shape[:2]
    mask = np.zeros((height, width), dtype=np.uint8)
    for block in blocks:
        x0 = max(0, int(np.floor(block.bbox.x)))
        y0 = max(0, int(np.floor(block.bbox.y)))
        x1 = min(width, int(np.ceil(block.bbox.x + block.bbox.width)))
        y1 = min(height, int(np.ceil(block.bbox.y + block.bbox.height)))
        if x1 > x0 and y1 > y0:
            mask[y0:y1, x0:x1] = 255
    if not mask.any():
        return pixels.copy()
    return cv2.inpaint(pixels, mask, _INPAINT_RADIUS, cv2.INPAINT_TELEA)


class Embedder(ABC):
    """Turns an RGB image into a fixed-length L2-normalized vector."""

    embedder_id: str
    input_side: int

    @abstractmethod
    def embed(self, pixels: np.ndarray) -> EmbeddingVector: ...


class FallbackEmbedder(Embedder):
    """Dependency-free stand-in: 32x32 grayscale thumbnail, L2-normalized.

    Exact on identical images and order-preserving for gross layout
    changes, but far less discriminative than a learned embedding; reports
    flag which embedder produced the visual score.
    """

    embedder_id = "fallback-gray32"
    input_side = 32

    def embed(self, pixels: np.ndarray) -> EmbeddingVector:
        arr = pixels.astype(np.float64)
        gray = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
        vec = gray.reshape(-1)
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec


class HttpEmbedder(Embedder):
    """Client for an embedding HTTP service (POST /embed, GET /health)."""

    def __init__(self, base_url: str, *, input_side: int = 224, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.input_side = input_side
        self.timeout = timeout
        self._id: str | None = None

    @property
    def embedder_id(self) -> str:  # type: ignore[override]
        if self._id is None:
            self._id = str(self._health().get("embedder_id", "http-embedder"))
        return self._id

    def _health(self) -> dict:
        import requests

        try:
            response = requests.get(f"{self.base_url}/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise EmbedderUnavailable(f"embedding service unreachable: {exc}") from None
        if response.status_code != 200:
            raise EmbedderUnavailable(f"embedding service not ready: HTTP {response.status_code}")
        return response.json()

    def embed(self, pixels: np.ndarray) -> EmbeddingVector:
        import requests

        buf = io.BytesIO()
        Image.fromarray(pixels.astype(np.uint8), "RGB").save(buf, "PNG")
        try:
            response = requests.post(
                f"{self.base_url}/embed",
                data=buf.getvalue(),
                headers={"Content-Type": "image/png"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise EmbedderUnavailable(f"embedding service unreachable: {exc}") from None
        if response.status_code != 200:
            raise EmbedderUnavailable(f"embedding request failed: HTTP {response.status_code}")
        payload = response.json()
        vec = np.asarray(payload["vector"], dtype=np.float64)
        if self._id is None:
            self._id = str(payload.get("embedder_id", "http-embedder"))
        return vec


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity clamped to [0, 1]; two zero vectors count as equal."""
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 and norm_b == 0.0:
        return 1.0
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return min(1.0, max(0.0, value))


def _square(pixels: np.ndarray, side: int) -> np.ndarray:
    img = Image.fromarray(pixels.astype(np.uint8), "RGB")
    return np.asarray(img.resize((side, side), Image.BILINEAR), dtype=np.uint8)


def visual_score(
    ref_shot: Screenshot,
    cand_shot: Screenshot,
    ref_blocks: Sequence[TextBlock],
    cand_blocks: Sequence[TextBlock],
    embedder: Embedder,
) -> float:
    """Whole-page similarity with text removed.

    Each screenshot is masked with its own detected blocks, inpainted,
    squared to the embedder's input size, embedded, and compared by
    cosine similarity.
    """
    ref_clean = mask_and_inpaint(ref_shot.pixels, ref_blocks)
    cand_clean = mask_and_inpaint(cand_shot.pixels, cand_blocks)
    side = embedder.input_side
    vec_ref = embedder.embed(_square(ref_clean, side))
    vec_cand = embedder.embed(_square(cand_clean, side))
    return cosine_similarity(vec_ref, vec_cand)


# ── pair evaluation ──────────────────────────────────────────────────────


@dataclass
class MetricReport:
    """Scores for one reference/candidate pair, with provenance."""

    block_match: float
    text: float
    position: float
    color: float
    visual: float
    matched_pairs: int
    ref_blocks: int
    cand_blocks: int
    page_id: str = ""
    embedder_id: str = ""
    renderer_version: str = ""
    viewport: Viewport = field(default_factory=lambda: DEFAULT_VIEWPORT)
    debug: dict[str, Any] | None = None

    def scores(self) -> dict[str, float]:
        return {
            "block_match": self.block_match,
            "text": self.text,
            "position": self.position,
            "color": self.color,
            "visual": self.visual,
        }

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = dict(self.scores())
        out.update(
            matched_pairs=self.matched_pairs,
            ref_blocks=self.ref_blocks,
            cand_blocks=self.cand_blocks,
            page_id=self.page_id,
            embedder_id=self.embedder_id,
            renderer_version=self.renderer_version,
            viewport=self.viewport.to_wire(),
        )
        if self.debug is not None:
            out["debug"] = self.debug
        return out


def _as_document(page: HtmlDocument | str, which: str, page_id: str) -> HtmlDocument:
    if isinstance(page, HtmlDocument):
        return page
    try:
        return parse_document(page)
    except ParseError as exc:
        raise EvaluationError("parse", f"{which} page failed to parse: {exc}", page_id=page_id) from None


def evaluate_pair(
    reference: HtmlDocument | str,
    candidate: HtmlDocument | str,
    renderer: Renderer,
    embedder: Embedder | None = None,
    viewport: Viewport = DEFAULT_VIEWPORT,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    merge_budget: int = DEFAULT_MERGE_BUDGET,
    page_id: str = "",
    include_debug: bool = False,
) -> MetricReport:
    """Render, detect, match, and score a candidate against its reference.

    Failures raise EvaluationError tagged with the pipeline stage so batch
    callers can report and continue.
    """
    embedder = embedder or FallbackEmbedder()
    ref_doc = _as_document(reference, "reference", page_id)
    cand_doc = _as_document(candidate, "candidate", page_id)

    try:
        ref_shot = renderer.render(serialize(ref_doc), viewport, doc_ref=f"{page_id}:ref")
        cand_shot = renderer.render(serialize(cand_doc), viewport, doc_ref=f"{page_id}:cand")
    except RendererUnavailable:
        raise  # the session is dead, not the page; callers abort the run
    except RenderError as exc:
        raise EvaluationError(
            "render", str(exc), page_id=page_id, cause_kind=type(exc).__name__
        ) from exc

    try:
        ref_blocks = detect_blocks(ref_doc, renderer, viewport, baseline=ref_shot)
        cand_blocks = detect_blocks(cand_doc, renderer, viewport, baseline=cand_shot)
    except (DetectionDegenerate, PaletteExhausted) as exc:
        raise EvaluationError(
            "detect", str(exc), page_id=page_id, cause_kind=type(exc).__name__
        ) from exc
    except RendererUnavailable:
        raise
    except RenderError as exc:
        raise EvaluationError(
            "render", str(exc), page_id=page_id, cause_kind=type(exc).__name__
        ) from exc

    try:
        result = match_blocks(
            ref_blocks.blocks, cand_blocks.blocks, threshold=threshold, merge_budget=merge_budget
        )
    except Exception as exc:
        raise EvaluationError("match", f"{type(exc).__name__}: {exc}", page_id=page_id) from exc

    try:
        block_match = block_match_score(result)
        text = text_score(result)
        position = position_score(result, ref_blocks, cand_blocks)
        color = color_score(result)
    except Exception as exc:
        raise EvaluationError("metric", f"{type(exc).__name__}: {exc}", page_id=page_id) from exc

    try:
        visual = visual_score(ref_shot, cand_shot, ref_blocks.blocks, cand_blocks.blocks, embedder)
    except EmbedderUnavailable:
        raise
    except Exception as exc:
        raise EvaluationError("embed", f"{type(exc).__name__}: {exc}", page_id=page_id) from exc

    version = ""
    version_probe = getattr(renderer, "version", None)
    if callable(version_probe):
        try:
            info = version_probe()
            version = f"{info.get('name', '?')}/{info.get('version', '?')}"
        except RenderError:
            version = ""

    debug = None
    if include_debug:
        debug = {
            "pairs": [
                {"ref_text": rb.text, "cand_text": cb.text, "similarity": sim}
                for rb, cb, sim in result.pairs
            ],
            "plan_ref": [list(g) for g in result.plan_ref.groups],
            "plan_cand": [list(g) for g in result.plan_cand.groups],
            "merge_solves": result.solves_used,
        }

    return MetricReport(
        block_match=block_match,
        text=text,
        position=position,
        color=color,
        visual=visual,
        matched_pairs=len(result.pairs),
        ref_blocks=len(result.merged_ref),
        cand_blocks=len(result.merged_cand),
        page_id=page_id,
        embedder_id=embedder.embedder_id,
        renderer_version=version,
        viewport=viewport,
        debug=debug,
    )
