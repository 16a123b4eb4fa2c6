"""Prompt bundles for screenshot-to-HTML generation.

Three strategies, all built around one canonical instruction text:

- direct: instruction + the reference screenshot.
- text_augmented: the direct prompt with the page's text segments
  appended one per line, so the model copies content instead of
  reading it off the image.
- self_revision: a revision instruction holding the prior generation's
  code and the text list, with both the reference screenshot and the
  prior render attached (reference first).

Also extracts the HTML payload from free-form model replies.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .dom import TextSegment
from .render import Screenshot

__all__ = [
    "DIRECT_PROMPT",
    "SELF_REVISION_TEMPLATE",
    "CODE_SLOT",
    "TEXTS_SLOT",
    "NoHtmlFound",
    "PromptBundle",
    "build_direct_prompt",
    "build_self_revision_prompt",
    "build_text_augmented_prompt",
    "extract_html",
]

DIRECT_PROMPT = (
    "You are an expert web developer who specializes in HTML and CSS. A user will "
    "provide you with a screenshot of a webpage. You need to return a single html "
    "file that uses HTML and CSS to reproduce the given website. Include all CSS "
    "code in the HTML file itself. If it involves any images, use \"rick.jpg\" as "
    "the placeholder. Some images on the webpage are replaced with a blue "
    "rectangle as the placeholder, use \"rick.jpg\" for those as well. Do not "
    "hallucinate any dependencies to external files. You do not need to include "
    "JavaScript scripts for dynamic interactions. Pay attention to things like "
    "size, text, position, and color of all the elements, as well as the overall "
    "layout. Respond with the content of the HTML+CSS file."
)

CODE_SLOT = "[generated code from text-augmented prompting]"
TEXTS_SLOT = "[extracted texts from the original webpage]"

SELF_REVISION_TEMPLATE = (
    "You are an expert web developer who specializes in HTML and CSS. I have an "
    "HTML file for implementing a webpage but it has some missing or wrong "
    "elements that are different from the original webpage. The current "
    f"implementation I have is: {CODE_SLOT}. I will provide the reference webpage "
    "that I want to build as well as the rendered webpage of the current "
    "implementation. I also provide you all the texts that I want to include in "
    f"the webpage here: {TEXTS_SLOT}. Please compare the two webpages and refer "
    "to the provided text elements to be included, and revise the original HTML "
    "implementation to make it look exactly like the reference webpage. Make sure "
    "the code is syntactically correct and can render into a well-formed webpage. "
    "You can use \"rick.jpg\" as the placeholder image file. Pay attention to "
    "things like size, text, position, and color of all the elements, as well as "
    "the overall layout. Respond directly with the content of the new revised and "
    "improved HTML file without any extra explanations."
)


class NoHtmlFound(ValueError):
    """A model reply contained no recognizable HTML markup."""


@dataclass(frozen=True)
class PromptBundle:
    """One ready-to-send request: instruction text plus image attachments."""

    strategy: str  # direct | text_augmented | self_revision
    text: str
    images: tuple[bytes, ...]  # PNG payloads, in attachment order

    def __post_init__(self):
        expected = {"direct": 1, "text_augmented": 1, "self_revision": 2}
        if self.strategy not in expected:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if len(self.images) != expected[self.strategy]:
            raise ValueError(
                f"{self.strategy} needs {expected[self.strategy]} image(s), got {len(self.images)}"
            )
        if not self.text:
            raise ValueError("prompt text must not be empty")

    def to_transcript(self) -> dict:
        """Audit record: everything but the raw image bytes."""
        import hashlib

        return {
            "strategy": self.strategy,
            "text": self.text,
            "images": [
                {"sha256": hashlib.sha256(img).hexdigest(), "bytes": len(img)}
                for img in self.images
            ],
        }


def _text_lines(texts: Sequence[TextSegment | str]) -> list[str]:
    return [t.text if isinstance(t, TextSegment) else str(t) for t in texts]


def _require_shot(shot: Screenshot, name: str) -> bytes:
    if shot is None:
        raise ValueError(f"{name} screenshot is required")
    return shot.to_png_bytes()


def build_direct_prompt(shot: Screenshot) -> PromptBundle:
    return PromptBundle(strategy="direct", text=DIRECT_PROMPT, images=(_require_shot(shot, "reference"),))


def build_text_augmented_prompt(
    shot: Screenshot, texts: Sequence[TextSegment | str]
) -> PromptBundle:
    """Direct prompt plus the page's texts, one per line, order preserved."""
    lines = _text_lines(texts)
    text = DIRECT_PROMPT if not lines else DIRECT_PROMPT + "\n" + "\n".join(lines)
    return PromptBundle(
        strategy="text_augmented", text=text, images=(_require_shot(shot, "reference"),)
    )


def build_self_revision_prompt(
    ref_shot: Screenshot,
    prev_shot: Screenshot,
    prev_code: str,
    texts: Sequence[TextSegment | str],
) -> PromptBundle:
    """Revision instruction with the prior code and texts in their slots.

    Attaches the reference screenshot first, then the prior render.
    """
    if not prev_code or not prev_code.strip():
        raise ValueError("self-revision requires the prior generation as the initial solution")
    filled = SELF_REVISION_TEMPLATE.replace(CODE_SLOT, prev_code).replace(
        TEXTS_SLOT, "\n".join(_text_lines(texts))
    )
    return PromptBundle(
        strategy="self_revision",
        text=filled,
        images=(_require_shot(ref_shot, "reference"), _require_shot(prev_shot, "previous render")),
    )


# ── reply parsing ────────────────────────────────────────────────────────

_FENCE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\r?\n(.*?)```", re.DOTALL)
_TAG = re.compile(r"<[a-zA-Z][a-zA-Z0-9-]*(?:[\s>/]|$)")


def _has_markup(text: str) -> bool:
    return bool(_TAG.search(text))


def extract_html(raw: str) -> str:
    """Pull the HTML payload out of a model reply.

    Prefers the first fenced code block that contains markup, then
    narrows to the span from the first doctype or <html> tag through the
    last </html>.  Bare HTML passes through unchanged.
    """
    body = raw
    for fence in _FENCE.findall(raw):
        if _has_markup(fence):
            body = fence
            break
    lower = body.lower()
    start = lower.find("<!doctype")
    if start < 0:
        start = lower.find("<html")
    if start >= 0:
        end = lower.rfind("</html>")
        body = body[start : end + len("</html>")] if end > start else body[start:]
    body = body.strip()
    if not _has_markup(body):
        raise NoHtmlFound("reply contains no HTML markup")
    return body
