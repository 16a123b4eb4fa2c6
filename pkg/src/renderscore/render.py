"""Client for an external renderer process.

The evaluation engine never lays out HTML itself: it drives a renderer
process over a small JSON protocol, one JSON object per message.

Request:  ``{"id": <int>, "method": "render"|"layout"|"version", "params": {...}}``
Response: ``{"id": <int>, "result": {...}}`` or
          ``{"id": <int>, "error": {"code": <str>, "message": <str>}}``

Methods:

- ``render``  params ``{"html", "viewport"}`` ->
  ``{"png_base64", "width", "height"}`` (full-page PNG screenshot).
- ``layout``  params ``{"html", "viewport", "targets": [{"kind": "text"|
  "element", "path": [child indices from the root element]}]}`` ->
  ``{"rects": [{"x", "y", "width", "height"} | null, ...]}``.  Text rects
  are ink bounding boxes (the painted extent); element rects are border
  boxes; null means the target did not resolve or painted nothing.
- ``version`` -> ``{"name", "version", "protocol"}``.

Error codes: ``malformed_page`` (bad HTML/params), ``unsupported``
(feature outside the renderer's subset), ``internal``.

Transports: newline-delimited JSON on stdio of a spawned subprocess
(``renderer.command`` config), or the same messages as text frames over a
websocket (``renderer.ws_url`` config; client implemented locally, RFC 6455
subset: text frames, no extensions, no outgoing fragmentation).

``viewport`` is ``{"width", "height", "device_scale", "full_page"}``.
With full_page the screenshot height is the content height (at least the
viewport height); otherwise it is clipped to the viewport.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import queue
import socket
import struct
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from typing import Iterator, Protocol, Sequence
from urllib.parse import urlparse

import numpy as np
from PIL import Image

__all__ = [
    "DEFAULT_TIMEOUT",
    "DEFAULT_VIEWPORT",
    "LayoutTarget",
    "MalformedPage",
    "Rect",
    "RenderError",
    "RenderTimeout",
    "Renderer",
    "RendererPool",
    "RendererUnavailable",
    "Screenshot",
    "SubprocessRenderer",
    "Viewport",
    "WebSocketRenderer",
    "render",
    "query_layout",
]

DEFAULT_TIMEOUT = 30.0


class RenderError(RuntimeError):
    """Base class for renderer failures."""


class RendererUnavailable(RenderError):
    """The renderer process/endpoint cannot be started or reached."""


class RenderTimeout(RenderError):
    """The renderer did not answer within the deadline."""


class MalformedPage(RenderError):
    """The renderer rejected the page or the request parameters."""


@dataclass(frozen=True)
class Viewport:
    width: int = 1280
    height: int = 800
    device_scale: float = 1.0
    full_page: bool = True

    def to_wire(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "device_scale": self.device_scale,
            "full_page": self.full_page,
        }


DEFAULT_VIEWPORT = Viewport()


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.x + self.width

    @property
    def bottom(self) -> float:
        return self.y + self.height

    def area(self) -> float:
        return self.width * self.height

    def intersection_area(self, other: "Rect") -> float:
        w = min(self.right, other.right) - max(self.x, other.x)
        h = min(self.bottom, other.bottom) - max(self.y, other.y)
        return w * h if w > 0 and h > 0 else 0.0

    def iou(self, other: "Rect") -> float:
        inter = self.intersection_area(other)
        union = self.area() + other.area() - inter
        return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class LayoutTarget:
    kind: str  # "text" | "element"
    path: tuple[int, ...]

    def to_wire(self) -> dict:
        return {"kind": self.kind, "path": list(self.path)}


@dataclass
class Screenshot:
    """A rendered page: RGB pixel grid plus provenance."""

    pixels: np.ndarray  # H x W x 3 uint8
    viewport: Viewport
    doc_ref: str = ""

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, "RGB").save(buf, "PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes, viewport: Viewport, doc_ref: str = "") -> "Screenshot":
        img = Image.open(io.BytesIO(data)).convert("RGB")
        return cls(np.asarray(img, dtype=np.uint8), viewport, doc_ref)


class Renderer(Protocol):
    def render(self, html: str, viewport: Viewport = DEFAULT_VIEWPORT, doc_ref: str = "") -> Screenshot: ...

    def query_layout(
        self, html: str, targets: Sequence[LayoutTarget], viewport: Viewport = DEFAULT_VIEWPORT
    ) -> list[Rect | None]: ...

    def close(self) -> None: ...


def _decode_render_result(result: dict, viewport: Viewport, doc_ref: str) -> Screenshot:
    try:
        png = base64.b64decode(result["png_base64"])
    except (KeyError, ValueError) as exc:
        raise MalformedPage(f"renderer returned an unreadable screenshot: {exc}") from None
    return Screenshot.from_png_bytes(png, viewport, doc_ref)


def _decode_layout_result(result: dict) -> list[Rect | None]:
    rects: list[Rect | None] = []
    for entry in result.get("rects", []):
        if entry is None:
            rects.append(None)
        else:
            rects.append(Rect(entry["x"], entry["y"], entry["width"], entry["height"]))
    return rects


def _raise_for_error(error: dict) -> None:
    code = error.get("code", "internal")
    message = error.get("message", "")
    if code in ("malformed_page", "unsupported"):
        raise MalformedPage(f"{code}: {message}")
    raise RenderError(f"renderer error {code}: {message}")


class SubprocessRenderer:
    """Drives a renderer subprocess over newline-delimited JSON on stdio.

    The process is spawned lazily and respawned after a crash or a timeout
    kill.  A reader thread feeds responses into a queue so deadlines can be
    enforced without PIPE deadlocks.
    """

    def __init__(self, command: Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        if not command:
            raise ValueError("renderer command must not be empty")
        self.command = list(command)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._replies: queue.Queue = queue.Queue()
        self._next_id = 0
        self._lock = threading.Lock()

    # -- process lifecycle

    def _ensure_process(self) -> subprocess.Popen:
        if self._proc is not None and self._proc.poll() is None:
            return self._proc
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
            )
        except OSError as exc:
            raise RendererUnavailable(f"cannot start renderer {self.command[0]!r}: {exc}") from None
        self._replies = queue.Queue()
        thread = threading.Thread(target=self._read_loop, args=(self._proc, self._replies), daemon=True)
        thread.start()
        return self._proc

    @staticmethod
    def _read_loop(proc: subprocess.Popen, replies: queue.Queue) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                replies.put(json.loads(line))
            except json.JSONDecodeError:
                continue
        replies.put(None)  # EOF marker

    def _kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                try:
                    assert self._proc.stdin is not None
                    self._proc.stdin.close()
                    self._proc.wait(timeout=2)
                except (OSError, subprocess.TimeoutExpired):
                    self._kill()
            self._proc = None

    # -- rpc

    def _rpc(self, method: str, params: dict) -> dict:
        with self._lock:
            proc = self._ensure_process()
            self._next_id += 1
            request_id = self._next_id
            line = json.dumps({"id": request_id, "method": method, "params": params})
            try:
                assert proc.stdin is not None
                proc.stdin.write(line + "\n")
                proc.stdin.flush()
            except (OSError, ValueError) as exc:
                self._kill()
                raise RendererUnavailable(f"renderer process went away: {exc}") from None
            while True:
                try:
                    reply = self._replies.get(timeout=self.timeout)
                except queue.Empty:
                    self._kill()
                    raise RenderTimeout(
                        f"renderer gave no answer to {method!r} within {self.timeout:.0f}s"
                    ) from None
                if reply is None:
                    self._kill()
                    raise RendererUnavailable("renderer process exited mid-request")
                if reply.get("id") != request_id:
                    continue  # stale reply from a killed request
                if "error" in reply:
                    _raise_for_error(reply["error"])
                return reply.get("result", {})

    def render(self, html: str, viewport: Viewport = DEFAULT_VIEWPORT, doc_ref: str = "") -> Screenshot:
        result = self._rpc("render", {"html": html, "viewport": viewport.to_wire()})
        return _decode_render_result(result, viewport, doc_ref)

    def query_layout(
        self, html: str, targets: Sequence[LayoutTarget], viewport: Viewport = DEFAULT_VIEWPORT
    ) -> list[Rect | None]:
        result = self._rpc(
            "layout",
            {"html": html, "viewport": viewport.to_wire(), "targets": [t.to_wire() for t in targets]},
        )
        return _decode_layout_result(result)

    def version(self) -> dict:
        return self._rpc("version", {})


# ── websocket transport (RFC 6455 subset) ────────────────────────────────

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def _ws_handshake(sock: socket.socket, host: str, path: str) -> None:
    key = base64.b64encode(os.urandom(16)).decode()
    request = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n\r\n"
    )
    sock.sendall(request.encode())
    response = b""
    while b"\r\n\r\n" not in response:
        chunk = sock.recv(4096)
        if not chunk:
            raise RendererUnavailable("websocket handshake: connection closed")
        response += chunk
        if len(response) > 65536:
            raise RendererUnavailable("websocket handshake: oversized response")
    head = response.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    if " 101 " not in head.split("\r\n", 1)[0]:
        raise RendererUnavailable(f"websocket handshake refused: {head.splitlines()[0]}")
    expect = base64.b64encode(hashlib.sha1((key + _WS_GUID).encode()).digest()).decode()
    accept = ""
    for line in head.split("\r\n")[1:]:
        name, _, value = line.partition(":")
        if name.strip().lower() == "sec-websocket-accept":
            accept = value.strip()
    if accept != expect:
        raise RendererUnavailable("websocket handshake: bad accept key")


def _ws_send_text(sock: socket.socket, payload: str) -> None:
    data = payload.encode("utf-8")
    mask = os.urandom(4)
    header = bytearray([0x81])  # FIN + text
    n = len(data)
    if n < 126:
        header.append(0x80 | n)
    elif n < 65536:
        header.append(0x80 | 126)
        header += struct.pack(">H", n)
    else:
        header.append(0x80 | 127)
        header += struct.pack(">Q", n)
    header += mask
    masked = bytes(b ^ mask[i % 4] for i, b in enumerate(data))
    sock.sendall(bytes(header) + masked)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise RendererUnavailable("websocket: connection closed mid-frame")
        buf += chunk
    return buf


def _ws_recv_text(sock: socket.socket) -> str:
    parts: list[bytes] = []
    while True:
        b0, b1 = _recv_exact(sock, 2)
        fin = b0 & 0x80
        opcode = b0 & 0x0F
        masked = b1 & 0x80
        n = b1 & 0x7F
        if n == 126:
            n = struct.unpack(">H", _recv_exact(sock, 2))[0]
        elif n == 127:
            n = struct.unpack(">Q", _recv_exact(sock, 8))[0]
        mask = _recv_exact(sock, 4) if masked else b""
        payload = _recv_exact(sock, n)
        if mask:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        if opcode == 0x9:  # ping -> pong
            _ws_send_text_frame(sock, 0xA, payload)
            continue
        if opcode == 0xA:  # pong
            continue
        if opcode == 0x8:
            raise RendererUnavailable("websocket: server closed the connection")
        if opcode in (0x1, 0x0):
            parts.append(payload)
            if fin:
                return b"".join(parts).decode("utf-8")
            continue
        raise RenderError(f"websocket: unsupported frame opcode {opcode}")


def _ws_send_text_frame(sock: socket.socket, opcode: int, payload: bytes) -> None:
    mask = os.urandom(4)
    header = bytearray([0x80 | opcode, 0x80 | len(payload)])
    header += mask
    sock.sendall(bytes(header) + bytes(b ^ mask[i % 4] for i, b in enumerate(payload)))


class WebSocketRenderer:
    """Same protocol as SubprocessRenderer, over a ws:// endpoint."""

    def __init__(self, ws_url: str, timeout: float = DEFAULT_TIMEOUT):
        parsed = urlparse(ws_url)
        if parsed.scheme != "ws":
            raise ValueError(f"only ws:// endpoints are supported, got {ws_url!r}")
        self.url = ws_url
        self.host = parsed.hostname or "127.0.0.1"
        self.port = parsed.port or 80
        self.path = parsed.path or "/"
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._next_id = 0
        self._lock = threading.Lock()

    def _ensure(self) -> socket.socket:
        if self._sock is not None:
            return self._sock
        try:
            sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise RendererUnavailable(f"cannot reach renderer at {self.url}: {exc}") from None
        sock.settimeout(self.timeout)
        try:
            _ws_handshake(sock, f"{self.host}:{self.port}", self.path)
        except Exception:
            sock.close()
            raise
        self._sock = sock
        return sock

    def _drop(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def close(self) -> None:
        with self._lock:
            self._drop()

    def _rpc(self, method: str, params: dict) -> dict:
        with self._lock:
            sock = self._ensure()
            self._next_id += 1
            request_id = self._next_id
            try:
                _ws_send_text(sock, json.dumps({"id": request_id, "method": method, "params": params}))
                while True:
                    reply = json.loads(_ws_recv_text(sock))
                    if reply.get("id") != request_id:
                        continue
                    if "error" in reply:
                        _raise_for_error(reply["error"])
                    return reply.get("result", {})
            except socket.timeout:
                self._drop()
                raise RenderTimeout(
                    f"renderer gave no answer to {method!r} within {self.timeout:.0f}s"
                ) from None
            except (OSError, json.JSONDecodeError) as exc:
                self._drop()
                raise RendererUnavailable(f"websocket transport failed: {exc}") from None

    def render(self, html: str, viewport: Viewport = DEFAULT_VIEWPORT, doc_ref: str = "") -> Screenshot:
        result = self._rpc("render", {"html": html, "viewport": viewport.to_wire()})
        return _decode_render_result(result, viewport, doc_ref)

    def query_layout(
        self, html: str, targets: Sequence[LayoutTarget], viewport: Viewport = DEFAULT_VIEWPORT
    ) -> list[Rect | None]:
        result = self._rpc(
            "layout",
            {"html": html, "viewport": viewport.to_wire(), "targets": [t.to_wire() for t in targets]},
        )
        return _decode_layout_result(result)

    def version(self) -> dict:
        return self._rpc("version", {})


# ── module-level conveniences and pooling ────────────────────────────────


def render(
    renderer: Renderer, html: str, viewport: Viewport = DEFAULT_VIEWPORT, doc_ref: str = ""
) -> Screenshot:
    return renderer.render(html, viewport, doc_ref)


def query_layout(
    renderer: Renderer,
    html: str,
    targets: Sequence[LayoutTarget],
    viewport: Viewport = DEFAULT_VIEWPORT,
) -> list[Rect | None]:
    return renderer.query_layout(html, targets, viewport)


class RendererPool:
    """A fixed set of renderer clients leased to worker threads."""

    def __init__(self, factory, size: int = 1):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self._all = [factory() for _ in range(size)]
        self._idle: queue.Queue = queue.Queue()
        for client in self._all:
            self._idle.put(client)
        self.size = size

    def lease(self) -> "_Lease":
        return _Lease(self)

    def close(self) -> None:
        for client in self._all:
            client.close()

    def __enter__(self) -> "RendererPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class _Lease:
    def __init__(self, pool: RendererPool):
        self._pool = pool
        self._client: Renderer | None = None

    def __enter__(self) -> Renderer:
        self._client = self._pool._idle.get()
        return self._client

    def __exit__(self, *exc) -> None:
        if self._client is not None:
            self._pool._idle.put(self._client)
            self._client = None


def stub_renderer_command() -> list[str]:
    """Argv for the bundled reference renderer, runnable as a subprocess."""
    return [sys.executable, "-m", "renderscore.stub"]
