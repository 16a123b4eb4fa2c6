"""Protocol server for the reference renderer.

Stdio mode (default): one JSON request per line on stdin, one JSON
response per line on stdout.  Websocket mode (``--ws [--port N]``): the
same messages as text frames; the chosen port is announced on stdout as
``LISTENING <port>`` so a parent process can discover it.
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import io
import json
import socket
import struct
import sys
import threading

from .. import __version__
from ..dom import ParseError
from .engine import render_page

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def _rect_wire(box: tuple[float, float, float, float] | None) -> dict | None:
    if box is None:
        return None
    x0, y0, x1, y1 = box
    return {"x": x0, "y": y0, "width": x1 - x0, "height": y1 - y0}


def handle_request(request: dict) -> dict:
    request_id = request.get("id")
    method = request.get("method")
    params = request.get("params") or {}
    try:
        if method == "version":
            return {"id": request_id, "result": {"name": "renderscore-stub", "version": __version__, "protocol": 1}}
        if method in ("render", "layout"):
            html = params.get("html")
            if not isinstance(html, str) or not html.strip():
                return _error(request_id, "malformed_page", "params.html must be a non-empty string")
            viewport = params.get("viewport") or {}
            try:
                page = render_page(html, viewport)
            except ParseError as exc:
                return _error(request_id, "malformed_page", str(exc))
            except ValueError as exc:
                return _error(request_id, "unsupported", str(exc))
            if method == "render":
                buf = io.BytesIO()
                page.image.save(buf, "PNG")
                return {
                    "id": request_id,
                    "result": {
                        "png_base64": base64.b64encode(buf.getvalue()).decode(),
                        "width": page.image.width,
                        "height": page.image.height,
                    },
                }
            rects = []
            for target in params.get("targets") or []:
                kind = target.get("kind")
                path = tuple(target.get("path") or ())
                if kind == "text":
                    rects.append(_rect_wire(page.text_rects.get(path)))
                elif kind == "element":
                    rects.append(_rect_wire(page.element_rects.get(path)))
                else:
                    rects.append(None)
            return {"id": request_id, "result": {"rects": rects}}
        return _error(request_id, "internal", f"unknown method {method!r}")
    except Exception as exc:  # never let one request kill the server
        return _error(request_id, "internal", f"{type(exc).__name__}: {exc}")


def _error(request_id, code: str, message: str) -> dict:
    return {"id": request_id, "error": {"code": code, "message": message}}


def serve_stdio() -> None:
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            continue
        response = handle_request(request)
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


# -- websocket mode


def _recv_exact(conn: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed")
        buf += chunk
    return buf


def _ws_accept(conn: socket.socket) -> bool:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = conn.recv(4096)
        if not chunk:
            return False
        data += chunk
        if len(data) > 65536:
            return False
    head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    key = ""
    for line in head.split("\r\n")[1:]:
        name, _, value = line.partition(":")
        if name.strip().lower() == "sec-websocket-key":
            key = value.strip()
    if not key:
        conn.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        return False
    accept = base64.b64encode(hashlib.sha1((key + _WS_GUID).encode()).digest()).decode()
    conn.sendall(
        (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
        ).encode()
    )
    return True


def _ws_recv(conn: socket.socket) -> tuple[int, bytes]:
    b0, b1 = _recv_exact(conn, 2)
    opcode = b0 & 0x0F
    masked = b1 & 0x80
    n = b1 & 0x7F
    if n == 126:
        n = struct.unpack(">H", _recv_exact(conn, 2))[0]
    elif n == 127:
        n = struct.unpack(">Q", _recv_exact(conn, 8))[0]
    mask = _recv_exact(conn, 4) if masked else b""
    payload = _recv_exact(conn, n)
    if mask:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def _ws_send(conn: socket.socket, opcode: int, payload: bytes) -> None:
    header = bytearray([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header.append(n)
    elif n < 65536:
        header.append(126)
        header += struct.pack(">H", n)
    else:
        header.append(127)
        header += struct.pack(">Q", n)
    conn.sendall(bytes(header) + payload)


def _ws_session(conn: socket.socket) -> None:
    try:
        if not _ws_accept(conn):
            return
        while True:
            opcode, payload = _ws_recv(conn)
            if opcode == 0x8:  # close
                _ws_send(conn, 0x8, b"")
                return
            if opcode == 0x9:  # ping
                _ws_send(conn, 0xA, payload)
                continue
            if opcode not in (0x1, 0x2):
                continue
            try:
                request = json.loads(payload.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                continue
            response = handle_request(request)
            _ws_send(conn, 0x1, json.dumps(response).encode("utf-8"))
    except (ConnectionError, OSError):
        pass
    finally:
        conn.close()


def serve_ws(port: int) -> None:
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind(("127.0.0.1", port))
    server.listen(8)
    actual = server.getsockname()[1]
    sys.stdout.write(f"LISTENING {actual}\n")
    sys.stdout.flush()
    while True:
        conn, _ = server.accept()
        threading.Thread(target=_ws_session, args=(conn,), daemon=True).start()


def main() -> None:
    parser = argparse.ArgumentParser(description="reference renderer protocol server")
    parser.add_argument("--ws", action="store_true", help="serve over a websocket instead of stdio")
    parser.add_argument("--port", type=int, default=0, help="websocket port (0 picks a free one)")
    args = parser.parse_args()
    if args.ws:
        serve_ws(args.port)
    else:
        serve_stdio()


if __name__ == "__main__":
    main()
