"""Minimal RFC 6455 server transport for browser clients.

Just enough of the handshake and framing to carry the lab protocol:
binary messages (one protocol frame per message), ping/pong, close,
and client masking.  Plain GET requests on the same port are answered
with static files from the configured web root so the browser client
can be served without a separate web server.
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
MAX_MESSAGE = 16 * 1024 * 1024

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".map": "application/json",
}


class WebSocketError(RuntimeError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    data = b""
    while len(data) < n:
        chunk = sock.recv(n - len(data))
        if not chunk:
            raise WebSocketError("socket closed")
        data += chunk
    return data


def _read_http_request(sock: socket.socket) -> tuple[str, str, dict]:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WebSocketError("socket closed during HTTP request")
        data += chunk
        if len(data) > 64 * 1024:
            raise WebSocketError("oversized HTTP request")
    head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    lines = head.split("\r\n")
    try:
        method, path, _version = lines[0].split(" ", 2)
    except ValueError as exc:
        raise WebSocketError(f"bad request line {lines[0]!r}") from exc
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            key, value = line.split(":", 1)
            headers[key.strip().lower()] = value.strip()
    return method, path, headers


def _send_http(sock: socket.socket, status: str, body: bytes,
               content_type: str = "text/plain; charset=utf-8") -> None:
    head = (f"HTTP/1.1 {status}\r\n"
            f"Content-Type: {content_type}\r\n"
            f"Content-Length: {len(body)}\r\n"
            f"Cache-Control: no-store\r\n"
            f"Connection: close\r\n\r\n")
    sock.sendall(head.encode("latin-1") + body)


def _serve_static(sock: socket.socket, path: str, web_root: str | None) -> None:
    if web_root is None:
        _send_http(sock, "404 Not Found",
                   b"no web root configured; connect a protocol client\n")
        return
    rel = path.split("?", 1)[0].lstrip("/") or "index.html"
    full = os.path.realpath(os.path.join(web_root, rel))
    root = os.path.realpath(web_root)
    if not full.startswith(root + os.sep) and full != root:
        _send_http(sock, "403 Forbidden", b"path outside web root\n")
        return
    if not os.path.isfile(full):
        _send_http(sock, "404 Not Found", f"{rel} not found\n".encode())
        return
    with open(full, "rb") as fh:
        body = fh.read()
    ctype = CONTENT_TYPES.get(os.path.splitext(full)[1], "application/octet-stream")
    _send_http(sock, "200 OK", body, ctype)


class WebSocketConnection:
    """Server side of one upgraded connection; binary messages only."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._closed = False

    def recv_message(self) -> bytes:
        """Next complete binary message; raises WebSocketError on close."""
        message = b""
        opcode_in_progress = None
        while True:
            b1, b2 = _recv_exact(self.sock, 2)
            fin = b1 & 0x80
            opcode = b1 & 0x0F
            masked = b2 & 0x80
            length = b2 & 0x7F
            if length == 126:
                (length,) = struct.unpack(">H", _recv_exact(self.sock, 2))
            elif length == 127:
                (length,) = struct.unpack(">Q", _recv_exact(self.sock, 8))
            if length > MAX_MESSAGE:
                raise WebSocketError("oversized websocket message")
            if not masked:
                raise WebSocketError("client frames must be masked")
            mask = _recv_exact(self.sock, 4)
            payload = bytearray(_recv_exact(self.sock, length))
            for i in range(length):
                payload[i] ^= mask[i % 4]
            payload = bytes(payload)

            if opcode == 0x8:    # close
                self._send_raw(0x8, payload[:2])
                raise WebSocketError("client closed")
            if opcode == 0x9:    # ping
                self._send_raw(0xA, payload)
                continue
            if opcode == 0xA:    # pong
                continue
            if opcode in (0x1, 0x2):
                opcode_in_progress = opcode
                message = payload
            elif opcode == 0x0 and opcode_in_progress is not None:
                message += payload
                if len(message) > MAX_MESSAGE:
                    raise WebSocketError("oversized fragmented message")
            else:
                raise WebSocketError(f"unexpected opcode {opcode}")
            if fin:
                if opcode_in_progress != 0x2:
                    continue  # text messages are not part of this protocol
                return message

    def _send_raw(self, opcode: int, payload: bytes) -> None:
        head = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            head += bytes([n])
        elif n < 1 << 16:
            head += bytes([126]) + struct.pack(">H", n)
        else:
            head += bytes([127]) + struct.pack(">Q", n)
        self.sock.sendall(head + payload)

    def send_message(self, payload: bytes) -> None:
        self._send_raw(0x2, payload)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._send_raw(0x8, struct.pack(">H", 1000))
            except OSError:
                pass
            try:
                self.sock.close()
            except OSError:
                pass


def accept(sock: socket.socket,
           web_root: str | None = None) -> WebSocketConnection | None:
    """Upgrade an incoming connection, or answer it as plain HTTP.

    Returns a WebSocketConnection for upgrade requests; for anything
    else serves a static file (and returns None, the socket is done).
    """
    method, path, headers = _read_http_request(sock)
    if headers.get("upgrade", "").lower() != "websocket":
        if method == "GET":
            _serve_static(sock, path, web_root)
        else:
            _send_http(sock, "405 Method Not Allowed", b"GET only\n")
        sock.close()
        return None
    key = headers.get("sec-websocket-key")
    if not key:
        _send_http(sock, "400 Bad Request", b"missing websocket key\n")
        sock.close()
        return None
    accept_key = base64.b64encode(
        hashlib.sha1((key + WS_GUID).encode("latin-1")).digest()).decode()
    sock.sendall((
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key}\r\n\r\n").encode("latin-1"))
    return WebSocketConnection(sock)
