"""Length-prefixed JSON messaging between the lab and controller processes.

Every message is a 4-byte big-endian payload length followed by a JSON
object encoded as UTF-8.  Requests look like {"id": n, "hook": name,
"args": {...}}; replies are {"id": n, "ok": true, "result": ...} or
{"id": n, "ok": false, "error": text}.
"""

from __future__ import annotations

import json
import struct

PROTOCOL_VERSION = 1
MAX_MESSAGE_BYTES = 16 * 1024 * 1024


class WireError(RuntimeError):
    """Stream closed or carried an undecodable message."""


def write_message(stream, obj: dict) -> None:
    payload = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    stream.write(struct.pack(">I", len(payload)) + payload)
    stream.flush()


def read_message(stream) -> dict:
    head = stream.read(4)
    if len(head) < 4:
        raise WireError("stream closed")
    (length,) = struct.unpack(">I", head)
    if length > MAX_MESSAGE_BYTES:
        raise WireError(f"message of {length} bytes exceeds limit")
    payload = b""
    while len(payload) < length:
        chunk = stream.read(length - len(payload))
        if not chunk:
            raise WireError("stream closed mid-message")
        payload += chunk
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"bad message payload: {exc}") from exc
    if not isinstance(obj, dict):
        raise WireError("message must be a JSON object")
    return obj
