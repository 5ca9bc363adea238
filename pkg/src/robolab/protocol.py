"""Framed wire protocol: frame codec, binary layouts, variable registry.

Every frame is a 4-byte big-endian payload length, one type byte, then
the payload.  Control/lifecycle/file-header frames carry compact JSON;
the hot-path STATE and MAP frames are fixed binary layouts.  The same
frame bytes travel over raw TCP and, one frame per message, over the
browser socket transport.  PROTOCOL.md in the repository root is the
normative field-by-field description.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

MAX_PAYLOAD = 16 * 1024 * 1024
FILE_CHUNK_SIZE = 64 * 1024

# frame types
AUTH = 0x01        # client->server  {"user","password"}
AUTH_OK = 0x02     # server->client  {"token","user","workspace"}
REJECT = 0x03      # server->client  {"code","reason"}
LIFECYCLE = 0x04   # client->server  {"action": open|run|stop|close}
ACK = 0x05         # server->client  {"op", ...}
ERROR = 0x06       # server->client  {"code","reason"}
SET = 0x07         # client->server  {"name","value"}
STATE = 0x10       # server->client  binary, STATE_STRUCT
MAP = 0x11         # server->client  binary, CompressedWorld bytes
EVENT = 0x12       # server->client  {"kind", ...}
FILE_HDR = 0x20    # both            {"op":"put"|"get","path","size","sha256"}
FILE_CHUNK = 0x21  # both            raw bytes
FILE_END = 0x22    # both            {"path","sha256"}

FRAME_NAMES = {
    AUTH: "AUTH", AUTH_OK: "AUTH_OK", REJECT: "REJECT",
    LIFECYCLE: "LIFECYCLE", ACK: "ACK", ERROR: "ERROR", SET: "SET",
    STATE: "STATE", MAP: "MAP", EVENT: "EVENT", FILE_HDR: "FILE_HDR",
    FILE_CHUNK: "FILE_CHUNK", FILE_END: "FILE_END",
}


class ProtocolError(ValueError):
    """Malformed frame bytes."""


def encode_frame(ftype: int, payload: bytes) -> bytes:
    if not 0 <= ftype <= 0xFF:
        raise ProtocolError(f"frame type {ftype} out of range")
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds limit")
    return struct.pack(">IB", len(payload), ftype) + payload


def encode_json_frame(ftype: int, obj: dict) -> bytes:
    return encode_frame(ftype, json.dumps(obj, separators=(",", ":"))
                        .encode("utf-8"))


def decode_json_payload(payload: bytes) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad JSON payload: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("JSON payload must be an object")
    return obj


class FrameDecoder:
    """Incremental frame parser for a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes):
        """Append bytes; yields (type, payload) for each complete frame."""
        self._buf.extend(data)
        while True:
            if len(self._buf) < 5:
                return
            length, ftype = struct.unpack(">IB", self._buf[:5])
            if length > MAX_PAYLOAD:
                raise ProtocolError(f"frame of {length} bytes exceeds limit")
            if len(self._buf) < 5 + length:
                return
            payload = bytes(self._buf[5:5 + length])
            del self._buf[:5 + length]
            yield ftype, payload


# -- STATE binary layout -------------------------------------------------
#
#   offset  size  field
#        0     4  u32  tick index
#        4     8  f64  simulated time, s
#       12     8  f64  x estimate, m
#       20     8  f64  y estimate, m
#       28     8  f64  heading estimate, rad
#       36     8  f64  vx, m/s
#       44     8  f64  vy, m/s
#       52     8  f64  omega, rad/s
#       60     1  u8   pose valid flag
#       61     1  u8   ultrasonic distance, cm
#       62     2  u16  battery, mV
#       64     1  u8   mode: 0 manual, 1 automatic
#       65     1  u8   backend: 0 virtual, 1 real
#       66     4  u32  controller overrun count
#       70     2  u16  reserved, zero
STATE_STRUCT = struct.Struct(">I7dBBHBBIH")
STATE_SIZE = STATE_STRUCT.size  # 72

MODE_CODES = {"manual": 0, "automatic": 1}
MODE_NAMES = {v: k for k, v in MODE_CODES.items()}
BACKEND_CODES = {"virtual": 0, "real": 1}
BACKEND_NAMES = {v: k for k, v in BACKEND_CODES.items()}


def encode_state(snap) -> bytes:
    """Pack a session Snapshot into the STATE wire layout."""
    return STATE_STRUCT.pack(
        snap.tick, snap.t_ms / 1000.0, snap.x, snap.y, snap.theta,
        snap.vx, snap.vy, snap.omega,
        1 if snap.pose_valid else 0,
        max(0, min(255, snap.distance_cm)),
        max(0, min(0xFFFF, snap.battery_mv)),
        MODE_CODES[snap.mode], BACKEND_CODES[snap.backend],
        snap.overruns & 0xFFFFFFFF, 0)


def decode_state(payload: bytes) -> dict:
    if len(payload) != STATE_SIZE:
        raise ProtocolError(f"STATE payload must be {STATE_SIZE} bytes, "
                            f"got {len(payload)}")
    (tick, t, x, y, theta, vx, vy, omega, valid, distance, battery,
     mode, backend, overruns, _reserved) = STATE_STRUCT.unpack(payload)
    return {
        "tick": tick, "t": t, "x": x, "y": y, "theta": theta,
        "vx": vx, "vy": vy, "omega": omega, "pose_valid": bool(valid),
        "distance_cm": distance, "battery_mv": battery,
        "mode": MODE_NAMES.get(mode, "?"),
        "backend": BACKEND_NAMES.get(backend, "?"),
        "overruns": overruns,
    }


# -- variable registry -----------------------------------------------------

CONTROL, INDICATOR = "control", "indicator"

#: name -> (direction, kind)
VARIABLES = {
    "drive": (CONTROL, "pair"),        # [u1, u2] in [-1, 1]
    "mode": (CONTROL, "scalar"),       # "manual" | "automatic"
    "backend": (CONTROL, "scalar"),    # "virtual" | "real"
    "pose": (INDICATOR, "tuple"),
    "velocity": (INDICATOR, "tuple"),
    "distance": (INDICATOR, "scalar"),
    "battery": (INDICATOR, "scalar"),
    "tick": (INDICATOR, "scalar"),
    "time": (INDICATOR, "scalar"),
    "overruns": (INDICATOR, "scalar"),
    "pose_valid": (INDICATOR, "scalar"),
    "world": (INDICATOR, "blob"),
}


def variable_direction(name: str) -> str | None:
    entry = VARIABLES.get(name)
    return entry[0] if entry else None


# rejection reason codes (REJECT frames)
BAD_CREDENTIALS = "bad-credentials"
NO_SLOT = "no-slot"
BUSY = "busy"

# error codes (ERROR frames)
E_NOT_AUTHENTICATED = "not-authenticated"
E_UNKNOWN_TYPE = "unknown-type"
E_BAD_FRAME = "bad-frame"
E_ILLEGAL_TRANSITION = "illegal-transition"
E_UNKNOWN_VARIABLE = "unknown-variable"
E_INDICATOR_WRITE = "indicator-write"
E_BAD_VALUE = "bad-value"
E_UNSUPPORTED_BACKEND = "unsupported-backend"
E_REJECTED = "rejected"
E_NOT_OPEN = "not-open"
E_PATH_ESCAPE = "path-escape"
E_DIGEST_MISMATCH = "digest-mismatch"
E_FILE = "file-error"


@dataclass(frozen=True)
class Ports:
    tcp: int = 7420
    web: int = 7421
