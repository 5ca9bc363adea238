import pytest
from hypothesis import given, strategies as st

from robolab import protocol as P
from robolab.protocol import (FrameDecoder, ProtocolError, decode_state,
                              encode_frame, encode_state)
from robolab.session import Snapshot


def snap(**overrides) -> Snapshot:
    base = dict(tick=7, t_ms=1400, x=1.25, y=0.5, theta=-0.75,
                vx=0.01, vy=-0.02, omega=0.3, pose_valid=True,
                distance_cm=142, battery_mv=8192, mode="manual",
                backend="virtual", overruns=2, auto_disabled=False,
                map_version=3)
    base.update(overrides)
    return Snapshot(**base)


class TestFrameCodec:
    @given(st.integers(0, 255), st.binary(max_size=4096))
    def test_roundtrip(self, ftype, payload):
        decoder = FrameDecoder()
        frames = list(decoder.feed(encode_frame(ftype, payload)))
        assert frames == [(ftype, payload)]

    @given(st.lists(st.tuples(st.integers(0, 255), st.binary(max_size=200)),
                    max_size=20),
           st.integers(1, 17))
    def test_streamed_in_arbitrary_chunks(self, frames, chunk):
        blob = b"".join(encode_frame(t, p) for t, p in frames)
        decoder = FrameDecoder()
        out = []
        for i in range(0, len(blob), chunk):
            out.extend(decoder.feed(blob[i:i + chunk]))
        assert out == frames

    def test_length_field_is_payload_bytes(self):
        frame = encode_frame(P.STATE, b"abc")
        assert frame[:4] == (3).to_bytes(4, "big")
        assert frame[4] == P.STATE
        assert frame[5:] == b"abc"

    def test_oversized_frame_rejected(self):
        with pytest.raises(ProtocolError):
            decoder = FrameDecoder()
            list(decoder.feed((P.MAX_PAYLOAD + 1).to_bytes(4, "big") + b"\x10"))


class TestStateLayout:
    def test_size_is_documented_72_bytes(self):
        assert P.STATE_SIZE == 72
        assert len(encode_state(snap())) == 72

    def test_roundtrip_fields(self):
        decoded = decode_state(encode_state(snap()))
        assert decoded == {
            "tick": 7, "t": 1.4, "x": 1.25, "y": 0.5, "theta": -0.75,
            "vx": 0.01, "vy": -0.02, "omega": 0.3, "pose_valid": True,
            "distance_cm": 142, "battery_mv": 8192, "mode": "manual",
            "backend": "virtual", "overruns": 2,
        }

    def test_mode_codes(self):
        auto = decode_state(encode_state(snap(mode="automatic")))
        assert auto["mode"] == "automatic"

    def test_bad_size_rejected(self):
        with pytest.raises(ProtocolError):
            decode_state(b"\x00" * 71)


class TestVariableRegistry:
    def test_directions(self):
        assert P.variable_direction("drive") == P.CONTROL
        assert P.variable_direction("mode") == P.CONTROL
        assert P.variable_direction("backend") == P.CONTROL
        for name in ("pose", "velocity", "distance", "battery", "tick",
                     "time", "overruns", "pose_valid", "world"):
            assert P.variable_direction(name) == P.INDICATOR
        assert P.variable_direction("hidden_world") is None

    def test_every_variable_has_exactly_one_direction(self):
        for name, (direction, _kind) in P.VARIABLES.items():
            assert direction in (P.CONTROL, P.INDICATOR), name
