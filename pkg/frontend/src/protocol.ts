// Wire protocol primitives, byte-compatible with the server (PROTOCOL.md).
// Frames: u32 big-endian payload length, u8 type, payload.

export const FrameType = {
  AUTH: 0x01,
  AUTH_OK: 0x02,
  REJECT: 0x03,
  LIFECYCLE: 0x04,
  ACK: 0x05,
  ERROR: 0x06,
  SET: 0x07,
  STATE: 0x10,
  MAP: 0x11,
  EVENT: 0x12,
  FILE_HDR: 0x20,
  FILE_CHUNK: 0x21,
  FILE_END: 0x22,
} as const;

export interface Frame {
  type: number;
  payload: Uint8Array;
}

export function encodeFrame(type: number, payload: Uint8Array): Uint8Array {
  const out = new Uint8Array(5 + payload.length);
  new DataView(out.buffer).setUint32(0, payload.length, false);
  out[4] = type;
  out.set(payload, 5);
  return out;
}

export function encodeJsonFrame(type: number, obj: unknown): Uint8Array {
  return encodeFrame(type, new TextEncoder().encode(JSON.stringify(obj)));
}

export function decodeJson(payload: Uint8Array): Record<string, unknown> {
  return JSON.parse(new TextDecoder().decode(payload));
}

/** Incremental parser; feed() returns every frame completed so far. */
export class FrameDecoder {
  private buf = new Uint8Array(0);

  feed(data: Uint8Array): Frame[] {
    const joined = new Uint8Array(this.buf.length + data.length);
    joined.set(this.buf, 0);
    joined.set(data, this.buf.length);
    this.buf = joined;

    const frames: Frame[] = [];
    for (;;) {
      if (this.buf.length < 5) break;
      const view = new DataView(this.buf.buffer, this.buf.byteOffset);
      const length = view.getUint32(0, false);
      if (this.buf.length < 5 + length) break;
      frames.push({
        type: this.buf[4],
        payload: this.buf.slice(5, 5 + length),
      });
      this.buf = this.buf.slice(5 + length);
    }
    return frames;
  }
}

// -- STATE payload (72 bytes, big-endian; see PROTOCOL.md) -------------------

export interface StateFields {
  tick: number;
  t: number;
  x: number;
  y: number;
  theta: number;
  vx: number;
  vy: number;
  omega: number;
  pose_valid: boolean;
  distance_cm: number;
  battery_mv: number;
  mode: "manual" | "automatic" | "?";
  backend: "virtual" | "real" | "?";
  overruns: number;
}

export const STATE_SIZE = 72;

export function decodeState(payload: Uint8Array): StateFields {
  if (payload.length !== STATE_SIZE) {
    throw new Error(`STATE payload must be ${STATE_SIZE} bytes, got ${payload.length}`);
  }
  const v = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  const modes: Record<number, StateFields["mode"]> = { 0: "manual", 1: "automatic" };
  const backends: Record<number, StateFields["backend"]> = { 0: "virtual", 1: "real" };
  return {
    tick: v.getUint32(0, false),
    t: v.getFloat64(4, false),
    x: v.getFloat64(12, false),
    y: v.getFloat64(20, false),
    theta: v.getFloat64(28, false),
    vx: v.getFloat64(36, false),
    vy: v.getFloat64(44, false),
    omega: v.getFloat64(52, false),
    pose_valid: payload[60] !== 0,
    distance_cm: payload[61],
    battery_mv: v.getUint16(62, false),
    mode: modes[payload[64]] ?? "?",
    backend: backends[payload[65]] ?? "?",
    overruns: v.getUint32(66, false),
  };
}

// -- MAP payload: u16 rows, u16 cols, u8 threshold, LEB128 run lengths --------

export interface WorldMap {
  rows: number;
  cols: number;
  thresholdByte: number;
  runs: number[];
  /** row-major occupancy bits, one byte per cell (0 free/unknown, 1 occupied) */
  bits: Uint8Array;
}

export function decodeVarints(data: Uint8Array): number[] {
  const values: number[] = [];
  let value = 0;
  let shift = 0;
  for (let i = 0; i < data.length; i++) {
    const b = data[i];
    value += (b & 0x7f) * 2 ** shift; // avoid 32-bit overflow of <<
    if (b & 0x80) {
      shift += 7;
      if (shift > 49) throw new Error("varint too wide");
    } else {
      values.push(value);
      value = 0;
      shift = 0;
    }
  }
  if (shift !== 0 || (data.length > 0 && data[data.length - 1] & 0x80)) {
    throw new Error("varint stream truncated");
  }
  return values;
}

export function decodeMap(payload: Uint8Array): WorldMap {
  if (payload.length < 5) throw new Error("MAP payload shorter than header");
  const v = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  const rows = v.getUint16(0, false);
  const cols = v.getUint16(2, false);
  const thresholdByte = payload[4];
  const runs = decodeVarints(payload.slice(5));
  const total = runs.reduce((a, b) => a + b, 0);
  if (total !== rows * cols) {
    throw new Error(`run lengths sum to ${total}, expected ${rows * cols}`);
  }
  const bits = new Uint8Array(rows * cols);
  let at = 0;
  for (let i = 0; i < runs.length; i++) {
    const fill = i % 2; // runs alternate starting with a 0-run
    if (fill) bits.fill(1, at, at + runs[i]);
    at += runs[i];
  }
  return { rows, cols, thresholdByte, runs, bits };
}
