import { describe, expect, it } from "vitest";

import { decodeMap } from "../src/protocol.js";
import {
  CANVAS_H,
  CANVAS_W,
  SCALE,
  floorToCanvas,
  formatTelemetry,
  glyphPoints,
  mapToRgba,
} from "../src/render.js";
import type { StateFields } from "../src/protocol.js";

function state(over: Partial<StateFields> = {}): StateFields {
  return {
    tick: 3, t: 0.6, x: 1.0, y: 1.0, theta: 0.0, vx: 0, vy: 0, omega: 0,
    pose_valid: true, distance_cm: 120, battery_mv: 8200, mode: "manual",
    backend: "virtual", overruns: 0, ...over,
  };
}

describe("coordinate transform", () => {
  it("maps the floor origin to the bottom-left canvas corner", () => {
    expect(floorToCanvas(0, 0)).toEqual({ cx: 0, cy: CANVAS_H });
    expect(floorToCanvas(4, 3)).toEqual({ cx: CANVAS_W, cy: 0 });
  });

  it("positions a synthetic state fixture at the expected pixel", () => {
    // robot at (1.0, 1.0): 1 m from the left, 2 m down from the top
    const p = floorToCanvas(state().x, state().y);
    expect(p.cx).toBe(1.0 * SCALE);
    expect(p.cy).toBe(2.0 * SCALE);
  });

  it("moving +x moves the glyph right, +y moves it up", () => {
    const a = floorToCanvas(1.0, 1.0);
    const b = floorToCanvas(1.5, 1.0);
    const c = floorToCanvas(1.0, 1.5);
    expect(b.cx).toBeGreaterThan(a.cx);
    expect(b.cy).toBe(a.cy);
    expect(c.cy).toBeLessThan(a.cy);
  });
});

describe("map painting", () => {
  it("renders an all-prior map as a uniform gray canvas", () => {
    // all-free wire map: one run covering every cell
    const payload = new Uint8Array([1, 44, 1, 144, 153, 0x80 | 0x40, 0xa9, 0x07]);
    // (300=0x012c, 400=0x0190, thr=153, varint 120000 = 0xC0 0xA9 0x07)
    const map = decodeMap(payload);
    const rgba = mapToRgba(map);
    const first = rgba[0];
    for (let i = 0; i < rgba.length; i += 4) {
      expect(rgba[i]).toBe(first);
      expect(rgba[i + 3]).toBe(255);
    }
  });

  it("paints occupied cells dark, at the vertically flipped row", () => {
    const map = {
      rows: 3, cols: 4, thresholdByte: 153, runs: [1, 1, 10],
      bits: new Uint8Array([0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]),
    };
    const rgba = mapToRgba(map);
    // grid row 0 paints into canvas row rows-1 = 2
    const at = (2 * 4 + 1) * 4;
    expect(rgba[at]).toBeLessThan(100);
    expect(rgba[(0 * 4 + 1) * 4]).toBeGreaterThan(100);
  });
});

describe("telemetry text", () => {
  it("formats every field", () => {
    const t = formatTelemetry(state());
    expect(t.pose).toContain("x 1.000");
    expect(t.distance).toBe("120 cm");
    expect(t.battery).toBe("8.20 V");
    expect(t.time).toBe("0.6 s");
  });

  it("labels max range and missing fixes", () => {
    const t = formatTelemetry(state({ distance_cm: 255, pose_valid: false }));
    expect(t.distance).toContain("no echo");
    expect(t.pose).toContain("no fix");
  });
});

describe("glyph", () => {
  it("points along the heading", () => {
    const east = glyphPoints(state({ theta: 0 }));
    expect(east[0].cx).toBeGreaterThan(east[1].cx);
    const north = glyphPoints(state({ theta: Math.PI / 2 }));
    expect(north[0].cy).toBeLessThan(north[1].cy); // up on canvas
  });
});
