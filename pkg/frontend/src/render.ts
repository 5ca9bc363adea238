// Map/telemetry rendering helpers. The coordinate transform and the
// pixel painting are pure so the tests can run without a DOM.

import { StateFields, WorldMap } from "./protocol.js";

export const FLOOR_W = 4.0; // m, x extent
export const FLOOR_H = 3.0; // m, y extent
export const SCALE = 200;   // canvas pixels per meter

export const CANVAS_W = FLOOR_W * SCALE;
export const CANVAS_H = FLOOR_H * SCALE;

/** Floor coordinates to canvas pixels; y points up on the floor, down on
 * the canvas, so the map reads like a floor plan. */
export function floorToCanvas(xM: number, yM: number): { cx: number; cy: number } {
  return { cx: xM * SCALE, cy: (FLOOR_H - yM) * SCALE };
}

// canvas coloring: occupied black, free/unknown uniform gray (the wire map
// is binarized, so anything not occupied renders as the prior's gray)
const GRAY = 208;
const BLACK = 20;

/** Paint a decoded world map into an RGBA buffer (one canvas pixel per
 * cell, cols x rows). Grid row 0 is floor y=0, so it lands at the bottom. */
export function mapToRgba(map: WorldMap): Uint8ClampedArray<ArrayBuffer> {
  const { rows, cols, bits } = map;
  const rgba = new Uint8ClampedArray(new ArrayBuffer(rows * cols * 4));
  for (let r = 0; r < rows; r++) {
    const canvasRow = rows - 1 - r;
    for (let c = 0; c < cols; c++) {
      const v = bits[r * cols + c] ? BLACK : GRAY;
      const at = (canvasRow * cols + c) * 4;
      rgba[at] = v;
      rgba[at + 1] = v;
      rgba[at + 2] = v;
      rgba[at + 3] = 255;
    }
  }
  return rgba;
}

export interface TelemetryText {
  pose: string;
  velocity: string;
  distance: string;
  battery: string;
  mode: string;
  time: string;
  overruns: string;
}

export function formatTelemetry(s: StateFields): TelemetryText {
  const deg = (s.theta * 180) / Math.PI;
  return {
    pose: `x ${s.x.toFixed(3)} m   y ${s.y.toFixed(3)} m   th ${deg.toFixed(1)} deg` +
      (s.pose_valid ? "" : "   (no fix)"),
    velocity: `vx ${s.vx.toFixed(3)}   vy ${s.vy.toFixed(3)}   w ${s.omega.toFixed(2)} rad/s`,
    distance: s.distance_cm >= 255 ? "255 cm (no echo)" : `${s.distance_cm} cm`,
    battery: `${(s.battery_mv / 1000).toFixed(2)} V`,
    mode: s.mode,
    time: `${s.t.toFixed(1)} s`,
    overruns: String(s.overruns),
  };
}

/** Robot glyph outline (a heading triangle) in canvas coordinates. */
export function glyphPoints(s: StateFields): Array<{ cx: number; cy: number }> {
  const nose = 0.12;
  const wing = 0.07;
  const pts: Array<[number, number]> = [
    [s.x + nose * Math.cos(s.theta), s.y + nose * Math.sin(s.theta)],
    [s.x + wing * Math.cos(s.theta + 2.5), s.y + wing * Math.sin(s.theta + 2.5)],
    [s.x + wing * Math.cos(s.theta - 2.5), s.y + wing * Math.sin(s.theta - 2.5)],
  ];
  return pts.map(([x, y]) => floorToCanvas(x, y));
}
