import { describe, expect, it } from "vitest";

import { DriveLoop, commandFor } from "../src/input.js";

describe("command mapping", () => {
  it("forward is full ahead", () => {
    expect(commandFor({ forward: true, back: false, left: false, right: false }))
      .toEqual([1, 1]);
  });
  it("turns are differential", () => {
    const [u1, u2] = commandFor(
      { forward: false, back: false, left: true, right: false })!;
    expect(u1).toBeLessThan(u2);
  });
  it("nothing held means no command", () => {
    expect(commandFor({ forward: false, back: false, left: false, right: false }))
      .toBeNull();
  });
});

describe("drive loop", () => {
  it("emits the held command every poll and one stop on release", () => {
    const sent: Array<[number, number]> = [];
    const loop = new DriveLoop((a, b) => sent.push([a, b]));
    loop.press("forward");
    for (let i = 0; i < 10; i++) loop.poll(); // 1 s at 10 Hz
    expect(sent).toHaveLength(10);
    expect(sent.every(([a, b]) => a === 1 && b === 1)).toBe(true);

    loop.release("forward");
    loop.poll();
    loop.poll();
    loop.poll();
    expect(sent).toHaveLength(11);
    expect(sent[10]).toEqual([0, 0]); // single stop, not repeated
  });

  it("poll cadence is 10 Hz", () => {
    const loop = new DriveLoop(() => undefined);
    expect(loop.periodMs).toBe(100);
  });
});
