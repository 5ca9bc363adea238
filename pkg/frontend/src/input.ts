// Drive input: arrows (keys or on-screen buttons) are held, commands go
// out at 10 Hz while anything is held, and a single stop command goes
// out on release.

export interface DriveState {
  forward: boolean;
  back: boolean;
  left: boolean;
  right: boolean;
}

export type DriveSink = (u1: number, u2: number) => void;

const TURN_GAIN = 0.6;

export function commandFor(state: DriveState): [number, number] | null {
  const f = (state.forward ? 1 : 0) - (state.back ? 1 : 0);
  const t = (state.right ? 1 : 0) - (state.left ? 1 : 0);
  if (f === 0 && t === 0) return null;
  const clamp = (v: number) => Math.max(-1, Math.min(1, v));
  return [clamp(f + TURN_GAIN * t), clamp(f - TURN_GAIN * t)];
}

export class DriveLoop {
  readonly periodMs = 100;
  state: DriveState = { forward: false, back: false, left: false, right: false };
  private wasDriving = false;

  constructor(private sink: DriveSink) {}

  press(key: keyof DriveState): void {
    this.state[key] = true;
  }

  release(key: keyof DriveState): void {
    this.state[key] = false;
  }

  /** Called every periodMs; emits the held command or one stop. */
  poll(): void {
    const cmd = commandFor(this.state);
    if (cmd) {
      this.sink(cmd[0], cmd[1]);
      this.wasDriving = true;
    } else if (this.wasDriving) {
      this.sink(0, 0);
      this.wasDriving = false;
    }
  }
}

export const KEY_BINDINGS: Record<string, keyof DriveState> = {
  ArrowUp: "forward",
  ArrowDown: "back",
  ArrowLeft: "left",
  ArrowRight: "right",
  w: "forward",
  s: "back",
  a: "left",
  d: "right",
};
