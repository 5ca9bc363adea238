// Browser wiring: login, drive controls, live map + telemetry, files.

import { LabClient, labUrl } from "./client.js";
import { DriveLoop, KEY_BINDINGS } from "./input.js";
import { StateFields, WorldMap, FrameType } from "./protocol.js";
import {
  CANVAS_H,
  CANVAS_W,
  formatTelemetry,
  glyphPoints,
  mapToRgba,
} from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("map");
canvas.width = CANVAS_W;
canvas.height = CANVAS_H;
const ctx = (() => {
  const c = canvas.getContext("2d");
  if (!c) throw new Error("2d context unavailable");
  return c;
})();

const banner = el<HTMLDivElement>("banner");
const loginForm = el<HTMLFormElement>("login");
const controls = el<HTMLDivElement>("controls");

let client: LabClient | null = null;
let running = false;
let latestState: StateFields | null = null;
let latestMap: WorldMap | null = null;
let mapImage: ImageData | null = null;

function note(text: string, bad = false): void {
  banner.textContent = text;
  banner.className = bad ? "banner bad" : "banner";
}

// -- render loop: draw whatever arrived most recently -------------------------

function draw(): void {
  if (mapImage) {
    createImageBitmap(mapImage).then((bmp) => {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(bmp, 0, 0, CANVAS_W, CANVAS_H);
      drawGlyph();
    });
  } else {
    ctx.fillStyle = "#d0d0d0";
    ctx.fillRect(0, 0, CANVAS_W, CANVAS_H);
    drawGlyph();
  }
  requestAnimationFrame(() => setTimeout(draw, 50));
}

function drawGlyph(): void {
  if (!latestState) return;
  const pts = glyphPoints(latestState);
  ctx.beginPath();
  ctx.moveTo(pts[0].cx, pts[0].cy);
  for (const p of pts.slice(1)) ctx.lineTo(p.cx, p.cy);
  ctx.closePath();
  ctx.fillStyle = latestState.pose_valid ? "#d03020" : "#909090";
  ctx.fill();
  updateTelemetry(latestState);
}

function updateTelemetry(s: StateFields): void {
  const t = formatTelemetry(s);
  el("pose").textContent = t.pose;
  el("velocity").textContent = t.velocity;
  el("distance").textContent = t.distance;
  el("battery").textContent = t.battery;
  el("mode").textContent = t.mode;
  el("session-time").textContent = t.time;
  el("overruns").textContent = t.overruns;
}

// -- connection ---------------------------------------------------------------

loginForm.addEventListener("submit", async (ev) => {
  ev.preventDefault();
  const host = location.hostname || "localhost";
  const port = Number(location.port || 7421);
  const user = el<HTMLInputElement>("user").value;
  const password = el<HTMLInputElement>("password").value;
  try {
    client = new LabClient(labUrl(host, port), (url) => new WebSocket(url) as never);
    await client.ready();
    const reply = await client.auth(user, password);
    if (reply.type !== FrameType.AUTH_OK) {
      note(`login rejected: ${reply.body.reason}`, true);
      client.close();
      client = null;
      return;
    }
    note(`logged in as ${client.user}`);
    client.onState = (s) => {
      latestState = s;
    };
    client.onMap = (m) => {
      latestMap = m;
      mapImage = new ImageData(mapToRgba(m), m.cols, m.rows);
    };
    client.onEvent = (e) => {
      if (e.kind === "auto-disabled") note(`controller disabled: ${e.reason}`, true);
      else if (e.kind === "overrun") note(`controller overran its budget`, true);
      else if (e.kind !== "unexpected-frame") note(`event: ${e.kind}`);
    };
    client.onClose = () => note("connection closed", true);
    loginForm.classList.add("hidden");
    controls.classList.remove("hidden");
    const open = await client.lifecycle("open");
    if (open.body.plugin_error) note(`controller failed: ${open.body.plugin_error}`, true);
    await client.lifecycle("run");
    running = true;
  } catch (err) {
    note(String(err), true);
  }
});

// -- driving --------------------------------------------------------------------

const drive = new DriveLoop((u1, u2) => {
  if (client && running) client.drive(u1, u2).catch(() => undefined);
});
setInterval(() => drive.poll(), drive.periodMs);

window.addEventListener("keydown", (ev) => {
  const key = KEY_BINDINGS[ev.key];
  if (key) {
    drive.press(key);
    ev.preventDefault();
  }
});
window.addEventListener("keyup", (ev) => {
  const key = KEY_BINDINGS[ev.key];
  if (key) drive.release(key);
});

for (const [id, key] of [["btn-fwd", "forward"], ["btn-back", "back"],
                         ["btn-left", "left"], ["btn-right", "right"]] as const) {
  const btn = el<HTMLButtonElement>(id);
  btn.addEventListener("pointerdown", () => drive.press(key));
  btn.addEventListener("pointerup", () => drive.release(key));
  btn.addEventListener("pointerleave", () => drive.release(key));
}

el<HTMLButtonElement>("btn-auto").addEventListener("click", async () => {
  if (!client) return;
  const target = el("mode").textContent === "automatic" ? "manual" : "automatic";
  const reply = await client.setVar("mode", target);
  if (reply.type === FrameType.ERROR) note(`mode: ${reply.body.reason}`, true);
});

el<HTMLButtonElement>("btn-real").addEventListener("click", async () => {
  if (!client) return;
  const reply = await client.setVar("backend", "real");
  if (reply.type === FrameType.ERROR) note(`backend: ${reply.body.reason}`, true);
});

el<HTMLButtonElement>("btn-stop-run").addEventListener("click", async () => {
  if (!client) return;
  const reply = await client.lifecycle(running ? "stop" : "run");
  if (reply.type === FrameType.ACK) running = !running;
  el("btn-stop-run").textContent = running ? "pause" : "resume";
});

// -- files ----------------------------------------------------------------------

el<HTMLInputElement>("upload").addEventListener("change", async (ev) => {
  const input = ev.target as HTMLInputElement;
  if (!client || !input.files || input.files.length === 0) return;
  const file = input.files[0];
  const bytes = new Uint8Array(await file.arrayBuffer());
  const reply = await client.putFile("controller.py", bytes);
  if (reply.type === FrameType.ACK) {
    note("controller uploaded; close and reopen the session to load it");
  } else {
    note(`upload failed: ${reply.body.reason}`, true);
  }
});

el<HTMLButtonElement>("btn-download").addEventListener("click", async () => {
  if (!client) return;
  const closed = await client.lifecycle("close");
  running = false;
  const hist = String(closed.body.history ?? "");
  if (!hist) {
    note("no history reported", true);
    return;
  }
  try {
    const csv = await client.getFile(`${hist}/state.csv`);
    const blob = new Blob([csv as BufferSource], { type: "text/csv" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `${hist}-state.csv`;
    a.click();
    note(`downloaded ${hist}/state.csv; reopening session`);
  } finally {
    await client.lifecycle("open");
    await client.lifecycle("run");
    running = true;
  }
});

note("not connected");
draw();
