// Connection + session client. Enforces the protocol state machine on the
// sending side: nothing but AUTH leaves this client before AUTH_OK arrives.

import {
  FrameType,
  FrameDecoder,
  StateFields,
  WorldMap,
  decodeJson,
  decodeMap,
  decodeState,
  encodeFrame,
  encodeJsonFrame,
} from "./protocol.js";

/** Structural subset of the browser WebSocket that `ws` also satisfies. */
export interface SocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: ArrayBuffer | Uint8Array }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: Uint8Array): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface JsonReply {
  type: number;
  body: Record<string, unknown>;
}

type Phase = "connecting" | "connected" | "authed" | "closed";

const CHUNK = 65536;

export class LabClient {
  phase: Phase = "connecting";
  user = "";
  workspace = "";
  onState: ((s: StateFields) => void) | null = null;
  onMap: ((m: WorldMap) => void) | null = null;
  onEvent: ((e: Record<string, unknown>) => void) | null = null;
  onClose: (() => void) | null = null;

  private sock: SocketLike;
  private decoder = new FrameDecoder();
  private waiters: Array<{
    types: number[];
    resolve: (r: JsonReply) => void;
  }> = [];
  private fileSink: { chunks: Uint8Array[]; expect: number } | null = null;

  constructor(url: string, factory: SocketFactory) {
    this.sock = factory(url);
    this.sock.binaryType = "arraybuffer";
    this.sock.onopen = () => {
      this.phase = "connected";
    };
    this.sock.onmessage = (ev) => {
      const bytes =
        ev.data instanceof Uint8Array ? ev.data : new Uint8Array(ev.data);
      for (const frame of this.decoder.feed(bytes)) this.dispatch(frame.type, frame.payload);
    };
    this.sock.onclose = () => {
      this.phase = "closed";
      if (this.onClose) this.onClose();
    };
    this.sock.onerror = () => undefined;
  }

  ready(timeoutMs = 5000): Promise<void> {
    if (this.phase !== "connecting") return Promise.resolve();
    return new Promise((resolve, reject) => {
      const prev = this.sock.onopen;
      const timer = setTimeout(() => reject(new Error("connect timeout")), timeoutMs);
      this.sock.onopen = (ev) => {
        clearTimeout(timer);
        if (prev) prev(ev);
        resolve();
      };
    });
  }

  private dispatch(type: number, payload: Uint8Array): void {
    switch (type) {
      case FrameType.STATE:
        if (this.onState) this.onState(decodeState(payload));
        return;
      case FrameType.MAP:
        if (this.onMap) this.onMap(decodeMap(payload));
        return;
      case FrameType.EVENT:
        if (this.onEvent) this.onEvent(decodeJson(payload));
        return;
      case FrameType.FILE_CHUNK:
        if (this.fileSink) this.fileSink.chunks.push(payload);
        return;
      default: {
        const body = decodeJson(payload);
        const i = this.waiters.findIndex((w) => w.types.includes(type));
        if (i >= 0) {
          const [waiter] = this.waiters.splice(i, 1);
          waiter.resolve({ type, body });
        } else if (this.onEvent) {
          this.onEvent({ kind: "unexpected-frame", type, ...body });
        }
      }
    }
  }

  private expect(types: number[], timeoutMs = 5000): Promise<JsonReply> {
    return new Promise((resolve, reject) => {
      const waiter = {
        types,
        resolve: (r: JsonReply) => {
          clearTimeout(timer);
          resolve(r);
        },
      };
      const timer = setTimeout(() => {
        const i = this.waiters.indexOf(waiter);
        if (i >= 0) this.waiters.splice(i, 1);
        reject(new Error(`no reply of type ${types} within ${timeoutMs} ms`));
      }, timeoutMs);
      this.waiters.push(waiter);
    });
  }

  /** State-machine guard: only AUTH may leave before authentication. */
  private sendFrame(type: number, frame: Uint8Array): void {
    if (this.phase === "closed") throw new Error("connection is closed");
    if (this.phase !== "authed" && type !== FrameType.AUTH) {
      throw new Error("not authenticated; refusing to send");
    }
    this.sock.send(frame);
  }

  async auth(user: string, password: string): Promise<JsonReply> {
    this.sendFrame(
      FrameType.AUTH,
      encodeJsonFrame(FrameType.AUTH, { user, password }),
    );
    const reply = await this.expect([FrameType.AUTH_OK, FrameType.REJECT]);
    if (reply.type === FrameType.AUTH_OK) {
      this.phase = "authed";
      this.user = String(reply.body.user ?? "");
      this.workspace = String(reply.body.workspace ?? "");
    }
    return reply;
  }

  lifecycle(action: "open" | "run" | "stop" | "close"): Promise<JsonReply> {
    this.sendFrame(
      FrameType.LIFECYCLE,
      encodeJsonFrame(FrameType.LIFECYCLE, { action }),
    );
    return this.expect([FrameType.ACK, FrameType.ERROR], 15000);
  }

  setVar(name: string, value: unknown): Promise<JsonReply> {
    this.sendFrame(FrameType.SET, encodeJsonFrame(FrameType.SET, { name, value }));
    return this.expect([FrameType.ACK, FrameType.ERROR]);
  }

  /** Fire-and-forget drive write; replies are consumed via expect(). */
  drive(u1: number, u2: number): Promise<JsonReply> {
    return this.setVar("drive", [u1, u2]);
  }

  async putFile(path: string, data: Uint8Array): Promise<JsonReply> {
    const digest = await sha256hex(data);
    this.sendFrame(
      FrameType.FILE_HDR,
      encodeJsonFrame(FrameType.FILE_HDR, {
        op: "put",
        path,
        size: data.length,
        sha256: digest,
      }),
    );
    for (let off = 0; off < data.length; off += CHUNK) {
      this.sendFrame(
        FrameType.FILE_CHUNK,
        encodeFrame(FrameType.FILE_CHUNK, data.slice(off, off + CHUNK)),
      );
    }
    return this.expect([FrameType.ACK, FrameType.ERROR], 15000);
  }

  async getFile(path: string): Promise<Uint8Array> {
    this.fileSink = { chunks: [], expect: 0 };
    this.sendFrame(
      FrameType.FILE_HDR,
      encodeJsonFrame(FrameType.FILE_HDR, { op: "get", path }),
    );
    const header = await this.expect([FrameType.FILE_HDR, FrameType.ERROR], 15000);
    if (header.type === FrameType.ERROR) {
      this.fileSink = null;
      throw new Error(String(header.body.reason ?? "download failed"));
    }
    await this.expect([FrameType.FILE_END], 30000);
    const sink = this.fileSink;
    this.fileSink = null;
    const size = sink.chunks.reduce((a, c) => a + c.length, 0);
    const out = new Uint8Array(size);
    let at = 0;
    for (const chunk of sink.chunks) {
      out.set(chunk, at);
      at += chunk.length;
    }
    if ((await sha256hex(out)) !== header.body.sha256) {
      throw new Error("digest mismatch on download");
    }
    return out;
  }

  close(): void {
    this.phase = "closed";
    this.sock.close();
  }
}

async function sha256hex(data: Uint8Array): Promise<string> {
  const buf = await crypto.subtle.digest("SHA-256", data as BufferSource);
  return Array.from(new Uint8Array(buf))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}

export function labUrl(host: string, port: number): string {
  return `ws://${host}:${port}/lab`;
}
