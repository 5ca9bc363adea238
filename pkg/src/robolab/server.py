"""The lab's network front end.

One multiplexed framed protocol serves everything: authentication
against the booking store, lifecycle commands, asynchronous control
writes, synchronous state/map push, and workspace file transfer.  The
same frame bytes run over raw TCP and over the browser socket
transport on the adjacent port.

Threading: every connection gets a reader thread (the accept handler)
and a writer thread draining a bounded queue (slow clients lose the
oldest push frames, never the connection).  An open session adds a
runner thread that owns simulated time; readers touch the session only
under its lock, so command dispatch stays sub-millisecond while pushes
read immutable snapshots.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import secrets
import socket
import threading
import time
from collections import deque

from . import protocol as P
from . import wsock
from .booking import EXAMPLE_USER, BookingStore
from .config import LabConfig
from .plugin_host import PluginError, launch
from .protocol import FrameDecoder, ProtocolError
from .session import AUTOMATIC, MANUAL, Session, SessionError

log = logging.getLogger(__name__)

MAX_QUEUED_FRAMES = 1024
MAX_UPLOAD_BYTES = 64 * 1024 * 1024
PACING_SLICE_S = 0.01


class Transport:
    """Common interface over a TCP socket or a websocket connection."""

    def __init__(self, sock: socket.socket, ws: wsock.WebSocketConnection | None):
        self.sock = sock
        self.ws = ws
        self._decoder = FrameDecoder()

    def frames(self):
        """Yield (type, payload) until the peer goes away."""
        if self.ws is not None:
            while True:
                try:
                    message = self.ws.recv_message()
                except wsock.WebSocketError:
                    return
                yield from self._decoder.feed(message)
        else:
            while True:
                try:
                    data = self.sock.recv(65536)
                except OSError:
                    return
                if not data:
                    return
                yield from self._decoder.feed(data)

    def send(self, frame: bytes) -> None:
        if self.ws is not None:
            self.ws.send_message(frame)
        else:
            self.sock.sendall(frame)

    def close(self) -> None:
        if self.ws is not None:
            self.ws.close()
        else:
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()


class Connection:
    """State machine for one client connection."""

    PUSH_TYPES = (P.STATE, P.MAP, P.EVENT)

    def __init__(self, server: "LabServer", transport: Transport, peer: str):
        self.server = server
        self.transport = transport
        self.peer = peer
        self.user: str | None = None
        self.token: str | None = None
        self.session: Session | None = None
        self.phase = "idle"            # idle -> open -> running/stopped
        self.lock = threading.RLock()
        self.dropped_frames = 0
        self._events_sent = 0
        self._rx_file: dict | None = None
        self._queue: deque[bytes] = deque()
        self._queue_cond = threading.Condition()
        self._closing = False
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()
        self._runner: threading.Thread | None = None

    # -- outbound ------------------------------------------------------------

    def enqueue(self, frame: bytes) -> None:
        with self._queue_cond:
            if len(self._queue) >= MAX_QUEUED_FRAMES:
                # shed the oldest push frame; commands/acks survive
                for i, queued in enumerate(self._queue):
                    if queued[4] in self.PUSH_TYPES:
                        del self._queue[i]
                        break
                else:
                    self._queue.popleft()
                self.dropped_frames += 1
            self._queue.append(frame)
            self._queue_cond.notify()

    def _write_loop(self) -> None:
        while True:
            with self._queue_cond:
                while not self._queue and not self._closing:
                    self._queue_cond.wait()
                if self._closing and not self._queue:
                    return
                frame = self._queue.popleft()
            try:
                self.transport.send(frame)
            except OSError:
                return

    def send_json(self, ftype: int, obj: dict) -> None:
        self.enqueue(P.encode_json_frame(ftype, obj))

    def error(self, code: str, reason: str) -> None:
        self.send_json(P.ERROR, {"code": code, "reason": reason})

    # -- inbound dispatch ------------------------------------------------------

    def run(self) -> None:
        try:
            for ftype, payload in self.transport.frames():
                try:
                    self.handle_frame(ftype, payload)
                except ProtocolError as exc:
                    self.error(P.E_BAD_FRAME, str(exc))
        except ProtocolError as exc:
            self.error(P.E_BAD_FRAME, f"unrecoverable framing error: {exc}")
        finally:
            self.shutdown()

    def handle_frame(self, ftype: int, payload: bytes) -> None:
        if ftype == P.AUTH:
            self.handle_auth(P.decode_json_payload(payload))
            return
        if ftype not in P.FRAME_NAMES:
            self.error(P.E_UNKNOWN_TYPE, f"unknown frame type {ftype:#04x}")
            return
        if self.user is None:
            self.error(P.E_NOT_AUTHENTICATED,
                       "authenticate before sending anything else")
            return
        if ftype == P.LIFECYCLE:
            self.handle_lifecycle(P.decode_json_payload(payload))
        elif ftype == P.SET:
            self.handle_set(P.decode_json_payload(payload))
        elif ftype == P.FILE_HDR:
            self.handle_file_header(P.decode_json_payload(payload))
        elif ftype == P.FILE_CHUNK:
            self.handle_file_chunk(payload)
        elif ftype == P.FILE_END:
            self.error(P.E_FILE, "unexpected FILE_END")
        else:
            self.error(P.E_UNKNOWN_TYPE,
                       f"clients do not send {P.FRAME_NAMES[ftype]}")

    # -- auth ------------------------------------------------------------------

    def handle_auth(self, obj: dict) -> None:
        if self.user is not None:
            self.error(P.E_BAD_FRAME, "already authenticated")
            return
        user = str(obj.get("user", ""))
        password = str(obj.get("password", ""))
        store = self.server.booking
        if not store.verify(user, password):
            self.send_json(P.REJECT, {"code": P.BAD_CREDENTIALS,
                                      "reason": "unknown user or bad password"})
            return
        allowed, reason = store.validate(user, time.time())
        if not allowed:
            self.send_json(P.REJECT, {"code": P.NO_SLOT, "reason": reason})
            return
        if not self.server.bind_user(user, self):
            self.send_json(P.REJECT, {"code": P.BUSY,
                                      "reason": "user already has an active "
                                                "session"})
            return
        self.user = user
        self.token = secrets.token_hex(16)
        self.send_json(P.AUTH_OK, {"token": self.token, "user": user,
                                   "workspace": store.users[user].workspace})

    # -- lifecycle ---------------------------------------------------------------

    def handle_lifecycle(self, obj: dict) -> None:
        action = obj.get("action")
        with self.lock:
            if action == "open":
                self.do_open()
            elif action == "run":
                if self.phase not in ("open", "stopped"):
                    self.error(P.E_ILLEGAL_TRANSITION,
                               f"cannot run from phase {self.phase!r}")
                    return
                self.phase = "running"
                # initial map push happens once per open; later runs rely
                # on the change-gated path
                self.push_map(force=self._pushed_map_version < 0)
                self.send_json(P.ACK, {"op": "run"})
            elif action == "stop":
                if self.phase != "running":
                    self.error(P.E_ILLEGAL_TRANSITION,
                               f"cannot stop from phase {self.phase!r}")
                    return
                self.phase = "stopped"
                self.send_json(P.ACK, {"op": "stop"})
            elif action == "close":
                if self.phase == "idle":
                    self.error(P.E_ILLEGAL_TRANSITION, "nothing is open")
                    return
                hist = self.do_close()
                self.send_json(P.ACK, {"op": "close", "history": hist})
            else:
                self.error(P.E_BAD_FRAME, f"unknown lifecycle action "
                                          f"{action!r}")

    def do_open(self) -> None:
        if self.phase != "idle":
            self.error(P.E_ILLEGAL_TRANSITION, "a session is already open")
            return
        workspace = self.server.workspace_for(self.user)
        plugin, plugin_error = None, None
        try:
            if self.user == EXAMPLE_USER:
                plugin = launch(workspace,
                                builtin_module="robolab.example_plugin")
            elif _has_artifact(workspace):
                plugin = launch(workspace)
        except PluginError as exc:
            plugin_error = str(exc)
        self.session = Session(self.user, self.server.config, plugin=plugin)
        self.phase = "open"
        self._events_sent = 0
        self._last_state_ms = 0
        self._last_map_push_ms = -10 ** 9
        self._pushed_map_version = -1
        if self._runner is None:
            self._runner = threading.Thread(target=self._run_session,
                                            daemon=True)
            self._runner.start()
        ack = {"op": "open", "plugin": plugin is not None}
        if plugin_error:
            ack["plugin_error"] = plugin_error  # manual mode still works
        self.send_json(P.ACK, ack)

    def do_close(self) -> str | None:
        session, self.session = self.session, None
        self.phase = "idle"
        if session is None:
            return None
        try:
            path = session.finalize(self.server.workspace_for(self.user))
            return os.path.basename(path)
        except OSError as exc:
            log.error("history write failed for %s: %s", self.user, exc)
            return None

    # -- session pacing -----------------------------------------------------------

    def _run_session(self) -> None:
        try:
            self._pace_loop()
        except Exception:
            log.exception("session runner for %s crashed", self.user)

    def _pace_loop(self) -> None:
        last = time.monotonic()
        while not self._closing:
            time.sleep(PACING_SLICE_S)
            now = time.monotonic()
            dt_ms = int((now - last) * 1000.0)
            if dt_ms <= 0:
                continue
            with self.lock:
                if self.session is None or self.phase != "running":
                    last = now
                    continue
                last = now
                # stop exactly on push boundaries so every 100 ms of
                # simulated time yields its own STATE frame
                period = self.server.config.period_state_push_ms
                remaining = min(dt_ms, 250)
                while remaining > 0:
                    to_boundary = period - self.session.t_ms % period
                    step = min(remaining, to_boundary)
                    self.session.advance_ms(step)
                    remaining -= step
                    self.push_due()

    def push_due(self) -> None:
        session = self.session
        if session is None:
            return
        period = self.server.config.period_state_push_ms
        if session.t_ms % period == 0 and session.t_ms > self._last_state_ms:
            self._last_state_ms = session.t_ms
            self.enqueue(P.encode_frame(P.STATE,
                                        P.encode_state(session.snapshot())))
        self.push_map()
        events = session.events
        while self._events_sent < len(events):
            ev = events[self._events_sent]
            self._events_sent += 1
            self.send_json(P.EVENT, {"kind": ev.kind, "t_ms": ev.t_ms,
                                     **ev.detail})
        if self.dropped_frames and self.dropped_frames != \
                getattr(self, "_reported_drops", 0):
            self._reported_drops = self.dropped_frames
            self.send_json(P.EVENT, {"kind": "frames-dropped",
                                     "count": self.dropped_frames})

    def push_map(self, force: bool = False) -> None:
        session = self.session
        if session is None:
            return
        stale = session.map_version != self._pushed_map_version
        spaced = (session.t_ms - self._last_map_push_ms) >= \
            self.server.config.period_tick_ms
        if force or (stale and spaced):
            self._pushed_map_version = session.map_version
            self._last_map_push_ms = session.t_ms
            self.enqueue(P.encode_frame(P.MAP, session.compressed_map()))

    # -- control writes --------------------------------------------------------------

    def handle_set(self, obj: dict) -> None:
        name = obj.get("name")
        value = obj.get("value")
        direction = P.variable_direction(name)
        if direction is None:
            self.error(P.E_UNKNOWN_VARIABLE, f"no such variable {name!r}")
            return
        if direction != P.CONTROL:
            self.error(P.E_INDICATOR_WRITE,
                       f"{name!r} is an indicator; clients cannot write it")
            return
        with self.lock:
            if self.session is None:
                self.error(P.E_NOT_OPEN, "open a session first")
                return
            try:
                if name == "drive":
                    u1, u2 = float(value[0]), float(value[1])
                    self.session.manual_command(u1, u2)
                elif name == "mode":
                    self.session.set_mode(str(value))
                elif name == "backend":
                    self.session.set_backend(str(value))
            except SessionError as exc:
                code = P.E_UNSUPPORTED_BACKEND if name == "backend" \
                    else P.E_REJECTED
                self.error(code, str(exc))
                return
            except (TypeError, ValueError, IndexError):
                self.error(P.E_BAD_VALUE, f"bad value for {name!r}")
                return
        self.send_json(P.ACK, {"op": "set", "name": name})

    # -- file transfer ------------------------------------------------------------------

    def _resolve(self, path: str) -> str | None:
        """Workspace-relative path or None if it escapes."""
        workspace = os.path.realpath(self.server.workspace_for(self.user))
        if not isinstance(path, str) or not path or path.startswith(("/", "\\")):
            return None
        try:
            full = os.path.realpath(os.path.join(workspace, path))
        except (ValueError, OSError):    # embedded NUL and friends
            return None
        if full != workspace and not full.startswith(workspace + os.sep):
            return None
        return full

    def handle_file_header(self, obj: dict) -> None:
        op = obj.get("op")
        path = obj.get("path", "")
        full = self._resolve(path)
        if full is None:
            log.warning("audit: %s attempted path escape %r", self.user, path)
            if self.session is not None:
                self.session.emit("path-escape", path=str(path)[:200])
            self.error(P.E_PATH_ESCAPE, f"path {path!r} leaves the workspace")
            return
        if op == "put":
            size = obj.get("size")
            if not isinstance(size, int) or size < 0 or size > MAX_UPLOAD_BYTES:
                self.error(P.E_FILE, "bad upload size")
                return
            self._rx_file = {"path": path, "full": full, "size": size,
                             "sha256": str(obj.get("sha256", "")),
                             "data": bytearray()}
            if size == 0:
                self._finish_upload()
            return
        if op == "get":
            if not os.path.isfile(full):
                self.error(P.E_FILE, f"no such file {path!r}")
                return
            with open(full, "rb") as fh:
                data = fh.read()
            digest = hashlib.sha256(data).hexdigest()
            self.send_json(P.FILE_HDR, {"op": "get", "path": path,
                                        "size": len(data), "sha256": digest})
            for off in range(0, len(data), P.FILE_CHUNK_SIZE):
                self.enqueue(P.encode_frame(
                    P.FILE_CHUNK, data[off:off + P.FILE_CHUNK_SIZE]))
            self.send_json(P.FILE_END, {"path": path, "sha256": digest})
            return
        self.error(P.E_FILE, f"unknown file op {op!r}")

    def handle_file_chunk(self, payload: bytes) -> None:
        rx = self._rx_file
        if rx is None:
            self.error(P.E_FILE, "FILE_CHUNK without a put header")
            return
        rx["data"].extend(payload)
        if len(rx["data"]) > rx["size"]:
            self._rx_file = None
            self.error(P.E_FILE, "more bytes than announced")
            return
        if len(rx["data"]) == rx["size"]:
            self._finish_upload()

    def _finish_upload(self) -> None:
        rx, self._rx_file = self._rx_file, None
        digest = hashlib.sha256(bytes(rx["data"])).hexdigest()
        if rx["sha256"] and digest != rx["sha256"]:
            self.error(P.E_DIGEST_MISMATCH,
                       f"upload digest {digest[:12]} != announced "
                       f"{rx['sha256'][:12]}; retry the transfer")
            return
        os.makedirs(os.path.dirname(rx["full"]), exist_ok=True)
        with open(rx["full"], "wb") as fh:
            fh.write(bytes(rx["data"]))
        self.send_json(P.ACK, {"op": "put", "path": rx["path"],
                               "sha256": digest})

    # -- teardown ------------------------------------------------------------------------

    def shutdown(self) -> None:
        with self.lock:
            if self._closing:
                return
            self._closing = True
            if self.phase != "idle":
                self.do_close()
        if self.user is not None:
            self.server.release_user(self.user, self)
        with self._queue_cond:
            self._queue_cond.notify()
        self.transport.close()
        self.server.forget(self)


def _has_artifact(workspace: str) -> bool:
    return os.path.isdir(workspace) and any(
        f.endswith(".py") and not f.startswith("_")
        for f in os.listdir(workspace))


class LabServer:
    """Listeners, the connection registry, and the single-user-per-session
    exclusivity rule."""

    def __init__(self, config: LabConfig, booking: BookingStore,
                 data_root: str | None = None, web_root: str | None = None,
                 tcp_port: int | None = None, ws_port: int | None = None):
        self.config = config
        self.booking = booking
        self.data_root = data_root or config.data_root
        self.web_root = web_root
        self.tcp_port = config.server_tcp_port if tcp_port is None else tcp_port
        self.ws_port = config.server_ws_port if ws_port is None else ws_port
        self.active_users: dict[str, Connection] = {}
        self.connections: set[Connection] = set()
        self._registry_lock = threading.Lock()
        self._listeners: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        self._stopping = False

    # -- user exclusivity ------------------------------------------------------

    def bind_user(self, user: str, conn: Connection) -> bool:
        with self._registry_lock:
            if user in self.active_users:
                return False
            self.active_users[user] = conn
            return True

    def release_user(self, user: str, conn: Connection) -> None:
        with self._registry_lock:
            if self.active_users.get(user) is conn:
                del self.active_users[user]

    def forget(self, conn: Connection) -> None:
        with self._registry_lock:
            self.connections.discard(conn)

    def workspace_for(self, user: str) -> str:
        ws = os.path.join(self.data_root, "workspaces",
                          self.booking.users[user].workspace)
        os.makedirs(ws, exist_ok=True)
        return ws

    # -- listeners ----------------------------------------------------------------

    def start(self) -> None:
        os.makedirs(self.data_root, exist_ok=True)
        tcp = _listen(self.tcp_port)
        try:
            web = _listen(self.ws_port)
        except OSError:
            tcp.close()
            raise
        self._listeners = [tcp, web]
        self.tcp_port = tcp.getsockname()[1]
        self.ws_port = web.getsockname()[1]
        for sock, kind in ((tcp, "tcp"), (web, "web")):
            thread = threading.Thread(target=self._accept_loop,
                                      args=(sock, kind), daemon=True)
            thread.start()
            self._threads.append(thread)
        log.info("lab server up: tcp=%d web=%d data=%s",
                 self.tcp_port, self.ws_port, self.data_root)

    def _accept_loop(self, listener: socket.socket, kind: str) -> None:
        while not self._stopping:
            try:
                sock, addr = listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(target=self._serve_connection,
                             args=(sock, addr, kind), daemon=True).start()

    def _serve_connection(self, sock: socket.socket, addr, kind: str) -> None:
        peer = f"{addr[0]}:{addr[1]}"
        try:
            if kind == "web":
                ws = wsock.accept(sock, self.web_root)
                if ws is None:
                    return  # plain HTTP request, already answered
                transport = Transport(sock, ws)
            else:
                transport = Transport(sock, None)
        except (wsock.WebSocketError, OSError) as exc:
            log.debug("handshake with %s failed: %s", peer, exc)
            try:
                sock.close()
            except OSError:
                pass
            return
        conn = Connection(self, transport, peer)
        with self._registry_lock:
            self.connections.add(conn)
        conn.run()

    def stop(self) -> None:
        self._stopping = True
        for listener in self._listeners:
            try:
                listener.close()
            except OSError:
                pass
        with self._registry_lock:
            conns = list(self.connections)
        for conn in conns:
            conn.shutdown()


def _listen(port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind(("0.0.0.0", port))
    sock.listen(64)
    return sock


def serve_forever(server: LabServer) -> None:
    server.start()
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
