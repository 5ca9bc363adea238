"""Host side of the controller plugin boundary.

User controllers run in a separate process and are spoken to over the
length-prefixed JSON wire.  The host never blocks the simulation on a
controller: every hook call carries a wall-clock deadline, replies that
miss it are discarded when they eventually arrive, and repeated
overruns shut automatic mode down.
"""

from __future__ import annotations

import logging
import os
import subprocess
import sys
import threading
import time

from .plugin_wire import PROTOCOL_VERSION, WireError, read_message, write_message

log = logging.getLogger(__name__)

LAUNCH_TIMEOUT_S = 5.0   # hello + init, generous; the 200 ms budget is per tick
CLOSE_TIMEOUT_S = 5.0


class PluginError(RuntimeError):
    """Launch/handshake failure; the session stays in manual-only mode."""


class HookOverrun(RuntimeError):
    """The controller missed its reply deadline."""


class HookFailure(RuntimeError):
    """The controller replied with an error, sent garbage, or died."""


class PluginHandle:
    """One live controller process with request/reply bookkeeping."""

    def __init__(self, proc: subprocess.Popen, stderr_path: str | None = None):
        self.proc = proc
        self.stderr_path = stderr_path
        self.hooks: tuple[str, ...] = ()
        self.late_replies = 0
        self._next_id = 1
        self._replies: dict[int, dict] = {}
        self._stale: set[int] = set()
        self._dead = False
        self._cond = threading.Condition()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            while True:
                msg = read_message(self.proc.stdout)
                with self._cond:
                    rid = msg.get("id")
                    if rid in self._stale:
                        self._stale.discard(rid)
                        self.late_replies += 1
                        log.info("discarded late controller reply id=%s", rid)
                        continue
                    self._replies[rid] = msg
                    self._cond.notify_all()
        except WireError:
            with self._cond:
                self._dead = True
                self._cond.notify_all()

    @property
    def alive(self) -> bool:
        return not self._dead and self.proc.poll() is None

    def call(self, hook: str, args: dict, timeout_s: float):
        """Run one hook with a wall-clock deadline.

        Raises HookOverrun when the deadline passes (the eventual reply
        will be dropped), HookFailure on controller errors or death.
        """
        with self._cond:
            if self._dead:
                raise HookFailure("controller process is gone")
            rid = self._next_id
            self._next_id += 1
        try:
            write_message(self.proc.stdin,
                          {"id": rid, "hook": hook, "args": args})
        except (BrokenPipeError, OSError) as exc:
            raise HookFailure(f"controller pipe broken: {exc}") from exc

        deadline = time.monotonic() + timeout_s
        with self._cond:
            while rid not in self._replies:
                if self._dead:
                    raise HookFailure("controller died before replying"
                                      + self._stderr_tail())
                remaining = deadline - time.monotonic()
                if remaining <= 0.0:
                    self._stale.add(rid)
                    raise HookOverrun(
                        f"{hook} exceeded its {timeout_s * 1000:.0f} ms budget")
                self._cond.wait(timeout=remaining)
            reply = self._replies.pop(rid)
        if reply.get("ok") is not True:
            raise HookFailure(str(reply.get("error", "controller error")))
        return reply.get("result")

    def _stderr_tail(self) -> str:
        if not self.stderr_path or not os.path.exists(self.stderr_path):
            return ""
        try:
            with open(self.stderr_path, "r", errors="replace") as fh:
                tail = fh.read()[-800:]
            return ("\n--- controller stderr ---\n" + tail) if tail.strip() else ""
        except OSError:
            return ""

    def terminate(self) -> None:
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait(timeout=5.0)


def _runner_command(workspace: str, builtin_module: str | None) -> list[str]:
    if builtin_module:
        return [sys.executable, "-m", "robolab.plugin_runner",
                "--module", builtin_module]
    artifact = os.path.join(workspace, "controller.py")
    if os.path.isfile(artifact):
        return [sys.executable, "-m", "robolab.plugin_runner", artifact]
    candidates = [f for f in sorted(os.listdir(workspace))
                  if f.endswith(".py") and not f.startswith("_")] \
        if os.path.isdir(workspace) else []
    if candidates:
        return [sys.executable, "-m", "robolab.plugin_runner",
                os.path.join(workspace, candidates[0])]
    raise PluginError(f"no controller artifact in workspace {workspace!r} "
                      f"(upload controller.py first)")


def launch(workspace: str, builtin_module: str | None = None) -> PluginHandle:
    """Spawn the controller process, handshake, and run its init hook.

    Any failure raises PluginError; the caller surfaces it and keeps
    the session in manual-only mode.
    """
    cmd = _runner_command(workspace, builtin_module)
    stderr_path = None
    stderr_fh = subprocess.DEVNULL
    if os.path.isdir(workspace):
        stderr_path = os.path.join(workspace, "controller_stderr.log")
        stderr_fh = open(stderr_path, "wb")
    try:
        proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=stderr_fh, cwd=workspace if os.path.isdir(workspace) else None)
    except OSError as exc:
        raise PluginError(f"cannot spawn controller: {exc}") from exc
    finally:
        if stderr_fh is not subprocess.DEVNULL:
            stderr_fh.close()

    handle = PluginHandle(proc, stderr_path)
    try:
        hello = handle.call("hello", {"version": PROTOCOL_VERSION},
                            LAUNCH_TIMEOUT_S)
        handle.hooks = tuple(hello.get("hooks", ()))
        handle.call("init", {}, LAUNCH_TIMEOUT_S)
    except (HookOverrun, HookFailure) as exc:
        handle.terminate()
        raise PluginError(f"controller failed to start: {exc}") from exc
    return handle


def finalize(handle: PluginHandle | None, history: dict) -> None:
    """Run the close hook; host-side history is written regardless."""
    if handle is None:
        return
    try:
        handle.call("close", {"history": history}, CLOSE_TIMEOUT_S)
    except (HookOverrun, HookFailure) as exc:
        log.warning("controller close hook failed: %s", exc)
    finally:
        handle.terminate()
