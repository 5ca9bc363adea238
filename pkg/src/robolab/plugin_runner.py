"""Controller-side executor: runs user hook code in its own process.

Loads a controller artifact (a Python file, or a module for the
built-in example), then serves the four lifecycle hooks over stdio
using the length-prefixed JSON wire.  The runner owns the controller's
working copy of the world matrix; `compute_world` replies carry only
the cells that changed, as (row, col, log_odds) triples.

User code may print freely: sys.stdout is rebound to stderr before the
artifact is imported so the wire stays clean.
"""

from __future__ import annotations

import argparse
import hashlib
import importlib
import importlib.util
import sys
import traceback

import numpy as np

from .grid import LOGODDS_CLAMP, ROWS, COLS
from .plugin_wire import PROTOCOL_VERSION, WireError, read_message, write_message

PRIOR = 0.5  # controllers start from the same prior grid as the lab


def _load_artifact(path: str | None, module: str | None):
    if module:
        return importlib.import_module(module)
    spec = importlib.util.spec_from_file_location("user_controller", path)
    if spec is None or spec.loader is None:
        raise ImportError(f"cannot load controller from {path}")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def grid_digest(world: np.ndarray) -> str:
    return hashlib.sha256(world.tobytes()).hexdigest()


class HookServer:
    def __init__(self, mod):
        self.hooks = {name: getattr(mod, name)
                      for name in ("init", "compute_world", "control", "close")
                      if callable(getattr(mod, name, None))}
        self.world = np.zeros((ROWS, COLS), dtype=np.float64)
        self.baseline = self.world.copy()

    def handle(self, hook: str, args: dict):
        if hook == "hello":
            if args.get("version") != PROTOCOL_VERSION:
                raise RuntimeError(
                    f"protocol version mismatch: lab speaks "
                    f"{args.get('version')}, controller speaks {PROTOCOL_VERSION}")
            return {"version": PROTOCOL_VERSION,
                    "hooks": sorted(self.hooks)}
        if hook == "init":
            if "init" in self.hooks:
                self.hooks["init"]()
            return None
        if hook == "compute_world":
            return self._compute_world(args)
        if hook == "control":
            fn = self.hooks.get("control")
            if fn is None:
                raise RuntimeError("controller defines no control hook")
            u = fn(self.world, args["x"], args["y"], args["th"],
                   args["vx"], args["vy"], args["w"], args["d"], args["t"])
            u1, u2 = float(u[0]), float(u[1])
            return [u1, u2]
        if hook == "close":
            if "close" in self.hooks:
                self.hooks["close"](args.get("history"))
            return None
        raise RuntimeError(f"unknown hook {hook!r}")

    def _compute_world(self, args: dict):
        desync = args.get("digest") not in (None, grid_digest(self.baseline))
        fn = self.hooks.get("compute_world")
        if fn is not None:
            out = fn(self.world, args["x"], args["y"], args["th"], args["d"])
            if out is not None:
                self.world = np.asarray(out, dtype=np.float64)
                if self.world.shape != (ROWS, COLS):
                    raise RuntimeError(
                        f"compute_world must keep the {ROWS}x{COLS} shape")
        np.clip(self.world, -LOGODDS_CLAMP, LOGODDS_CLAMP, out=self.world)
        changed = np.nonzero(self.world != self.baseline)
        delta = [[int(r), int(c), float(self.world[r, c])]
                 for r, c in zip(*changed)]
        self.baseline = self.world.copy()
        return {"delta": delta, "desync": desync}


def serve(mod, rx, tx) -> None:
    server = HookServer(mod)
    while True:
        try:
            msg = read_message(rx)
        except WireError:
            return
        reply = {"id": msg.get("id")}
        try:
            reply["ok"] = True
            reply["result"] = server.handle(msg.get("hook", ""),
                                            msg.get("args") or {})
        except BaseException:
            reply = {"id": msg.get("id"), "ok": False,
                     "error": traceback.format_exc(limit=8)}
        write_message(tx, reply)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="robolab-plugin-runner")
    parser.add_argument("artifact", nargs="?", help="controller .py file")
    parser.add_argument("--module", help="import a controller module instead")
    opts = parser.parse_args(argv)
    if not opts.artifact and not opts.module:
        parser.error("an artifact path or --module is required")

    tx = sys.stdout.buffer
    rx = sys.stdin.buffer
    sys.stdout = sys.stderr  # keep user prints off the wire
    try:
        mod = _load_artifact(opts.artifact, opts.module)
    except BaseException:
        # one best-effort error reply so the lab sees why init failed
        write_message(tx, {"id": None, "ok": False,
                           "error": traceback.format_exc(limit=8)})
        return 1
    serve(mod, rx, tx)
    return 0


if __name__ == "__main__":
    sys.exit(main())
