"""Operator command line: serve the lab, run scripted sessions, render maps,
generate worlds, and administer users and booking slots.

Scripted sessions use a line-oriented format: directives first (`seed`,
`user`, `plugin`, `config`), then timed commands `t command args...`
with t in ascending seconds.  See README.md for the full grammar.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from datetime import datetime

import numpy as np

from . import plugin_host
from .booking import BookingError, BookingStore, load_or_create
from .codec import CodecError, CompressedWorld, decompress
from .config import ConfigError, LabConfig, load_config
from .grid import ROWS, COLS, to_pgm
from .plugin_host import PluginError
from .server import LabServer, serve_forever
from .session import Session, SessionError
from .worldgen import describe, generate_world

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_POLICY = 2


class CliError(Exception):
    pass


def fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def data_root(opts) -> str:
    return (getattr(opts, "data", None) or os.environ.get("ROBOLAB_DATA")
            or "./labdata")


def booking_path(opts) -> str:
    root = data_root(opts)
    os.makedirs(root, exist_ok=True)
    return os.path.join(root, "booking.txt")


# -- serve ---------------------------------------------------------------------

def cmd_serve(opts) -> int:
    try:
        cfg = load_config(opts.config) if opts.config else LabConfig()
    except (ConfigError, OSError) as exc:
        return fail(str(exc))
    root = data_root(opts)
    cfg.data_root = root
    tcp_port = opts.tcp_port or int(os.environ.get("ROBOLAB_TCP_PORT", 0)) \
        or cfg.server_tcp_port
    ws_port = opts.ws_port or int(os.environ.get("ROBOLAB_WS_PORT", 0)) \
        or cfg.server_ws_port
    web_root = opts.web_root
    if web_root is None and os.path.isdir("frontend/dist"):
        web_root = "frontend/dist"
    store = load_or_create(booking_path(opts))
    server = LabServer(cfg, store, data_root=root, web_root=web_root,
                       tcp_port=tcp_port, ws_port=ws_port)
    try:
        serve_forever(server)
    except OSError as exc:
        return fail(f"cannot listen on ports {tcp_port}/{ws_port}: {exc}")
    return EXIT_OK


# -- scripted runs ------------------------------------------------------------------

def parse_script(text: str):
    """Returns (directives dict, [(t_ms, command, args)])."""
    directives = {"seed": None, "user": "example", "plugin": "none",
                  "config": []}
    timeline: list[tuple[int, str, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        head = parts[0]
        if head in ("seed", "user", "plugin"):
            if len(parts) != 2:
                raise CliError(f"script line {lineno}: {head} takes one value")
            directives[head] = parts[1]
            continue
        if head == "config":
            if len(parts) != 3:
                raise CliError(f"script line {lineno}: config KEY VALUE")
            directives["config"].append((parts[1], parts[2]))
            continue
        try:
            t_ms = int(round(float(head) * 1000.0))
        except ValueError:
            raise CliError(f"script line {lineno}: expected a timestamp or "
                           f"directive, got {head!r}") from None
        if len(parts) < 2:
            raise CliError(f"script line {lineno}: missing command")
        if timeline and t_ms < timeline[-1][0]:
            raise CliError(f"script line {lineno}: timestamps must ascend")
        timeline.append((t_ms, parts[1], parts[2:]))
    return directives, timeline


def build_run_config(directives, opts) -> LabConfig:
    cfg = load_config(opts.config) if opts.config else LabConfig()
    if directives["config"]:
        # parse the overrides together (so `defects off` composes), then
        # re-apply only the mentioned keys on top of cfg
        from .config import _KEY_MAP, parse_config
        lines = "\n".join(f"{k} = {v}" for k, v in directives["config"])
        override = parse_config(lines)
        mentioned = {k for k, _ in directives["config"]}
        if "defects" in mentioned:
            cfg = override
        else:
            for key in mentioned:
                fieldname = _KEY_MAP[key]
                setattr(cfg, fieldname, getattr(override, fieldname))
    if directives["seed"] is not None:
        cfg.seed = int(directives["seed"])
    if opts.seed is not None:
        cfg.seed = opts.seed
    return cfg


def cmd_run(opts) -> int:
    try:
        text = open(opts.script, "r", encoding="utf-8").read()
    except OSError as exc:
        return fail(f"cannot read script: {exc}")
    try:
        directives, timeline = parse_script(text)
        cfg = build_run_config(directives, opts)
    except (CliError, ConfigError, ValueError) as exc:
        return fail(str(exc))

    user = directives["user"]
    workspace = opts.out or os.path.join(data_root(opts), "workspaces", user)
    os.makedirs(workspace, exist_ok=True)

    plugin = None
    spec = directives["plugin"]
    try:
        if spec == "builtin":
            plugin = plugin_host.launch(workspace,
                                        builtin_module="robolab.example_plugin")
        elif spec not in ("none", None):
            if not os.path.isfile(spec):
                return fail(f"plugin artifact {spec!r} not found")
            import shutil
            shutil.copy(spec, os.path.join(workspace, "controller.py"))
            plugin = plugin_host.launch(workspace)
    except PluginError as exc:
        return fail(f"plugin launch failed: {exc}")

    session = Session(user, cfg, plugin=plugin)
    try:
        for t_ms, command, args in timeline:
            if t_ms > session.t_ms:
                _advance(session, t_ms - session.t_ms, opts.fast)
            if command == "stop":
                break
            try:
                if command == "drive":
                    session.manual_command(float(args[0]), float(args[1]))
                elif command == "mode":
                    session.set_mode(args[0])
                elif command == "backend":
                    session.set_backend(args[0])
                elif command == "wait":
                    pass
                else:
                    return fail(f"unknown script command {command!r}")
            except SessionError as exc:
                session.emit("script-command-rejected", command=command,
                             reason=str(exc))
            except (IndexError, ValueError):
                return fail(f"bad arguments for {command!r}: {args}")
    finally:
        path = session.finalize(workspace)
    print(path)
    return EXIT_POLICY if session.auto_disabled else EXIT_OK


def _advance(session: Session, dt_ms: int, fast: bool) -> None:
    if fast:
        session.advance_ms(dt_ms)
        return
    end = time.monotonic() + dt_ms / 1000.0
    while dt_ms > 0:
        step = min(dt_ms, 50)
        session.advance_ms(step)
        dt_ms -= step
        lag = end - (dt_ms / 1000.0) - time.monotonic()
        if lag > 0:
            time.sleep(lag)


# -- rendering -----------------------------------------------------------------------

def cmd_render(opts) -> int:
    path = opts.input
    if os.path.isdir(path):
        path = os.path.join(path, "world.cw")
    try:
        data = open(path, "rb").read()
        cw = CompressedWorld.from_bytes(data)
        if (cw.rows, cw.cols) != (ROWS, COLS):
            return fail(f"unexpected map size {cw.rows}x{cw.cols}")
        bits = decompress(cw)
    except (OSError, CodecError) as exc:
        return fail(f"cannot render {opts.input!r}: {exc}")
    out = opts.output or "out.pgm"
    with open(out, "wb") as fh:
        fh.write(to_pgm(bits.astype(np.float64)))
    print(out)
    return EXIT_OK


def cmd_worldgen(opts) -> int:
    world = generate_world(opts.user)
    sys.stdout.write(describe(world))
    if opts.pgm:
        with open(opts.pgm, "wb") as fh:
            fh.write(to_pgm(world.occupancy().astype(np.float64)))
    return EXIT_OK


# -- admin -----------------------------------------------------------------------------

def _parse_instant(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text).timestamp()
    except ValueError:
        raise CliError(f"cannot parse time {text!r}; use epoch seconds or "
                       f"ISO 8601") from None


def cmd_user(opts) -> int:
    store = load_or_create(booking_path(opts))
    try:
        if opts.action in ("add", "remove") and not opts.name:
            return fail(f"user {opts.action} requires a name")
        if opts.action == "add":
            if not opts.password:
                return fail("user add requires --password")
            store.add_user(opts.name, opts.password, opts.workspace)
            store.save(booking_path(opts))
        elif opts.action == "remove":
            store.remove_user(opts.name)
            store.save(booking_path(opts))
        elif opts.action == "list":
            for name in sorted(store.users):
                user = store.users[name]
                print(f"{name} workspace={user.workspace}")
    except BookingError as exc:
        return fail(str(exc))
    return EXIT_OK


def cmd_slot(opts) -> int:
    store = load_or_create(booking_path(opts))
    try:
        if opts.action == "add":
            if not (opts.user and opts.start and opts.end):
                return fail("slot add requires USER START END")
            start = _parse_instant(opts.start)
            end = _parse_instant(opts.end)
            slot = store.reserve(opts.user, start, end)
            store.save(booking_path(opts))
            print(f"{slot.user} {slot.start!r} {slot.end!r}")
        elif opts.action == "list":
            for slot in sorted(store.slots, key=lambda s: s.start):
                print(f"{slot.user} {slot.start!r} {slot.end!r}")
    except (BookingError, CliError) as exc:
        return fail(str(exc))
    return EXIT_OK


# -- entry ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robolab",
        description="virtual robotics laboratory server and tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the lab server")
    p.add_argument("--config", help="session configuration file")
    p.add_argument("--data", help="data root (or ROBOLAB_DATA)")
    p.add_argument("--tcp-port", type=int, help="raw protocol port")
    p.add_argument("--ws-port", type=int, help="browser transport port")
    p.add_argument("--web-root", help="static files for the browser client")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run", help="execute a scripted headless session")
    p.add_argument("script", help="script file (see README)")
    p.add_argument("--fast", action="store_true",
                   help="ignore wall clock, run as fast as possible")
    p.add_argument("--seed", type=int, help="override the session seed")
    p.add_argument("--config", help="session configuration file")
    p.add_argument("--out", help="workspace directory for history output")
    p.add_argument("--data", help="data root (or ROBOLAB_DATA)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("render", help="render a compressed map to PGM")
    p.add_argument("input", help="history directory or .cw file")
    p.add_argument("-o", "--output", help="output PGM path (default out.pgm)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("worldgen", help="print a user's hidden world")
    p.add_argument("--user", required=True)
    p.add_argument("--pgm", help="also rasterize the ground truth to PGM")
    p.set_defaults(func=cmd_worldgen)

    p = sub.add_parser("user", help="manage users")
    p.add_argument("action", choices=("add", "remove", "list"))
    p.add_argument("name", nargs="?")
    p.add_argument("--password")
    p.add_argument("--workspace")
    p.add_argument("--data", help="data root (or ROBOLAB_DATA)")
    p.set_defaults(func=cmd_user)

    p = sub.add_parser("slot", help="manage booking slots")
    p.add_argument("action", choices=("add", "list"))
    p.add_argument("user", nargs="?")
    p.add_argument("start", nargs="?")
    p.add_argument("end", nargs="?")
    p.add_argument("--data", help="data root (or ROBOLAB_DATA)")
    p.set_defaults(func=cmd_slot)
    return parser


def main(argv=None) -> int:
    opts = build_parser().parse_args(argv)
    try:
        return opts.func(opts)
    except CliError as exc:
        return fail(str(exc))
    except KeyboardInterrupt:
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
