"""Session history artifacts written into the user's workspace.

Each finished session produces a hist_YYYYMMDD_HHMMSS/ directory with:

    state.csv        one row per 200 ms tick: t,x,y,th,vx,vy,w,d,u1,u2,battery
    world.pgm        final map rendered as an 8-bit P5 image
    world.cw         final map in the compressed wire layout
    meta.json        session config, seed, counters
    calibration.txt  vision homography dump, for debugging

Everything except meta.json's wall-clock stamp is a pure function of
the session, so replays with the same seed are byte-identical.
"""

from __future__ import annotations

import json
import os
import re
from datetime import datetime

STATE_COLUMNS = ("t", "x", "y", "th", "vx", "vy", "w", "d", "u1", "u2",
                 "battery")
HIST_NAME_RE = re.compile(r"^hist_[0-9]{8}_[0-9]{6}$")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_state_csv(rows) -> bytes:
    lines = [",".join(STATE_COLUMNS)]
    for row in rows:
        if len(row) != len(STATE_COLUMNS):
            raise ValueError(f"state row needs {len(STATE_COLUMNS)} fields")
        lines.append(",".join(_fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode("ascii")


def new_history_dir(workspace: str, now: datetime | None = None) -> str:
    """Create hist_DATE_TIME under the workspace, bumping on collision."""
    stamp = int((now or datetime.now()).strftime("%Y%m%d%H%M%S"))
    while True:
        digits = f"{stamp:014d}"
        name = f"hist_{digits[:8]}_{digits[8:]}"
        path = os.path.join(workspace, name)
        try:
            os.makedirs(path)
            return path
        except FileExistsError:
            stamp += 1


def write_history(workspace: str, rows, meta: dict, pgm: bytes,
                  compressed: bytes, calibration: str = "",
                  now: datetime | None = None) -> str:
    """Write all history artifacts; returns the new directory path."""
    path = new_history_dir(workspace, now)
    with open(os.path.join(path, "state.csv"), "wb") as fh:
        fh.write(render_state_csv(rows))
    with open(os.path.join(path, "world.pgm"), "wb") as fh:
        fh.write(pgm)
    with open(os.path.join(path, "world.cw"), "wb") as fh:
        fh.write(compressed)
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if calibration:
        with open(os.path.join(path, "calibration.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(calibration)
    return path
