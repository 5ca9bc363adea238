"""Regenerate the golden STATE/MAP wire fixtures.

Both test suites (pytest and the browser client's vitest) decode these
bytes and must agree on every field.  Run from the repository root:

    python3 golden/generate.py
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from robolab import protocol as P
from robolab.codec import compress
from robolab.grid import logodds, new_grid
from robolab.session import Snapshot

HERE = os.path.dirname(os.path.abspath(__file__))


def state_cases():
    cases = []

    snap = Snapshot(tick=0, t_ms=0, x=2.0, y=1.5, theta=0.0, vx=0.0, vy=0.0,
                    omega=0.0, pose_valid=True, distance_cm=255,
                    battery_mv=8200, mode="manual", backend="virtual",
                    overruns=0, auto_disabled=False, map_version=0)
    cases.append(("fresh-session", snap))

    snap = Snapshot(tick=137, t_ms=27400, x=1.2345678901, y=2.718281828,
                    theta=-2.0943951023931953, vx=0.0625, vy=-0.03125,
                    omega=1.4099204606709499, pose_valid=True,
                    distance_cm=142, battery_mv=8012, mode="automatic",
                    backend="virtual", overruns=2, auto_disabled=False,
                    map_version=9)
    cases.append(("mid-run-automatic", snap))

    snap = Snapshot(tick=4294967295 % 2**32, t_ms=600, x=0.005, y=2.995,
                    theta=3.141592653589793, vx=0.0, vy=0.0, omega=0.0,
                    pose_valid=False, distance_cm=0, battery_mv=0,
                    mode="manual", backend="virtual", overruns=4001,
                    auto_disabled=True, map_version=1)
    cases.append(("edge-values", snap))

    out = []
    for name, snap in cases:
        payload = P.encode_state(snap)
        out.append({
            "name": name,
            "frame_hex": P.encode_frame(P.STATE, payload).hex(),
            "expected": P.decode_state(payload),
        })
    return out


def map_cases():
    out = []

    g = new_grid(0.5)
    cw = compress(g, 0.6)
    out.append({
        "name": "all-free",
        "frame_hex": P.encode_frame(P.MAP, cw.to_bytes()).hex(),
        "rows": 300, "cols": 400, "threshold_byte": 153,
        "runs": cw.runs, "occupied_total": 0, "samples": [],
    })

    g = new_grid(0.5)
    g.cells[0, 0] = logodds(0.95)
    cw = compress(g, 0.6)
    out.append({
        "name": "single-cell-origin",
        "frame_hex": P.encode_frame(P.MAP, cw.to_bytes()).hex(),
        "rows": 300, "cols": 400, "threshold_byte": 153,
        "runs": cw.runs, "occupied_total": 1,
        "samples": [[0, 0, 1], [0, 1, 0], [299, 399, 0]],
    })

    # two blobs echoing the classic hidden-world layout
    g = new_grid(0.5)
    occ = logodds(0.97)
    g.cells[100:140, 250:310] = occ                      # rectangle
    yy, xx = np.mgrid[0:300, 0:400]
    disk = (yy - 210) ** 2 + (xx - 90) ** 2 <= 35 ** 2   # circle r=35
    g.cells[disk] = occ
    cw = compress(g, 0.6)
    bits = g.binarize(0.6)
    samples = [[120, 280, 1], [210, 90, 1], [210, 124, 1], [210, 126, 0],
               [0, 0, 0], [150, 150, 0], [99, 250, 0], [100, 250, 1]]
    for r, c, v in samples:
        assert bits[r, c] == v, (r, c, v)
    out.append({
        "name": "two-blob-world",
        "frame_hex": P.encode_frame(P.MAP, cw.to_bytes()).hex(),
        "rows": 300, "cols": 400, "threshold_byte": 153,
        "runs_sha256_first8": __import__("hashlib").sha256(
            json.dumps(cw.runs).encode()).hexdigest()[:8],
        "run_count": len(cw.runs),
        "occupied_total": int(bits.sum()),
        "samples": samples,
    })
    return out


def main(out_path: str | None = None):
    fixtures = {
        "comment": "golden wire fixtures; regenerate with golden/generate.py",
        "state_frames": state_cases(),
        "map_frames": map_cases(),
    }
    path = out_path or os.path.join(HERE, "wire_fixtures.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fixtures, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
