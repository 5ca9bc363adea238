"""Built-in reference controller for the `example` user.

Maps the hidden world with the stock inverse sonar model while driving
a serpentine sweep over the floor from the vision pose estimate.  Its
source ships with the lab and is never served through file transfer,
so it demonstrates the exercise without giving the solution away.
"""

from __future__ import annotations

import math

from .angles import wrap_angle
from .grid import OccupancyGrid
from .mapping import InverseSonarModel, update_grid

SONAR = InverseSonarModel()

# serpentine rows plus a return pass through the middle
WAYPOINTS = [
    (0.6, 0.6), (3.4, 0.6),
    (3.4, 1.5), (0.6, 1.5),
    (0.6, 2.4), (3.4, 2.4),
    (2.0, 1.5),
]

_state = {"target": 0}


def init():
    _state["target"] = 0


def compute_world(world, x, y, th, d):
    update_grid(OccupancyGrid(world), (x, y, th), int(d), SONAR)
    return world


def control(world, x, y, th, vx, vy, w, d, t):
    i = _state["target"]
    if i >= len(WAYPOINTS):
        return 0.0, 0.0
    tx, ty = WAYPOINTS[i]
    if math.hypot(tx - x, ty - y) < 0.15:
        _state["target"] = i + 1
        return 0.0, 0.0
    heading_error = wrap_angle(math.atan2(ty - y, tx - x) - th)
    if abs(heading_error) > 0.5:
        turn = 0.45 if heading_error > 0 else -0.45
        return -turn, turn
    forward = 0.95 * math.cos(heading_error)
    turn = max(-0.5, min(0.5, 0.9 * heading_error))
    u1 = max(-1.0, min(1.0, forward - turn))
    u2 = max(-1.0, min(1.0, forward + turn))
    return u1, u2


def close(history):
    rows = len(history["rows"]) if history else 0
    print(f"example controller: session closed after {rows} ticks")
