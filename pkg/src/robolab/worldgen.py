"""Per-user hidden worlds: obstacle primitives and their generator.

Each username deterministically maps to one rectangle plus one circle
on the floor, so no two users solve the same map and reruns are
reproducible.  The shapes double as the ray-cast targets for the
ultrasonic model.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .grid import COLS, FLOOR_X, FLOOR_Y, RESOLUTION, ROWS


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle: corner (x0, y0), size (w, h), meters."""
    x0: float
    y0: float
    w: float
    h: float

    @property
    def x1(self) -> float:
        return self.x0 + self.w

    @property
    def y1(self) -> float:
        return self.y0 + self.h

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def ray_distance(self, ox: float, oy: float, dx: float, dy: float) -> float:
        """Distance along ray (origin, unit direction) to first boundary hit.

        Returns inf on a miss; 0 when the origin is inside.
        """
        if self.contains(ox, oy):
            return 0.0
        tmin, tmax = -math.inf, math.inf
        for o, d, lo, hi in ((ox, dx, self.x0, self.x1),
                             (oy, dy, self.y0, self.y1)):
            if d == 0.0:
                if not lo <= o <= hi:
                    return math.inf
                continue
            t1, t2 = (lo - o) / d, (hi - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            tmin, tmax = max(tmin, t1), min(tmax, t2)
        if tmax < tmin or tmax < 0.0:
            return math.inf
        return tmin if tmin >= 0.0 else math.inf

    def distance_to(self, x: float, y: float) -> float:
        dx = max(self.x0 - x, 0.0, x - self.x1)
        dy = max(self.y0 - y, 0.0, y - self.y1)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Circle:
    """Circle: center (cx, cy), radius r, meters."""
    cx: float
    cy: float
    r: float

    def contains(self, x: float, y: float) -> bool:
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 <= self.r ** 2

    def ray_distance(self, ox: float, oy: float, dx: float, dy: float) -> float:
        fx, fy = ox - self.cx, oy - self.cy
        if fx * fx + fy * fy <= self.r * self.r:
            return 0.0
        b = fx * dx + fy * dy
        c = fx * fx + fy * fy - self.r * self.r
        disc = b * b - c
        if disc < 0.0:
            return math.inf
        t = -b - math.sqrt(disc)
        return t if t >= 0.0 else math.inf

    def distance_to(self, x: float, y: float) -> float:
        return max(math.hypot(x - self.cx, y - self.cy) - self.r, 0.0)


Shape = Rect | Circle


@dataclass(frozen=True)
class HiddenWorld:
    """Ground-truth obstacle layout; never exported to clients."""
    shapes: tuple[Shape, ...]
    seed: int

    def ray_distance(self, ox: float, oy: float, heading: float) -> float:
        dx, dy = math.cos(heading), math.sin(heading)
        return min((s.ray_distance(ox, oy, dx, dy) for s in self.shapes),
                   default=math.inf)

    def occupancy(self) -> np.ndarray:
        """uint8 ground-truth grid: 1 where the cell center is inside a shape."""
        xs = (np.arange(COLS) + 0.5) * RESOLUTION
        ys = (np.arange(ROWS) + 0.5) * RESOLUTION
        gx, gy = np.meshgrid(xs, ys)
        occ = np.zeros((ROWS, COLS), dtype=np.uint8)
        for s in self.shapes:
            if isinstance(s, Rect):
                mask = (gx >= s.x0) & (gx <= s.x1) & (gy >= s.y0) & (gy <= s.y1)
            else:
                mask = (gx - s.cx) ** 2 + (gy - s.cy) ** 2 <= s.r ** 2
            occ[mask] = 1
        return occ


def seed_for_user(username: str) -> int:
    """Stable 64-bit seed derived from the username."""
    digest = hashlib.blake2b(username.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


WALL_MARGIN = 0.10       # shapes stay this far inside the floor edge
CLEAR_RADIUS = 0.50      # obstacle-free zone around the robot start pose
START_POSE = (2.0, 1.5)  # default spawn, under the camera axis


def generate_world(username: str) -> HiddenWorld:
    """Deterministic per-user world: one rectangle and one circle.

    Shapes are rejection-sampled until they lie fully inside the floor
    (with a wall margin) and clear the spawn zone.
    """
    seed = seed_for_user(username)
    rng = np.random.default_rng(seed)
    sx, sy = START_POSE

    def clear_of_start(shape: Shape) -> bool:
        return shape.distance_to(sx, sy) >= CLEAR_RADIUS

    while True:
        w = rng.uniform(0.4, 1.0)
        h = rng.uniform(0.3, 0.8)
        x0 = rng.uniform(WALL_MARGIN, FLOOR_X - WALL_MARGIN - w)
        y0 = rng.uniform(WALL_MARGIN, FLOOR_Y - WALL_MARGIN - h)
        rect = Rect(x0, y0, w, h)
        if clear_of_start(rect):
            break
    while True:
        r = rng.uniform(0.20, 0.40)
        cx = rng.uniform(WALL_MARGIN + r, FLOOR_X - WALL_MARGIN - r)
        cy = rng.uniform(WALL_MARGIN + r, FLOOR_Y - WALL_MARGIN - r)
        circle = Circle(cx, cy, r)
        if clear_of_start(circle):
            break
    return HiddenWorld(shapes=(rect, circle), seed=seed)


def describe(world: HiddenWorld) -> str:
    """One shape per line; stable text form used by the CLI and fixtures."""
    lines = [f"seed {world.seed}"]
    for s in world.shapes:
        if isinstance(s, Rect):
            lines.append(f"rect {s.x0!r} {s.y0!r} {s.w!r} {s.h!r}")
        else:
            lines.append(f"circle {s.cx!r} {s.cy!r} {s.r!r}")
    return "\n".join(lines) + "\n"
