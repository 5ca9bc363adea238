"""Reference estimation exercises: sonar mapping, dead reckoning, EKF.

These implement the built-in example solutions: occupancy-grid updates
from the ultrasonic cone, multi-sensor log-odds fusion, encoder and
inertial dead reckoning, and the Kalman correction from vision fixes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .angles import wrap_angle
from .grid import (COLS, LOGODDS_CLAMP, RESOLUTION, ROWS, OccupancyGrid,
                   clamp_logodds)
from .robot import integrate_unicycle


@dataclass(frozen=True)
class InverseSonarModel:
    l_occ: float = 0.85
    l_free: float = -0.40
    delta: float = 0.02           # half-thickness of the occupied band, m
    cone_half_angle: float = math.radians(15.0)
    max_range: float = 2.55

    def __post_init__(self):
        if not (self.l_occ > 0.0 > self.l_free):
            raise ValueError("need l_occ > 0 > l_free")


def sonar_evidence(pose, distance_cm: int,
                   model: InverseSonarModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell log-odds increments implied by one range reading.

    Returns (flat cell indices, increments).  Cells strictly inside the
    cone and short of the measured range get the free increment; cells
    within +/-delta of the range get the occupied increment, except for
    max-range returns which carry no obstacle evidence.
    """
    x, y, theta = pose
    d = distance_cm / 100.0
    at_max = distance_cm >= round(model.max_range * 100.0)
    reach = min(d + model.delta, model.max_range)

    r0 = max(0, int((y - reach) / RESOLUTION) - 1)
    r1 = min(ROWS, int((y + reach) / RESOLUTION) + 2)
    c0 = max(0, int((x - reach) / RESOLUTION) - 1)
    c1 = min(COLS, int((x + reach) / RESOLUTION) + 2)
    if r0 >= r1 or c0 >= c1:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    cy = (np.arange(r0, r1) + 0.5) * RESOLUTION
    cx = (np.arange(c0, c1) + 0.5) * RESOLUTION
    gx, gy = np.meshgrid(cx, cy)
    dx, dy = gx - x, gy - y
    r = np.hypot(dx, dy)
    bearing = np.arctan2(dy, dx)
    off = np.abs(np.arctan2(np.sin(bearing - theta), np.cos(bearing - theta)))
    in_cone = (off <= model.cone_half_angle) | (r < RESOLUTION)

    free = in_cone & (r < d - model.delta)
    occ = in_cone & ~at_max & (np.abs(r - d) <= model.delta)

    inc = np.where(free, model.l_free, 0.0) + np.where(occ, model.l_occ, 0.0)
    touched = inc != 0.0
    rows, cols = np.nonzero(touched)
    flat = (rows + r0) * COLS + (cols + c0)
    return flat, inc[touched]


def update_grid(grid: OccupancyGrid, pose, distance_cm: int,
                model: InverseSonarModel) -> np.ndarray:
    """Apply one reading's evidence in place; returns touched flat indices."""
    if not 0 <= distance_cm <= 255:
        raise ValueError(f"distance must be 0..255 cm, got {distance_cm}")
    flat, inc = sonar_evidence(pose, distance_cm, model)
    cells = grid.cells.reshape(-1)
    cells[flat] = np.clip(cells[flat] + inc, -LOGODDS_CLAMP, LOGODDS_CLAMP)
    return flat


def fuse_measurements(grid: OccupancyGrid, pose, readings) -> np.ndarray:
    """Fuse several independent range readings into the grid.

    `readings` is an iterable of (sensor_id, distance_cm, model).  The
    per-cell increments are summed in a canonical order before a single
    clamped add, so the result is exactly independent of reading order.
    Returns the touched flat indices.
    """
    all_flat, all_inc = [], []
    for _sensor_id, distance_cm, model in readings:
        flat, inc = sonar_evidence(pose, distance_cm, model)
        all_flat.append(flat)
        all_inc.append(inc)
    if not all_flat:
        return np.zeros(0, dtype=np.int64)
    flat = np.concatenate(all_flat)
    inc = np.concatenate(all_inc)
    order = np.lexsort((inc, flat))
    flat, inc = flat[order], inc[order]
    uniq, starts = np.unique(flat, return_index=True)
    sums = np.add.reduceat(inc, starts) if flat.size else inc
    cells = grid.cells.reshape(-1)
    cells[uniq] = np.clip(cells[uniq] + sums, -LOGODDS_CLAMP, LOGODDS_CLAMP)
    return uniq


def integrate_twist(x: float, y: float, theta: float, v: float, omega: float,
                    dt: float) -> tuple[float, float, float]:
    """Exact constant-twist step from linear/angular speed."""
    if abs(omega) < 1e-9:
        return (x + v * math.cos(theta) * dt,
                y + v * math.sin(theta) * dt,
                wrap_angle(theta + omega * dt))
    radius = v / omega
    ntheta = theta + omega * dt
    return (x + radius * (math.sin(ntheta) - math.sin(theta)),
            y + radius * (math.cos(theta) - math.cos(ntheta)),
            wrap_angle(ntheta))


@dataclass
class DeadReckoning:
    """Pose integration from proprioceptive samples only.

    source='encoders' consumes (v_left, v_right) wheel speeds through
    the same integrator as the simulator, so noise-free samples
    reproduce the true trajectory exactly.  source='inertial' consumes
    (accel, gyro) and integrates acceleration into speed first.
    """
    source: str = "encoders"
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0                # integrated speed (inertial source)
    wheel_base: float = 0.12
    noise_sigma: tuple[float, float] = (0.0, 0.0)  # per-component sample noise

    def __post_init__(self):
        if self.source not in ("encoders", "inertial"):
            raise ValueError(f"unknown dead-reckoning source {self.source!r}")

    @property
    def pose(self) -> tuple[float, float, float]:
        return self.x, self.y, self.theta

    def step(self, sample: tuple[float, float], dt: float,
             rng: np.random.Generator | None = None) -> None:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        a, b = sample
        if rng is not None:
            sa, sb = self.noise_sigma
            if sa > 0.0:
                a += rng.normal(0.0, sa)
            if sb > 0.0:
                b += rng.normal(0.0, sb)
        if self.source == "encoders":
            self.x, self.y, self.theta = integrate_unicycle(
                self.x, self.y, self.theta, a, b, dt, self.wheel_base)
        else:
            self.v += a * dt
            self.x, self.y, self.theta = integrate_twist(
                self.x, self.y, self.theta, self.v, b, dt)


@dataclass
class FilterState:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cov: np.ndarray = field(default_factory=lambda: np.eye(3) * 1e-6)
    t: float = 0.0


def kalman_predict(fs: FilterState, odometry_delta: tuple[float, float],
                   Q: np.ndarray, dt: float = 0.0) -> FilterState:
    """Propagate by an odometry increment (ds, dtheta).

    Covariance follows F P F^T + Q with F the motion Jacobian; the
    result is re-symmetrized to keep round-off from accumulating.
    """
    ds, dtheta = odometry_delta
    x, y, theta = fs.mean
    mean = np.array([x + ds * math.cos(theta),
                     y + ds * math.sin(theta),
                     wrap_angle(theta + dtheta)])
    F = np.array([[1.0, 0.0, -ds * math.sin(theta)],
                  [0.0, 1.0, ds * math.cos(theta)],
                  [0.0, 0.0, 1.0]])
    cov = F @ fs.cov @ F.T + np.asarray(Q, dtype=float)
    cov = (cov + cov.T) / 2.0
    return FilterState(mean=mean, cov=cov, t=fs.t + dt)


def kalman_update(fs: FilterState, vision_fix: tuple[float, float, float],
                  R: np.ndarray) -> tuple[FilterState, bool]:
    """Correct the pose with a direct (x, y, theta) measurement.

    Returns (state, updated).  A singular innovation covariance skips
    the update and reports updated=False.  Uses the Joseph form so the
    covariance stays symmetric PSD and its trace never grows.
    """
    R = np.asarray(R, dtype=float)
    innov = np.asarray(vision_fix, dtype=float) - fs.mean
    innov[2] = wrap_angle(innov[2])
    S = fs.cov + R
    try:
        K = np.linalg.solve(S.T, fs.cov.T).T
    except np.linalg.LinAlgError:
        return fs, False
    if not np.all(np.isfinite(K)):
        return fs, False
    mean = fs.mean + K @ innov
    mean[2] = wrap_angle(mean[2])
    ImK = np.eye(3) - K
    cov = ImK @ fs.cov @ ImK.T + K @ R @ K.T
    cov = (cov + cov.T) / 2.0
    return FilterState(mean=mean, cov=cov, t=fs.t), True
