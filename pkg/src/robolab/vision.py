"""Overhead-camera localization: forward model and estimation pipeline.

The forward half synthesizes distorted pixel observations of the three
chassis LEDs from the true pose.  The inverse half recovers pose the
way the real system does: undistort the centroids, map them through a
plane homography onto the floor, identify the triangle's apex, and
differentiate consecutive fixes for velocities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .angles import angle_diff, wrap_angle
from .grid import FLOOR_X, FLOOR_Y

FRAME_PERIOD_MS = 59


class CalibrationError(RuntimeError):
    """Homography fit failed (degenerate correspondences)."""


class UndistortError(RuntimeError):
    """Fixed-point distortion inversion did not converge."""


@dataclass(frozen=True)
class CameraModel:
    """Downward-looking pinhole with radial (barrel) distortion.

    Normalized coordinates are (floor - mount)/height; distortion
    applies as x_d = x_u * (1 + k1 r^2 + k2 r^4) before pixel mapping.
    """
    width: int = 1280
    height: int = 960
    fx: float = 700.0
    fy: float = 700.0
    cx: float = 640.0
    cy: float = 480.0
    k1: float = -0.25
    k2: float = 0.08
    mount_x: float = 2.0
    mount_y: float = 1.5
    mount_height: float = 3.0

    def project(self, floor_point) -> np.ndarray:
        """Distorted pixel of a floor point."""
        x = (floor_point[0] - self.mount_x) / self.mount_height
        y = (floor_point[1] - self.mount_y) / self.mount_height
        r2 = x * x + y * y
        f = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
        return np.array([self.fx * x * f + self.cx,
                         self.fy * y * f + self.cy])

    def pinhole_pixel(self, floor_point) -> np.ndarray:
        """Ideal (distortion-free) pixel of a floor point."""
        x = (floor_point[0] - self.mount_x) / self.mount_height
        y = (floor_point[1] - self.mount_y) / self.mount_height
        return np.array([self.fx * x + self.cx, self.fy * y + self.cy])

    def undistort(self, pixel, max_iter: int = 20, tol: float = 1e-10) -> np.ndarray:
        """Ideal pixel recovered by fixed-point iteration.

        Iterates x_u <- x_d / (1 + k1 r_u^2 + k2 r_u^4) in normalized
        coordinates; raises UndistortError if the update has not fallen
        below `tol` within `max_iter` iterations.
        """
        xd = (pixel[0] - self.cx) / self.fx
        yd = (pixel[1] - self.cy) / self.fy
        xu, yu = xd, yd
        for _ in range(max_iter):
            r2 = xu * xu + yu * yu
            f = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
            nx, ny = xd / f, yd / f
            delta = max(abs(nx - xu), abs(ny - yu))
            xu, yu = nx, ny
            if delta < tol:
                return np.array([self.fx * xu + self.cx, self.fy * yu + self.cy])
        raise UndistortError(f"no convergence after {max_iter} iterations")


@dataclass(frozen=True)
class LedTriangle:
    """Isosceles (not equilateral) LED layout in the robot frame, meters."""
    apex: tuple[float, float] = (0.10, 0.0)
    base_left: tuple[float, float] = (-0.06, 0.05)
    base_right: tuple[float, float] = (-0.06, -0.05)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([self.apex, self.base_left, self.base_right])

    @property
    def centroid(self) -> np.ndarray:
        return self.offsets.mean(axis=0)

    def side_lengths(self) -> np.ndarray:
        """Sorted ascending: the base, then the two equal apex sides."""
        o = self.offsets
        sides = [np.linalg.norm(o[1] - o[2]),
                 np.linalg.norm(o[0] - o[1]),
                 np.linalg.norm(o[0] - o[2])]
        return np.sort(sides)


def solve_homography(point_pairs) -> tuple[np.ndarray, float]:
    """DLT homography from >=4 (source, destination) 2D point pairs.

    Uses Hartley normalization; returns (H, rms_residual) with H scaled
    so h33 = 1 and H @ [src, 1] ~ [dst, 1].  Raises CalibrationError on
    degenerate configurations.
    """
    pairs = [(np.asarray(s, dtype=float), np.asarray(d, dtype=float))
             for s, d in point_pairs]
    if len(pairs) < 4:
        raise CalibrationError("need at least 4 point pairs")
    src = np.array([p[0] for p in pairs])
    dst = np.array([p[1] for p in pairs])

    def normalizer(pts: np.ndarray) -> np.ndarray:
        centroid = pts.mean(axis=0)
        dist = np.linalg.norm(pts - centroid, axis=1).mean()
        if dist < 1e-12:
            raise CalibrationError("coincident points")
        s = math.sqrt(2.0) / dist
        return np.array([[s, 0.0, -s * centroid[0]],
                         [0.0, s, -s * centroid[1]],
                         [0.0, 0.0, 1.0]])

    Ts, Td = normalizer(src), normalizer(dst)
    sh = (Ts @ np.column_stack([src, np.ones(len(src))]).T).T
    dh = (Td @ np.column_stack([dst, np.ones(len(dst))]).T).T

    rows = []
    for (sx, sy, _), (dx, dy, _) in zip(sh, dh):
        rows.append([sx, sy, 1, 0, 0, 0, -dx * sx, -dx * sy, -dx])
        rows.append([0, 0, 0, sx, sy, 1, -dy * sx, -dy * sy, -dy])
    A = np.array(rows)
    _, sing, vt = np.linalg.svd(A)
    # Rank < 8 means the correspondences do not pin down a homography.
    if sing[6] < 1e-9 * sing[0]:
        raise CalibrationError("degenerate point configuration")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-15:
        raise CalibrationError("homography at infinity")
    H = H / H[2, 2]

    mapped = apply_homography(H, src)
    rms = float(np.sqrt(np.mean(np.sum((mapped - dst) ** 2, axis=1))))
    return H, rms


def apply_homography(H: np.ndarray, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ph = np.column_stack([pts, np.ones(len(pts))])
    out = (H @ ph.T).T
    return out[:, :2] / out[:, 2:3]


@dataclass
class PoseEstimate:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0
    t: float = 0.0
    valid: bool = False


def finite_diff_velocities(prev: PoseEstimate,
                           cur: PoseEstimate) -> tuple[float, float, float]:
    """Componentwise (cur - prev)/dt with the heading difference wrapped."""
    dt = cur.t - prev.t
    if dt <= 0.0:
        raise ValueError("estimates must be time-ordered")
    return ((cur.x - prev.x) / dt,
            (cur.y - prev.y) / dt,
            angle_diff(cur.theta, prev.theta) / dt)


# Accept triangles whose sorted side lengths each sit within this
# fraction of the expected LED geometry.
SIDE_RATIO_TOLERANCE = 0.20


def estimate_pose(pixels, H: np.ndarray, camera: CameraModel,
                  triangle: LedTriangle) -> tuple[float, float, float]:
    """Recover (x, y, theta) from three unlabeled LED pixel centroids.

    The apex is the vertex whose two incident sides differ least (the
    isosceles test), which also disambiguates heading by pi.  Raises
    ValueError when the triangle fails the side-ratio gate.
    """
    if len(pixels) != 3:
        raise ValueError("exactly three LED pixels required")
    floor = apply_homography(
        H, np.array([camera.undistort(p) for p in pixels]))

    d01 = np.linalg.norm(floor[0] - floor[1])
    d12 = np.linalg.norm(floor[1] - floor[2])
    d20 = np.linalg.norm(floor[2] - floor[0])
    incident = {0: (d01, d20), 1: (d01, d12), 2: (d12, d20)}
    apex_idx = min(incident, key=lambda i: abs(incident[i][0] - incident[i][1]))

    expected = triangle.side_lengths()
    measured = np.sort([d01, d12, d20])
    if np.any(np.abs(measured / expected - 1.0) > SIDE_RATIO_TOLERANCE):
        raise ValueError("LED triangle side ratios out of tolerance")

    base = [i for i in range(3) if i != apex_idx]
    mid = (floor[base[0]] + floor[base[1]]) / 2.0
    direction = floor[apex_idx] - mid
    theta = math.atan2(direction[1], direction[0])

    # The LED centroid sits at a known robot-frame offset from center.
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    center = floor.mean(axis=0) - rot @ triangle.centroid
    return float(center[0]), float(center[1]), wrap_angle(theta)


FLOOR_CORNERS = ((0.0, 0.0), (FLOOR_X, 0.0), (FLOOR_X, FLOOR_Y),
                 (0.0, FLOOR_Y), (FLOOR_X / 2.0, FLOOR_Y / 2.0))


def calibrate(camera: CameraModel) -> tuple[np.ndarray, float]:
    """Pixel-to-floor homography from the built-in reference markers.

    Uses the four floor corners plus the center; verifies they all
    land inside the image.
    """
    pairs = []
    for corner in FLOOR_CORNERS:
        pix = camera.project(corner)
        if not (0.0 <= pix[0] < camera.width and 0.0 <= pix[1] < camera.height):
            raise CalibrationError(
                f"reference marker {corner} projects outside the image: {pix}")
        pairs.append((camera.pinhole_pixel(corner), np.asarray(corner)))
    return solve_homography(pairs)


@dataclass
class VisionSimulator:
    """Full camera loop: synthesize LED pixels, then run the estimator.

    Produces one PoseEstimate per 59 ms frame.  Invalid frames hold the
    previous pose and velocities with valid=False.
    """
    camera: CameraModel = field(default_factory=CameraModel)
    triangle: LedTriangle = field(default_factory=LedTriangle)
    pixel_noise: float = 0.0      # Gaussian sigma, px, per coordinate

    def __post_init__(self):
        self.H, self.residual = calibrate(self.camera)
        self.estimate = PoseEstimate()
        self.frames = 0

    def calibration_report(self) -> str:
        lines = ["pixel-to-floor homography:"]
        for row in self.H:
            lines.append("  " + " ".join(f"{v: .12e}" for v in row))
        lines.append(f"rms reprojection residual (m): {self.residual:.3e}")
        return "\n".join(lines) + "\n"

    def synthesize_pixels(self, true_pose, rng: np.random.Generator | None):
        x, y, theta = true_pose
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        leds = (rot @ self.triangle.offsets.T).T + np.array([x, y])
        pixels = [self.camera.project(p) for p in leds]
        if rng is not None:
            if self.pixel_noise > 0.0:
                pixels = [p + rng.normal(0.0, self.pixel_noise, size=2)
                          for p in pixels]
            pixels = [pixels[i] for i in rng.permutation(3)]
        return pixels

    def tick(self, true_pose, t_ms: int,
             rng: np.random.Generator | None = None) -> PoseEstimate:
        """Emit the estimate for the frame at simulated time t_ms."""
        if t_ms % FRAME_PERIOD_MS != 0:
            raise ValueError(f"vision frames fall on {FRAME_PERIOD_MS} ms "
                             f"multiples, got {t_ms}")
        prev = self.estimate
        t = t_ms / 1000.0
        try:
            x, y, theta = estimate_pose(
                self.synthesize_pixels(true_pose, rng),
                self.H, self.camera, self.triangle)
            est = PoseEstimate(x=x, y=y, theta=theta, t=t, valid=True)
            if prev.valid and t > prev.t:
                est.vx, est.vy, est.omega = finite_diff_velocities(prev, est)
            else:
                est.vx, est.vy, est.omega = prev.vx, prev.vy, prev.omega
        except (ValueError, UndistortError):
            est = PoseEstimate(x=prev.x, y=prev.y, theta=prev.theta,
                               vx=prev.vx, vy=prev.vy, omega=prev.omega,
                               t=t, valid=False)
        self.estimate = est
        self.frames += 1
        return est
