"""Differential-drive vehicle simulation with real-world defect models.

Covers the motor nonlinearities (dead zone, acceleration saturation,
slip), the unicycle kinematics, the battery, the ultrasonic ranger with
noise/outliers, the 250 ms command/measurement delay lines, and random
command loss.  All defect magnitudes are configuration, not constants.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .angles import wrap_angle
from .grid import FLOOR_X, FLOOR_Y
from .worldgen import HiddenWorld

log = logging.getLogger(__name__)

# Commanded wheel speed is capped to this fraction of full motor speed.
SPEED_CAP_FRACTION = 0.3


@dataclass
class MotorModel:
    v_max: float = 0.3            # full-power wheel speed, m/s
    dead_zone: float = 0.08       # |u| below this produces no motion
    a_max: float = 0.5            # wheel acceleration limit, m/s^2
    slip_probability: float = 0.0  # per wheel per physics step
    slip_factor: tuple[float, float] = (0.0, 0.5)  # displacement multiplier

    def __post_init__(self):
        if not 0.0 <= self.dead_zone < 1.0:
            raise ValueError("dead_zone must be in [0,1)")
        if self.a_max <= 0.0:
            raise ValueError("a_max must be positive")
        if not 0.0 <= self.slip_probability <= 1.0:
            raise ValueError("slip_probability must be in [0,1]")

    @property
    def v_cap(self) -> float:
        return SPEED_CAP_FRACTION * self.v_max


@dataclass
class UltrasonicModel:
    cone_half_angle: float = math.radians(15.0)
    ray_count: int = 9            # odd, spread across the cone
    max_range: float = 2.55       # m; also the no-echo report
    noise_sigma: float = 0.0      # m
    outlier_probability: float = 0.0

    def __post_init__(self):
        if self.ray_count < 1 or self.ray_count % 2 == 0:
            raise ValueError("ray_count must be a positive odd integer")


@dataclass
class RobotState:
    """Simulated ground truth; clients only ever see vision estimates."""
    x: float = 2.0
    y: float = 1.5
    theta: float = 0.0
    v_left: float = 0.0
    v_right: float = 0.0
    battery: float = 8200.0       # millivolts
    t: float = 0.0                # simulation time, s


class DelayLine:
    """Fixed transport delay on a sampled value stream.

    Timestamps are integer simulated milliseconds; a value inserted at
    t is visible from t + delay_ms onward.  Queries before anything has
    matured return the configured neutral value.
    """

    def __init__(self, delay_ms: int, neutral):
        self.delay_ms = delay_ms
        self.neutral = neutral
        self._queue: list[tuple[int, object]] = []
        self._current = neutral

    def insert(self, t_ms: int, value) -> None:
        if self._queue and t_ms < self._queue[-1][0]:
            raise ValueError("delay line requires monotone insertion times")
        self._queue.append((t_ms, value))

    def query(self, now_ms: int):
        """Newest value whose insertion time <= now - delay."""
        cutoff = now_ms - self.delay_ms
        while self._queue and self._queue[0][0] <= cutoff:
            self._current = self._queue.pop(0)[1]
        return self._current


def apply_motor(u: float, speed: float, motor: MotorModel, dt: float) -> float:
    """One wheel's speed after dt seconds of chasing the command u."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if u < -1.0 or u > 1.0:
        log.warning("motor command %.3f outside [-1,1]; clamped", u)
        u = max(-1.0, min(1.0, u))
    target = 0.0 if abs(u) < motor.dead_zone else SPEED_CAP_FRACTION * u * motor.v_max
    step = motor.a_max * dt
    if target > speed:
        return min(speed + step, target)
    return max(speed - step, target)


def integrate_unicycle(x: float, y: float, theta: float,
                       v_left: float, v_right: float,
                       dt: float, wheel_base: float) -> tuple[float, float, float]:
    """Exact constant-twist step of the unicycle model.

    Shared by the simulator and the dead-reckoning estimators so that a
    noise-free estimate reproduces the true trajectory bit for bit.
    """
    v = (v_left + v_right) / 2.0
    omega = (v_right - v_left) / wheel_base
    if abs(omega) < 1e-9:
        nx = x + v * math.cos(theta) * dt
        ny = y + v * math.sin(theta) * dt
        ntheta = wrap_angle(theta + omega * dt)
    else:
        radius = v / omega
        ntheta_raw = theta + omega * dt
        nx = x + radius * (math.sin(ntheta_raw) - math.sin(theta))
        ny = y + radius * (math.cos(theta) - math.cos(ntheta_raw))
        ntheta = wrap_angle(ntheta_raw)
    return nx, ny, ntheta


def drop_command(rng: np.random.Generator, loss_probability: float) -> bool:
    """True when this command should be lost in transit."""
    if loss_probability <= 0.0:
        return False
    return bool(rng.random() < loss_probability)


def measure_ultrasonic(world: HiddenWorld, pose: tuple[float, float, float],
                       model: UltrasonicModel,
                       rng: np.random.Generator | None = None) -> int:
    """Simulated ranger report in integer centimeters, 0..255.

    Casts rays across the sensing cone, keeps the nearest hit, then
    applies Gaussian noise and occasional uniform outliers before
    clamping and quantizing.  No obstacle in range reads max (255).
    """
    x, y, theta = pose
    if model.ray_count == 1:
        offsets = [0.0]
    else:
        step = 2.0 * model.cone_half_angle / (model.ray_count - 1)
        offsets = [-model.cone_half_angle + i * step
                   for i in range(model.ray_count)]
    dist = min(world.ray_distance(x, y, theta + off) for off in offsets)
    dist = min(dist, model.max_range)
    if rng is not None:
        if model.outlier_probability > 0.0 and rng.random() < model.outlier_probability:
            dist = rng.uniform(0.0, model.max_range)
        elif model.noise_sigma > 0.0:
            dist += rng.normal(0.0, model.noise_sigma)
    dist = max(0.0, min(dist, model.max_range))
    return int(round(dist * 100.0))


@dataclass
class RobotSimulator:
    """Owns the vehicle state and advances it one physics step at a time."""
    world: HiddenWorld
    motor: MotorModel = field(default_factory=MotorModel)
    sonar: UltrasonicModel = field(default_factory=UltrasonicModel)
    wheel_base: float = 0.12      # m
    body_radius: float = 0.09     # m; keeps the chassis on the platform
    battery_drain: float = 2.0    # mV per (m/s * s) of combined wheel speed
    state: RobotState = field(default_factory=RobotState)

    def step(self, u_left: float, u_right: float, dt: float,
             rng: np.random.Generator | None = None) -> None:
        s = self.state
        s.v_left = apply_motor(u_left, s.v_left, self.motor, dt)
        s.v_right = apply_motor(u_right, s.v_right, self.motor, dt)

        # Slip scales the displacement a wheel produces, not the wheel
        # speed itself, so encoders still read the spinning wheel.
        eff_left, eff_right = s.v_left, s.v_right
        if rng is not None and self.motor.slip_probability > 0.0:
            lo, hi = self.motor.slip_factor
            if rng.random() < self.motor.slip_probability:
                eff_left *= rng.uniform(lo, hi)
            if rng.random() < self.motor.slip_probability:
                eff_right *= rng.uniform(lo, hi)

        s.x, s.y, s.theta = integrate_unicycle(
            s.x, s.y, s.theta, eff_left, eff_right, dt, self.wheel_base)

        lo_x, hi_x = self.body_radius, FLOOR_X - self.body_radius
        lo_y, hi_y = self.body_radius, FLOOR_Y - self.body_radius
        if not (lo_x <= s.x <= hi_x and lo_y <= s.y <= hi_y):
            s.x = min(max(s.x, lo_x), hi_x)
            s.y = min(max(s.y, lo_y), hi_y)
            s.v_left = 0.0
            s.v_right = 0.0

        s.battery = max(0.0, s.battery - self.battery_drain
                        * (abs(s.v_left) + abs(s.v_right)) * dt)

    def measure(self, rng: np.random.Generator | None = None) -> int:
        s = self.state
        return measure_ultrasonic(self.world, (s.x, s.y, s.theta),
                                  self.sonar, rng)
