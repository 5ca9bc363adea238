"""Session orchestration: simulated time, schedules, modes, snapshots.

One Session owns one user's lab run.  Simulated time is an integer
millisecond clock, advanced only by its owner; physics runs on every
10 ms boundary, the vision pipeline on every 59 ms boundary (including
t=0) and the map/control tick on every 200 ms boundary, in that order
when boundaries coincide.  Wall-clock pacing is the caller's business,
so the same session runs interactively or as fast as the machine goes.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import codec, plugin_host
from .config import LabConfig
from .grid import LOGODDS_CLAMP, OccupancyGrid, new_grid, to_pgm
from .history import STATE_COLUMNS, write_history
from .plugin_host import HookFailure, HookOverrun, PluginHandle
from .robot import (DelayLine, MotorModel, RobotSimulator, UltrasonicModel,
                    drop_command)
from .vision import CameraModel, VisionSimulator
from .worldgen import HiddenWorld, generate_world

MANUAL, AUTOMATIC = "manual", "automatic"
VIRTUAL, REAL = "virtual", "real"

NEUTRAL_COMMAND = (0.0, 0.0)
NEUTRAL_DISTANCE = 255


class SessionError(RuntimeError):
    """Rejected session operation (bad mode, bad backend, ...)."""


@dataclass(frozen=True)
class Snapshot:
    """Client-visible state; holds estimates only, never ground truth."""
    tick: int
    t_ms: int
    x: float
    y: float
    theta: float
    vx: float
    vy: float
    omega: float
    pose_valid: bool
    distance_cm: int
    battery_mv: int
    mode: str
    backend: str
    overruns: int
    auto_disabled: bool
    map_version: int


@dataclass
class Event:
    t_ms: int
    kind: str
    detail: dict = field(default_factory=dict)

    def as_tuple(self):
        return (self.t_ms, self.kind, sorted(self.detail.items()))


def grid_digest(grid: OccupancyGrid) -> str:
    return hashlib.sha256(grid.cells.tobytes()).hexdigest()


class Session:
    def __init__(self, user: str, config: LabConfig,
                 world: HiddenWorld | None = None,
                 plugin: PluginHandle | None = None):
        self.user = user
        self.config = config
        self.world = world if world is not None else generate_world(user)
        self.plugin = plugin
        self.mode = MANUAL
        self.backend = VIRTUAL
        self.pending_mode: str | None = None
        self.auto_disabled = False

        seq = np.random.SeedSequence(config.seed)
        slip_seed, sonar_seed, vision_seed, loss_seed = seq.spawn(4)
        self._slip_rng = np.random.default_rng(slip_seed)
        self._sonar_rng = np.random.default_rng(sonar_seed)
        self._vision_rng = np.random.default_rng(vision_seed)
        self._loss_rng = np.random.default_rng(loss_seed)

        motor = MotorModel(
            v_max=config.motor_v_max, dead_zone=config.motor_dead_zone,
            a_max=config.motor_a_max,
            slip_probability=config.motor_slip_probability,
            slip_factor=(config.motor_slip_factor_min,
                         config.motor_slip_factor_max))
        sonar = UltrasonicModel(
            cone_half_angle=config.sonar_cone_half_angle,
            ray_count=config.sonar_ray_count,
            noise_sigma=config.sonar_noise_sigma,
            outlier_probability=config.sonar_outlier_probability)
        self.sim = RobotSimulator(
            world=self.world, motor=motor, sonar=sonar,
            wheel_base=config.robot_wheel_base,
            body_radius=config.robot_body_radius)
        self.sim.state.x = config.start_x
        self.sim.state.y = config.start_y
        self.sim.state.theta = config.start_theta

        camera = CameraModel(fx=config.camera_fx, fy=config.camera_fy,
                             k1=config.camera_k1, k2=config.camera_k2)
        self.vision = VisionSimulator(camera=camera,
                                      pixel_noise=config.vision_pixel_noise)

        self.grid = new_grid(config.prior)
        self.covered = np.zeros(self.grid.cells.shape, dtype=bool)
        self.map_version = 0

        self.command_line = DelayLine(config.delay_command_ms,
                                      neutral=NEUTRAL_COMMAND)
        self.measure_line = DelayLine(config.delay_measurement_ms,
                                      neutral=NEUTRAL_DISTANCE)

        self.t_ms = 0
        self.tick_index = 0
        self.physics_steps = 0
        self.overruns = 0
        self._consecutive_overruns = 0
        self.events: list[Event] = []
        self.history_rows: list[tuple] = []

        self._next_physics = config.period_physics_ms
        self._next_vision = 0
        self._next_tick = config.period_tick_ms
        self._do_vision()  # frame at t=0: the emit-at-zero convention
        self._next_vision = config.period_vision_ms

    # -- event plumbing ------------------------------------------------------

    def emit(self, kind: str, **detail) -> None:
        self.events.append(Event(self.t_ms, kind, detail))

    @property
    def vision_frames(self) -> int:
        return self.vision.frames

    # -- client operations ---------------------------------------------------

    def set_mode(self, mode: str) -> None:
        """Request a mode switch; it takes effect at the next tick boundary."""
        if mode not in (MANUAL, AUTOMATIC):
            raise SessionError(f"unknown mode {mode!r}")
        if mode == AUTOMATIC:
            if self.plugin is None:
                raise SessionError(
                    "automatic mode needs a launched controller; "
                    "upload one and reopen the session")
            if self.auto_disabled:
                raise SessionError(
                    "automatic mode was disabled by the budget policy; "
                    "reopen the session to retry")
        self.pending_mode = mode
        self.emit("mode-requested", mode=mode)

    def set_backend(self, backend: str) -> None:
        if backend == VIRTUAL:
            self.emit("backend", backend=backend)
            return
        if backend == REAL:
            raise SessionError(
                "backend 'real' is not supported by this lab build")
        raise SessionError(f"unknown backend {backend!r}")

    def manual_command(self, u1: float, u2: float) -> None:
        """Queue a drive command; rejected outside manual mode."""
        if self.mode != MANUAL:
            self.emit("command-rejected", reason="automatic-mode")
            raise SessionError("manual commands are rejected in automatic mode")
        u1, u2 = _sanitize_command(u1, u2, self)
        if drop_command(self._loss_rng, self.config.loss_command):
            self.emit("command-dropped", u1=u1, u2=u2)
            return
        self.command_line.insert(self.t_ms, (u1, u2))

    def snapshot(self) -> Snapshot:
        est = self.vision.estimate
        d = self.measure_line.query(self.t_ms)
        return Snapshot(
            tick=self.tick_index, t_ms=self.t_ms,
            x=est.x, y=est.y, theta=est.theta,
            vx=est.vx, vy=est.vy, omega=est.omega,
            pose_valid=est.valid, distance_cm=int(d),
            battery_mv=int(round(self.sim.state.battery)),
            mode=self.mode, backend=self.backend,
            overruns=self.overruns, auto_disabled=self.auto_disabled,
            map_version=self.map_version)

    def compressed_map(self) -> bytes:
        return codec.compress(self.grid, self.config.map_threshold).to_bytes()

    # -- time ----------------------------------------------------------------

    def advance(self, duration_s: float) -> None:
        self.advance_ms(int(round(duration_s * 1000.0)))

    def advance_ms(self, duration_ms: int) -> None:
        """Advance simulated time, firing every due schedule in order."""
        target = self.t_ms + duration_ms
        while True:
            due = min(self._next_physics, self._next_vision, self._next_tick)
            if due > target:
                break
            self.t_ms = due
            if self._next_physics == due:
                self._do_physics()
                self._next_physics += self.config.period_physics_ms
            if self._next_vision == due:
                self._do_vision()
                self._next_vision += self.config.period_vision_ms
            if self._next_tick == due:
                self._do_tick()
                self._next_tick += self.config.period_tick_ms
        self.t_ms = target

    def _do_physics(self) -> None:
        # a command maturing exactly on a step boundary drives that step
        u1, u2 = self.command_line.query(self.t_ms)
        self.sim.step(u1, u2, self.config.period_physics_ms / 1000.0,
                      self._slip_rng)
        self.sim.state.t = self.t_ms / 1000.0
        d = self.sim.measure(self._sonar_rng)
        self.measure_line.insert(self.t_ms, d)
        self.physics_steps += 1

    def _do_vision(self) -> None:
        s = self.sim.state
        self.vision.tick((s.x, s.y, s.theta), self.t_ms, self._vision_rng)

    # -- the 200 ms tick -----------------------------------------------------

    def _do_tick(self) -> None:
        tick_wall0 = time.monotonic()
        self.tick_index += 1
        if self.pending_mode is not None:
            self._apply_mode_switch(self.pending_mode)
            self.pending_mode = None

        est = self.vision.estimate
        d = int(self.measure_line.query(self.t_ms))

        hooks_ok = True
        if self.plugin is not None and not self.auto_disabled:
            hooks_ok = self._call_compute_world(est, d, tick_wall0)

        command = None
        if (self.mode == AUTOMATIC and hooks_ok
                and self.plugin is not None and not self.auto_disabled):
            command = self._call_control(est, d, tick_wall0)
        if command is not None:
            u1, u2 = command
            if drop_command(self._loss_rng, self.config.loss_command):
                self.emit("command-dropped", u1=u1, u2=u2)
            else:
                self.command_line.insert(self.t_ms, (u1, u2))

        eff = self.command_line.query(self.t_ms)
        self.history_rows.append((
            self.t_ms / 1000.0, est.x, est.y, est.theta,
            est.vx, est.vy, est.omega, d, eff[0], eff[1],
            self.sim.state.battery))

    def _apply_mode_switch(self, mode: str) -> None:
        if mode == self.mode:
            return
        self.mode = mode
        if mode == MANUAL:
            # zero the pending command so the vehicle coasts to a stop
            self.command_line.insert(self.t_ms, NEUTRAL_COMMAND)
        self.emit("mode", mode=mode)

    def _budget_left(self, tick_wall0: float) -> float:
        budget = self.config.budget_hook_ms / 1000.0
        return max(0.0, budget - (time.monotonic() - tick_wall0))

    def _call_compute_world(self, est, d: int, tick_wall0: float) -> bool:
        try:
            result = self.plugin.call(
                "compute_world",
                {"x": est.x, "y": est.y, "th": est.theta, "d": d,
                 "digest": grid_digest(self.grid)},
                self._budget_left(tick_wall0))
        except HookOverrun:
            self._note_overrun("compute_world")
            return False
        except HookFailure as exc:
            self._disable_auto("controller-failure", error=str(exc)[-500:])
            return False
        self._consecutive_overruns = 0
        if not self._apply_world_delta(result):
            return False
        return True

    def _apply_world_delta(self, result) -> bool:
        if not isinstance(result, dict) or "delta" not in result:
            self._disable_auto("malformed-reply", hook="compute_world")
            return False
        if result.get("desync"):
            self.emit("world-desync")
        delta = result["delta"]
        cells = self.grid.cells
        try:
            for row, col, value in delta:
                if not (0 <= row < cells.shape[0] and 0 <= col < cells.shape[1]
                        and math.isfinite(value)):
                    raise ValueError
                cells[row, col] = min(max(float(value), -LOGODDS_CLAMP),
                                      LOGODDS_CLAMP)
                self.covered[row, col] = True
        except (TypeError, ValueError):
            self._disable_auto("malformed-reply", hook="compute_world")
            return False
        if delta:
            self.map_version += 1
        return True

    def _call_control(self, est, d: int, tick_wall0: float):
        try:
            result = self.plugin.call(
                "control",
                {"x": est.x, "y": est.y, "th": est.theta,
                 "vx": est.vx, "vy": est.vy, "w": est.omega,
                 "d": d, "t": self.t_ms / 1000.0},
                self._budget_left(tick_wall0))
        except HookOverrun:
            self._note_overrun("control")
            return None
        except HookFailure as exc:
            self._disable_auto("controller-failure", error=str(exc)[-500:])
            return None
        self._consecutive_overruns = 0
        try:
            u1, u2 = float(result[0]), float(result[1])
        except (TypeError, ValueError, IndexError, KeyError):
            self._disable_auto("malformed-reply", hook="control")
            return None
        return _sanitize_command(u1, u2, self)

    def _note_overrun(self, hook: str) -> None:
        self.overruns += 1
        self._consecutive_overruns += 1
        self.emit("overrun", hook=hook, consecutive=self._consecutive_overruns)
        if self._consecutive_overruns >= self.config.budget_overrun_limit:
            self._disable_auto("overrun-limit")

    def _disable_auto(self, reason: str, **detail) -> None:
        self.auto_disabled = True
        if self.mode == AUTOMATIC:
            self.mode = MANUAL
        self.pending_mode = None
        # safety stop, exempt from command loss
        self.command_line.insert(self.t_ms, NEUTRAL_COMMAND)
        self.emit("auto-disabled", reason=reason, **detail)

    # -- shutdown ------------------------------------------------------------

    def history(self) -> dict:
        return {"columns": list(STATE_COLUMNS),
                "rows": [list(r) for r in self.history_rows]}

    def meta(self) -> dict:
        return {
            "user": self.user,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "ticks": self.tick_index,
            "physics_steps": self.physics_steps,
            "vision_frames": self.vision_frames,
            "overruns": self.overruns,
            "late_replies": self.plugin.late_replies if self.plugin else 0,
            "auto_disabled": self.auto_disabled,
            "covered_cells": int(self.covered.sum()),
            "events": len(self.events),
            "created_at": datetime.now(timezone.utc).isoformat(),
        }

    def finalize(self, workspace: str) -> str:
        """Run the close hook and write history artifacts; returns the dir."""
        plugin_host.finalize(self.plugin, self.history())
        self.plugin = None
        return write_history(
            workspace, self.history_rows, self.meta(),
            to_pgm(self.grid.probabilities()), self.compressed_map(),
            self.vision.calibration_report())


def _sanitize_command(u1: float, u2: float, session: Session) -> tuple[float, float]:
    out = []
    for u in (u1, u2):
        if not math.isfinite(u):
            session.emit("bad-command", value=repr(u))
            u = 0.0
        elif not -1.0 <= u <= 1.0:
            session.emit("command-clamped", value=u)
            u = max(-1.0, min(1.0, u))
        out.append(float(u))
    return out[0], out[1]
