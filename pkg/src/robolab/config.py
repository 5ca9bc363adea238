"""Session configuration: defaults, the text file format, and parsing.

Config files are plain text, one `key = value` per line, `#` comments.
Every defect magnitude is a key here rather than a constant.  The
master switch `defects = off` zeroes all of them at once (later keys
still override individual values).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields


@dataclass
class LabConfig:
    seed: int = 0
    prior: float = 0.5
    defects: bool = True

    start_x: float = 2.0
    start_y: float = 1.5
    start_theta: float = 0.0

    motor_v_max: float = 0.3
    motor_dead_zone: float = 0.08
    motor_a_max: float = 0.5
    motor_slip_probability: float = 0.01
    motor_slip_factor_min: float = 0.0
    motor_slip_factor_max: float = 0.5
    robot_wheel_base: float = 0.12
    robot_body_radius: float = 0.09

    sonar_cone_half_angle_deg: float = 15.0
    sonar_ray_count: int = 9
    sonar_noise_sigma: float = 0.01
    sonar_outlier_probability: float = 0.02

    vision_pixel_noise: float = 1.0
    camera_fx: float = 700.0
    camera_fy: float = 700.0
    camera_k1: float = -0.25
    camera_k2: float = 0.08

    delay_command_ms: int = 250
    delay_measurement_ms: int = 250
    loss_command: float = 0.02

    period_physics_ms: int = 10
    period_vision_ms: int = 59
    period_tick_ms: int = 200
    period_state_push_ms: int = 100

    budget_hook_ms: int = 200
    budget_overrun_limit: int = 3

    map_threshold: float = 0.6

    server_tcp_port: int = 7420
    server_ws_port: int = 7421
    data_root: str = "./labdata"

    def without_defects(self) -> "LabConfig":
        """Copy with every real-world defect disabled."""
        clean = LabConfig(**{f.name: getattr(self, f.name)
                             for f in fields(self)})
        clean.defects = False
        clean.motor_dead_zone = 0.0
        clean.motor_a_max = 1e9
        clean.motor_slip_probability = 0.0
        clean.sonar_noise_sigma = 0.0
        clean.sonar_outlier_probability = 0.0
        clean.vision_pixel_noise = 0.0
        clean.delay_command_ms = 0
        clean.delay_measurement_ms = 0
        clean.loss_command = 0.0
        return clean

    @property
    def sonar_cone_half_angle(self) -> float:
        return math.radians(self.sonar_cone_half_angle_deg)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# config-file key -> LabConfig field
_KEY_MAP = {
    "seed": "seed",
    "prior": "prior",
    "defects": "defects",
    "start.x": "start_x",
    "start.y": "start_y",
    "start.theta": "start_theta",
    "motor.v_max": "motor_v_max",
    "motor.dead_zone": "motor_dead_zone",
    "motor.a_max": "motor_a_max",
    "motor.slip_probability": "motor_slip_probability",
    "motor.slip_factor_min": "motor_slip_factor_min",
    "motor.slip_factor_max": "motor_slip_factor_max",
    "robot.wheel_base": "robot_wheel_base",
    "robot.body_radius": "robot_body_radius",
    "sonar.cone_half_angle_deg": "sonar_cone_half_angle_deg",
    "sonar.ray_count": "sonar_ray_count",
    "sonar.noise_sigma": "sonar_noise_sigma",
    "sonar.outlier_probability": "sonar_outlier_probability",
    "vision.pixel_noise": "vision_pixel_noise",
    "camera.fx": "camera_fx",
    "camera.fy": "camera_fy",
    "camera.k1": "camera_k1",
    "camera.k2": "camera_k2",
    "delay.command_ms": "delay_command_ms",
    "delay.measurement_ms": "delay_measurement_ms",
    "loss.command": "loss_command",
    "period.physics_ms": "period_physics_ms",
    "period.vision_ms": "period_vision_ms",
    "period.tick_ms": "period_tick_ms",
    "period.state_push_ms": "period_state_push_ms",
    "budget.hook_ms": "budget_hook_ms",
    "budget.overrun_limit": "budget_overrun_limit",
    "map.threshold": "map_threshold",
    "server.tcp_port": "server_tcp_port",
    "server.ws_port": "server_ws_port",
    "data_root": "data_root",
}


class ConfigError(ValueError):
    """Bad config text; the message names the offending key."""


def _convert(key: str, fieldname: str, raw: str):
    kind = LabConfig.__dataclass_fields__[fieldname].type
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("on", "true", "yes", "1"):
                return True
            if raw.lower() in ("off", "false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from exc


def parse_config(text: str) -> LabConfig:
    """Parse config text; `defects = off` is applied before later keys."""
    entries: list[tuple[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _KEY_MAP:
            raise ConfigError(f"{key}: unknown configuration key")
        entries.append((key, raw))

    cfg = LabConfig()
    if any(k == "defects" and not _convert(k, "defects", v)
           for k, v in entries):
        cfg = cfg.without_defects()
    for key, raw in entries:
        if key == "defects":
            continue
        setattr(cfg, _KEY_MAP[key], _convert(key, _KEY_MAP[key], raw))
    return cfg


def load_config(path: str) -> LabConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
