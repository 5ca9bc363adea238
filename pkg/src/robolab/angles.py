"""Angle helpers shared by the simulator, vision and estimation code."""

from __future__ import annotations

import math

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap to the half-open interval (-pi, pi].

    In-range angles pass through unchanged so that a zero-rate step
    leaves the heading bit-identical.
    """
    if -math.pi < theta <= math.pi:
        return theta
    return math.pi - (math.pi - theta) % TWO_PI


def angle_diff(a: float, b: float) -> float:
    """Wrapped difference a - b in (-pi, pi]."""
    return wrap_angle(a - b)
