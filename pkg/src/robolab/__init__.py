"""robolab: a self-contained networked virtual robotics laboratory.

A differential-drive robot with realistic sensing defects, an overhead
vision localizer, occupancy-grid mapping exercises, a controller plugin
host with strict time budgets, and a framed telemetry protocol with
booking-gated access.
"""

__version__ = "0.1.0"
