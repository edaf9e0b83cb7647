"""Deterministic 2D differential-drive kinematic plant.

First-order unicycle integration: v = (V_L + V_R) / 2, omega = (V_R - V_L) / L.
Wheel commands are clamped here at the plant so controller saturation is
observable. One Simulator instance owns one episode's state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .worldmodel import Rect, Scenario


class SimulatorError(ValueError):
    pass


def wrap_to_pi(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(angle + math.pi, 2.0 * math.pi)
    if w < 0.0:
        w += 2.0 * math.pi
    return w - math.pi if w != 0.0 else math.pi


def yaw_quaternion(heading: float) -> tuple[float, float, float, float]:
    """Planar yaw as an (x, y, z, w) quaternion."""
    return (0.0, 0.0, math.sin(heading / 2.0), math.cos(heading / 2.0))


@dataclass(frozen=True)
class RobotParams:
    wheel_base: float = 0.4
    body_radius: float = 0.2
    max_wheel_speed: float = 1.0
    timestep: float = 0.05

    def __post_init__(self):
        for name in ("wheel_base", "body_radius", "max_wheel_speed", "timestep"):
            if getattr(self, name) <= 0:
                raise SimulatorError(f"{name} must be positive")
        if self.max_wheel_speed > 40.0:
            raise SimulatorError("max_wheel_speed exceeds the 40 m/s hard cap")


@dataclass(frozen=True)
class RobotState:
    position: tuple[float, float]
    heading: float  # rad, in (-pi, pi]
    wheel_speeds: tuple[float, float] = (0.0, 0.0)
    time: float = 0.0
    wall_contact: bool = False


@dataclass(frozen=True)
class CollisionReport:
    colliding: bool
    object_label: str | None = None
    wall_contact: bool = False


def kinematic_step(state: RobotState, command: tuple[float, float], params: RobotParams) -> RobotState:
    """Pure unicycle update for one timestep; commands clamped to the wheel cap."""
    vl, vr = command
    if not (math.isfinite(vl) and math.isfinite(vr)):
        raise SimulatorError(f"non-finite wheel command ({vl}, {vr})")
    cap = params.max_wheel_speed
    vl = max(-cap, min(cap, vl))
    vr = max(-cap, min(cap, vr))
    v = (vl + vr) / 2.0
    omega = (vr - vl) / params.wheel_base
    dt = params.timestep
    x, y = state.position
    x += v * math.cos(state.heading) * dt
    y += v * math.sin(state.heading) * dt
    heading = wrap_to_pi(state.heading + omega * dt)
    return RobotState(
        position=(x, y),
        heading=heading,
        wheel_speeds=(vl, vr),
        time=state.time + dt,
    )


def disc_rect_collides(center: tuple[float, float], radius: float, rect: Rect) -> bool:
    cx = max(rect.x_min, min(center[0], rect.x_max))
    cy = max(rect.y_min, min(center[1], rect.y_max))
    return math.hypot(center[0] - cx, center[1] - cy) < radius


class Simulator:
    """Owns one episode's robot state, trajectory log, and collision checks."""

    def __init__(self, scenario: Scenario, params: RobotParams | None = None,
                 start_pose: tuple[float, float, float] | None = None):
        self.scenario = scenario
        self.params = params or RobotParams()
        x, y, heading = start_pose if start_pose is not None else scenario.robot_spawn
        self.state = RobotState(position=(x, y), heading=wrap_to_pi(heading))
        self.trajectory: list[tuple[float, float, float, float, float, float]] = [
            (0.0, x, y, self.state.heading, 0.0, 0.0)
        ]

    def step(self, command: tuple[float, float]) -> RobotState:
        state = kinematic_step(self.state, command, self.params)
        # Clamp to the scene and flag wall contact rather than leaving bounds.
        b = self.scenario.bounds
        x, y = state.position
        cx = max(b.x_min, min(x, b.x_max))
        cy = max(b.y_min, min(y, b.y_max))
        if (cx, cy) != (x, y):
            state = RobotState(
                position=(cx, cy), heading=state.heading,
                wheel_speeds=state.wheel_speeds, time=state.time, wall_contact=True,
            )
        self.state = state
        vl, vr = state.wheel_speeds
        self.trajectory.append((state.time, state.position[0], state.position[1], state.heading, vl, vr))
        return state

    def get_robot_pose(self, robot_id: int = 1):
        """(position, heading, yaw quaternion) ground truth for the one robot."""
        if robot_id != self.scenario.robot_id:
            raise SimulatorError(f"unknown robot id {robot_id}")
        s = self.state
        return s.position, s.heading, yaw_quaternion(s.heading)

    def check_collision(self) -> CollisionReport:
        center = self.state.position
        radius = self.params.body_radius
        for obj in self.scenario.objects:
            if disc_rect_collides(center, radius, obj.footprint):
                return CollisionReport(True, object_label=obj.label)
        b = self.scenario.bounds
        x, y = center
        wall = (
            x - radius < b.x_min or x + radius > b.x_max
            or y - radius < b.y_min or y + radius > b.y_max
        )
        return CollisionReport(colliding=wall, object_label="wall" if wall else None, wall_contact=wall)

    def traveled_length(self) -> float:
        total = 0.0
        for (_, x0, y0, *_), (_, x1, y1, *_) in zip(self.trajectory, self.trajectory[1:]):
            total += math.hypot(x1 - x0, y1 - y0)
        return total

    def write_trajectory_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "x", "y", "heading", "v_left", "v_right"])
            for row in self.trajectory:
                writer.writerow([f"{v:.9f}" for v in row])
