"""Closed-loop waypoint tracking for a differential-drive robot.

Per control step: tracking errors -> discrete PID on heading -> velocity
modulation (distance decay, braking, reverse mode) -> tanh wheel split ->
plant step. Waypoint switching uses a latched multi-constraint arrival
criterion, so the target index never moves backwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .planner import WaypointPath
from .simulator import RobotState, Simulator, wrap_to_pi

STEERING_LIMIT = math.pi / 5.0
ARRIVAL_DISTANCE = 0.4
ARRIVAL_HEADING = math.pi / 3.0
ARRIVAL_SPEED = 1.0
DISTANCE_DECAY_SCALE = 1.2
BRAKING_SCALE = math.pi / 3.0
REVERSE_THRESHOLD = math.pi / 2.0
REVERSE_GAIN = 0.6
VELOCITY_BOOST = 1.2
DEFAULT_STEP_BUDGET = 4000
DEFAULT_BASE_SPEED = 0.8


class ControllerError(ValueError):
    pass


@dataclass(frozen=True)
class PidGains:
    k_p: float = 3.2
    k_i: float = 0.1
    k_d: float = 0.3
    steering_limit: float = STEERING_LIMIT
    integral_limit: float = 1.0


@dataclass(frozen=True)
class TrackingErrors:
    distance: float  # m, >= 0
    heading: float  # rad, in (-pi, pi]


@dataclass
class ControllerState:
    v0: float = DEFAULT_BASE_SPEED
    integral: float = 0.0
    prev_error: float = 0.0
    waypoint_index: int = 0

    def advance_waypoint(self) -> None:
        # PID history is stale once the target changes.
        self.waypoint_index += 1
        self.integral = 0.0
        self.prev_error = 0.0


@dataclass(frozen=True)
class EpisodeResult:
    status: str  # "success" | "collision" | "timeout"
    traveled: float
    final_distance: float  # to the last waypoint
    steps: int
    collided_with: str | None = None


def compute_errors(pose: RobotState, target: tuple[float, float]) -> TrackingErrors:
    dx = target[0] - pose.position[0]
    dy = target[1] - pose.position[1]
    distance = math.hypot(dx, dy)
    if dx == 0.0 and dy == 0.0:
        return TrackingErrors(0.0, 0.0)  # bearing undefined on top of the target
    heading = wrap_to_pi(math.atan2(dy, dx) - pose.heading)
    return TrackingErrors(distance, heading)


def pid_step(heading_error: float, state: ControllerState, gains: PidGains, dt: float) -> float:
    """Discrete PID on the heading error, clamped to the steering limit."""
    if dt <= 0:
        raise ControllerError(f"timestep must be positive, got {dt}")
    state.integral += heading_error * dt
    state.integral = max(-gains.integral_limit, min(gains.integral_limit, state.integral))
    derivative = (heading_error - state.prev_error) / dt
    state.prev_error = heading_error
    u = gains.k_p * heading_error + gains.k_i * state.integral + gains.k_d * derivative
    return max(-gains.steering_limit, min(gains.steering_limit, u))


def modulate_velocity(errors: TrackingErrors, steering: float, v0: float) -> tuple[float, float, bool]:
    """Couple base speed to the tracking errors; returns (v_base, steering, reverse).

    The braking factor goes to zero at |heading error| = pi/3 and stays floored
    there up to pi/2 (turn in place). Past pi/2 the reverse mode takes over:
    the braking factor is dropped (it would pin the speed at zero), the speed
    is negated and scaled, and the steering is mirrored.
    """
    if v0 <= 0:
        raise ControllerError(f"base speed must be positive, got {v0}")
    decay = min(errors.distance / DISTANCE_DECAY_SCALE, 1.0)
    if abs(errors.heading) > REVERSE_THRESHOLD:
        v_base = v0 * decay * VELOCITY_BOOST
        return -REVERSE_GAIN * v_base, -steering, True
    braking = max(1.0 - abs(errors.heading) / BRAKING_SCALE, 0.0)
    return v0 * decay * braking * VELOCITY_BOOST, steering, False


def wheel_split(v_base: float, steering: float) -> tuple[float, float]:
    """tanh differential split; V_L + V_R == 2 * v_base exactly."""
    t = math.tanh(steering)
    return v_base * (1.0 - t), v_base * (1.0 + t)


def waypoint_reached(errors: TrackingErrors, speed: float) -> bool:
    return (
        errors.distance < ARRIVAL_DISTANCE
        and abs(errors.heading) < ARRIVAL_HEADING
        and abs(speed) < ARRIVAL_SPEED
    )


def motion_control(
    path: WaypointPath,
    sim: Simulator,
    gains: PidGains | None = None,
    v0: float = DEFAULT_BASE_SPEED,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> EpisodeResult:
    """Track the waypoint list until the final waypoint, a collision, or timeout."""
    if not path.points:
        raise ControllerError("empty waypoint path")
    gains = gains or PidGains()
    state = ControllerState(v0=v0)
    dt = sim.params.timestep
    last = len(path.points) - 1
    start_traveled = sim.traveled_length()

    for step in range(step_budget):
        pose = sim.state
        target = path.points[state.waypoint_index]
        errors = compute_errors(pose, target)
        speed = (pose.wheel_speeds[0] + pose.wheel_speeds[1]) / 2.0

        if waypoint_reached(errors, speed):
            if state.waypoint_index == last:
                return EpisodeResult(
                    "success", sim.traveled_length() - start_traveled, errors.distance, step,
                )
            state.advance_waypoint()
            continue

        steering = pid_step(errors.heading, state, gains, dt)
        v_base, steering, _ = modulate_velocity(errors, steering, v0)
        command = wheel_split(v_base, steering)
        if abs(v_base) < 1e-3 and abs(errors.heading) > 1e-6:
            # Braking floor zeroes the split; rotate in place toward the target.
            turn = v0 * math.tanh(steering)
            command = (-turn, turn)
        sim.step(command)

        report = sim.check_collision()
        if report.colliding:
            final = compute_errors(sim.state, path.points[last]).distance
            return EpisodeResult(
                "collision", sim.traveled_length() - start_traveled, final, step + 1,
                collided_with=report.object_label,
            )

    final = compute_errors(sim.state, path.points[last]).distance
    return EpisodeResult("timeout", sim.traveled_length() - start_traveled, final, step_budget)
