"""Closed-loop behaviours ("tasks").

A task is alive only while its contingent disturbance produces a nonzero
error. The controller maps that error to a motor command; the task ends as
soon as the termination condition holds, at which point the motor command
is exactly zero.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

from .world import Footprint, Point2, Pose, TaskCorridor, wrap_angle

# Progress within this distance (m or rad) of the target counts as done.
TERMINATION_TOL = 1e-9
DEFAULT_TIME_STEP = 0.05
DEFAULT_CLEARANCE = 0.05


class UnboundedTaskError(ValueError):
    """The task has no finite termination point."""


class BehaviourKind(enum.Enum):
    STRAIGHT = "straight"
    LEFT_TURN = "left"
    RIGHT_TURN = "right"

    @property
    def is_turn(self) -> bool:
        return self is not BehaviourKind.STRAIGHT


class DisturbanceKind(enum.Enum):
    GOAL = "goal"
    OBSTACLE = "obstacle"
    NONE = "none"


@dataclass(frozen=True)
class Disturbance:
    kind: DisturbanceKind
    location: Point2 | None = None

    def __post_init__(self) -> None:
        if self.kind is not DisturbanceKind.NONE and self.location is None:
            raise ValueError(f"{self.kind.value} disturbance needs a location")

    @classmethod
    def none(cls) -> Disturbance:
        return cls(DisturbanceKind.NONE)

    @classmethod
    def goal(cls, x: float, y: float) -> Disturbance:
        return cls(DisturbanceKind.GOAL, Point2(x, y))

    @classmethod
    def obstacle(cls, x: float, y: float) -> Disturbance:
        return cls(DisturbanceKind.OBSTACLE, Point2(x, y))

    @property
    def present(self) -> bool:
        return self.kind is not DisturbanceKind.NONE

    def reframed(self, old: Pose, new: Pose) -> Disturbance:
        """Re-express the location from frame ``old`` into frame ``new``.

        Both poses are given in a common parent frame.
        """
        if self.location is None:
            return self
        return Disturbance(self.kind, new.to_local(old.to_world(self.location)))


@dataclass(frozen=True)
class TaskParams:
    linear_speed: float = 0.2
    angular_speed: float = 1.0
    turn_angle: float = math.pi / 4
    max_travel: float = 2.0

    def __post_init__(self) -> None:
        if not (self.linear_speed > 0 and self.angular_speed > 0):
            raise ValueError("speeds must be positive")
        if not 0 < self.turn_angle <= math.pi:
            raise ValueError("turn_angle must be in (0, pi]")
        if not self.max_travel >= 0:
            raise ValueError("max_travel must be >= 0")


@dataclass(frozen=True)
class Task:
    kind: BehaviourKind
    contingent: Disturbance
    start_pose: Pose = field(default_factory=Pose.origin)
    params: TaskParams = field(default_factory=TaskParams)

    def __post_init__(self) -> None:
        if not self.contingent.present:
            raise ValueError("a task must be contingent on a disturbance")

    def target(self) -> float:
        """Progress at which the task terminates (m for straights, rad for turns)."""
        if self.kind.is_turn:
            return self.params.turn_angle
        # closest approach of the heading line to the disturbance
        along = self.contingent.location.x
        target = min(max(along, 0.0), self.params.max_travel)
        if not math.isfinite(target):
            raise UnboundedTaskError("unbounded task")
        return target

    def progress(self, pose: Pose) -> float:
        start = self.start_pose
        if self.kind is BehaviourKind.STRAIGHT:
            return math.cos(start.heading) * (pose.x - start.x) + math.sin(start.heading) * (pose.y - start.y)
        sign = 1.0 if self.kind is BehaviourKind.LEFT_TURN else -1.0
        # wrap about half the target so the seam sits opposite the stop angle
        mid = 0.5 * self.params.turn_angle
        return wrap_angle(sign * (pose.heading - start.heading) - mid) + mid


@dataclass(frozen=True)
class ControlSignal:
    error: tuple[float, float]  # (bearing rad, range m) to the contingent disturbance
    motor: tuple[float, float]  # (linear m/s, angular rad/s)


def terminated(task: Task, current_pose: Pose) -> bool:
    return task.progress(current_pose) >= task.target() - TERMINATION_TOL


def _motor(task: Task, pose: Pose) -> tuple[float, float]:
    if terminated(task, pose):
        return (0.0, 0.0)
    p = task.params
    if task.kind is BehaviourKind.STRAIGHT:
        return (p.linear_speed, 0.0)
    if task.kind is BehaviourKind.LEFT_TURN:
        return (0.0, p.angular_speed)
    return (0.0, -p.angular_speed)


def control_step(task: Task, current_pose: Pose) -> ControlSignal:
    where = current_pose.to_local(task.start_pose.to_world(task.contingent.location))
    error = (math.atan2(where.y, where.x), math.hypot(where.x, where.y))
    return ControlSignal(error, _motor(task, current_pose))


def step_duration(task: Task, pose: Pose, time_step: float) -> float:
    """Length of the next integration step, shortened so the task lands on its target."""
    remaining = task.target() - task.progress(pose)
    rate = task.params.angular_speed if task.kind.is_turn else task.params.linear_speed
    return min(time_step, max(remaining, 0.0) / rate)


def integrate(pose: Pose, linear: float, angular: float, dt: float) -> Pose:
    """Exact unicycle motion over ``dt`` at constant (linear, angular) velocity."""
    h = pose.heading
    if abs(angular) < 1e-12:
        return Pose(pose.x + linear * dt * math.cos(h), pose.y + linear * dt * math.sin(h), h)
    h2 = h + angular * dt
    r = linear / angular
    return Pose(pose.x + r * (math.sin(h2) - math.sin(h)), pose.y - r * (math.cos(h2) - math.cos(h)), h2)


def trajectory_of(task: Task, time_step: float = DEFAULT_TIME_STEP) -> list[Pose]:
    """Nominal poses from ``start_pose`` to termination, one per integration step."""
    return list(_trajectory(task, time_step))


def clear_trajectory_cache() -> None:
    """Drop memoised trajectories (used for cold-start timing)."""
    _trajectory.cache_clear()


@functools.lru_cache(maxsize=4096)
def _trajectory(task: Task, time_step: float) -> tuple[Pose, ...]:
    target = task.target()  # raises UnboundedTaskError
    rate = task.params.angular_speed if task.kind.is_turn else task.params.linear_speed
    max_steps = int(math.ceil(target / (rate * time_step))) + 2
    poses = [task.start_pose]
    pose = task.start_pose
    while not terminated(task, pose):
        if len(poses) > max_steps:
            raise UnboundedTaskError("unbounded task")
        lin, ang = _motor(task, pose)
        pose = integrate(pose, lin, ang, step_duration(task, pose, time_step))
        poses.append(pose)
    return tuple(poses)


def corridor_of(
    task: Task,
    footprint: Footprint,
    clearance: float = DEFAULT_CLEARANCE,
    time_step: float = DEFAULT_TIME_STEP,
) -> TaskCorridor:
    """Region swept by the task whose points count as "in the way".

    A straight's centreline is stretched past both ends only as far as needed
    for the round end caps to cover the footprint's corners; for the default
    footprint and clearance that stretch is zero.
    """
    poses = trajectory_of(task, time_step)
    start, end = poses[0], poses[-1]
    disc = footprint.half_diagonal + clearance
    if task.kind.is_turn:
        return TaskCorridor((start.position,), disc)
    length = start.position.distance_to(end.position)
    if length == 0.0:
        return TaskCorridor((start.position,), disc)
    half = footprint.half_width + clearance
    stretch = max(0.0, footprint.half_length - math.sqrt(half**2 - footprint.half_width**2))
    if stretch == 0.0:
        return TaskCorridor((start.position, end.position), half)
    ux, uy = (end.x - start.x) / length, (end.y - start.y) / length
    a = Point2(start.x - stretch * ux, start.y - stretch * uy)
    b = Point2(end.x + stretch * ux, end.y + stretch * uy)
    return TaskCorridor((a, b), half)
