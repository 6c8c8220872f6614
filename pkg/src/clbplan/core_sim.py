"""Internal physics model ("core knowledge") used to predict task outcomes.

The model is built from a LiDAR point cloud expressed in the task's start
frame, so the robot always starts at the origin facing +x. Obstacles are the
raw returns, not polygons; a collision is any return falling inside the
(inflated) footprint.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from .tasks import DEFAULT_CLEARANCE, Disturbance, DisturbanceKind, Task, corridor_of, trajectory_of
from .world import Footprint, Point2, PointCloud, Pose, points_to_local, resample_pointcloud


class StartInCollisionError(ValueError):
    """An obstacle point already lies inside the robot's initial footprint."""


@dataclass(frozen=True)
class EngineConfig:
    time_step: float = 0.05
    collision_inflation: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.time_step <= 0.5:
            raise ValueError("time_step must be in (0, 0.5]")
        if self.collision_inflation < 0:
            raise ValueError("collision_inflation must be >= 0")


@dataclass(frozen=True)
class WorldModel:
    obstacle_points: PointCloud
    footprint: Footprint
    config: EngineConfig = field(default_factory=EngineConfig)


@dataclass(frozen=True)
class SimulationResult:
    end_pose: Pose
    interrupting: Disturbance
    distance_travelled: float
    steps: int
    poses: tuple[Pose, ...] = field(default=(), repr=False, compare=False)

    @property
    def interrupted(self) -> bool:
        return self.interrupting.present


def footprint_mask(pose: Pose, pts: np.ndarray, footprint: Footprint, inflation: float = 0.0) -> np.ndarray:
    """Vectorised :func:`point_in_footprint` over an ``(N, 2)`` array."""
    local = points_to_local(pose, pts)
    return (np.abs(local[:, 0]) <= footprint.half_length + inflation) & (
        np.abs(local[:, 1]) <= footprint.half_width + inflation
    )


def point_in_footprint(pose: Pose, point: Point2, footprint: Footprint, inflation: float = 0.0) -> bool:
    local = pose.to_local(point)
    return abs(local.x) <= footprint.half_length + inflation and abs(local.y) <= footprint.half_width + inflation


def build_world_model(
    cloud: PointCloud,
    task: Task,
    footprint: Footprint,
    config: EngineConfig = EngineConfig(),
    clearance: float = DEFAULT_CLEARANCE,
) -> WorldModel:
    """Internal model for one task: the corridor-filtered cloud plus the robot at the origin."""
    if len(cloud) and footprint_mask(Pose.origin(), cloud.array, footprint, config.collision_inflation).any():
        raise StartInCollisionError("start in collision")
    # filter with the inflated body so every point the collision check could see is kept
    infl = config.collision_inflation
    body = Footprint(footprint.half_width + infl, footprint.half_length + infl) if infl else footprint
    corridor = corridor_of(_at_origin(task), body, clearance, config.time_step)
    return WorldModel(resample_pointcloud(cloud, corridor), footprint, config)


def _at_origin(task: Task) -> Task:
    if task.start_pose == Pose.origin():
        return task
    return replace(task, start_pose=Pose.origin())


def _path_length(poses: list[Pose]) -> float:
    if len(poses) < 2:
        return 0.0
    xy = np.array([(p.x, p.y) for p in poses])
    return float(np.sum(np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))))


class CoreKnowledgeEngine(Protocol):
    """Anything that can predict the outcome of a task inside a world model."""

    def simulate(self, model: WorldModel, task: Task) -> SimulationResult: ...


class KinematicEngine:
    """Fixed-step kinematic stepper with point-vs-rectangle collision checks."""

    def simulate(self, model: WorldModel, task: Task) -> SimulationResult:
        return simulate_task(model, task)


def simulate_task(model: WorldModel, task: Task) -> SimulationResult:
    """Forward-simulate ``task`` from the origin of ``model``.

    On the first step whose footprint contains an obstacle point, the
    simulation stops: the result's ``end_pose`` is the previous (safe) pose
    and ``interrupting`` holds the offending point.
    """
    task = _at_origin(task)
    poses = trajectory_of(task, model.config.time_step)
    pts = model.obstacle_points.array
    hit_step = None
    hit_point = None
    if len(pts):
        fp, infl = model.footprint, model.config.collision_inflation
        for k in range(1, len(poses)):
            mask = footprint_mask(poses[k], pts, fp, infl)
            if mask.any():
                hit_step = k
                hit_point = pts[int(np.argmax(mask))]
                break
    if hit_step is None:
        return SimulationResult(poses[-1], Disturbance.none(), _path_length(poses), len(poses) - 1, tuple(poses))
    visited = poses[:hit_step]
    return SimulationResult(
        visited[-1],
        Disturbance(DisturbanceKind.OBSTACLE, Point2(float(hit_point[0]), float(hit_point[1]))),
        _path_length(visited),
        hit_step - 1,
        tuple(visited),
    )


def simulation_trace_csv(result: SimulationResult) -> str:
    """CSV rows ``step,x,y,theta,collided`` for a simulation result.

    The final row is flagged when the task was interrupted.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "x", "y", "theta", "collided"])
    last = len(result.poses) - 1
    for i, p in enumerate(result.poses):
        collided = int(result.interrupted and i == last)
        writer.writerow([i, repr(p.x), repr(p.y), repr(p.heading), collided])
    return buf.getvalue()


def read_simulation_trace_csv(text: str) -> list[tuple[int, Pose, bool]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [
        (int(r["step"]), Pose(float(r["x"]), float(r["y"]), float(r["theta"])), r["collided"] == "1")
        for r in rows
    ]

