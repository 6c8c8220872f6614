"""Geometry primitives, scenario files, synthetic LiDAR and corridor filtering.

Everything here is a pure function over immutable values. Point clouds are
stored as read-only ``(N, 2)`` float arrays so the collision and filtering
code can stay vectorised.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario descriptions."""


class SensorOccludedError(ValueError):
    """Raised when the LiDAR origin lies inside an obstacle."""


def wrap_angle(angle: float) -> float:
    """Normalise an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def _require_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate {v!r}")


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self) -> None:
        _require_finite(self.x, self.y)

    def distance_to(self, other: Point2) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Pose:
    """Planar pose; ``heading`` is kept in (-pi, pi]."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        _require_finite(self.x, self.y, self.heading)
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @classmethod
    def origin(cls) -> Pose:
        return cls(0.0, 0.0, 0.0)

    @property
    def position(self) -> Point2:
        return Point2(self.x, self.y)

    def compose(self, other: Pose) -> Pose:
        """Map ``other`` (expressed in this pose's frame) into the parent frame."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Pose(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.heading + other.heading,
        )

    def relative(self, other: Pose) -> Pose:
        """Express ``other`` (parent frame) in this pose's frame."""
        local = self.to_local(other.position)
        return Pose(local.x, local.y, other.heading - self.heading)

    def to_local(self, p: Point2) -> Point2:
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx, dy = p.x - self.x, p.y - self.y
        return Point2(c * dx + s * dy, -s * dx + c * dy)

    def to_world(self, p: Point2) -> Point2:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Point2(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)


def points_to_local(pose: Pose, pts: np.ndarray) -> np.ndarray:
    """Vectorised :meth:`Pose.to_local` for an ``(N, 2)`` array."""
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    d = np.asarray(pts, dtype=float).reshape(-1, 2) - (pose.x, pose.y)
    return np.column_stack((c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]))


def points_to_world(pose: Pose, pts: np.ndarray) -> np.ndarray:
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    p = np.asarray(pts, dtype=float).reshape(-1, 2)
    return np.column_stack(
        (pose.x + c * p[:, 0] - s * p[:, 1], pose.y + s * p[:, 0] + c * p[:, 1])
    )


@dataclass(frozen=True)
class Footprint:
    """Rectangular robot footprint centred on the pose, long axis along heading."""

    half_width: float
    half_length: float

    def __post_init__(self) -> None:
        if not (self.half_width > 0 and self.half_length > 0):
            raise ValueError("footprint dimensions must be positive")

    @property
    def half_diagonal(self) -> float:
        return math.hypot(self.half_width, self.half_length)

    def corners(self, pose: Pose, inflation: float = 0.0) -> np.ndarray:
        hl = self.half_length + inflation
        hw = self.half_width + inflation
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        return points_to_world(pose, local)


@dataclass(frozen=True)
class LidarModel:
    beam_count: int = 360
    max_range: float = 4.0
    angular_span: float = TWO_PI
    range_noise_sd: float = 0.0

    def __post_init__(self) -> None:
        if self.beam_count < 1:
            raise ValueError("beam_count must be >= 1")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if not 0 < self.angular_span <= TWO_PI + 1e-12:
            raise ValueError("angular_span must be in (0, 2*pi]")
        if self.range_noise_sd < 0:
            raise ValueError("range_noise_sd must be >= 0")

    def bearings(self) -> np.ndarray:
        """Beam bearings relative to the sensor heading."""
        n = self.beam_count
        if self.angular_span >= TWO_PI - 1e-12:
            angles = np.arange(n) * (TWO_PI / n)
            return np.where(angles > math.pi, angles - TWO_PI, angles)
        if n == 1:
            return np.zeros(1)
        half = self.angular_span / 2.0
        return np.linspace(-half, half, n)


class PointCloud:
    """Ordered, immutable set of 2D points (``(N, 2)`` float array)."""

    __slots__ = ("_pts",)

    def __init__(self, points: Sequence[Point2] | np.ndarray | None = None):
        if points is None:
            arr = np.empty((0, 2))
        elif isinstance(points, np.ndarray):
            arr = np.array(points, dtype=float).reshape(-1, 2)
        else:
            arr = np.array([(p.x, p.y) for p in points], dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(arr)):
            raise ValueError("point cloud contains non-finite coordinates")
        arr.setflags(write=False)
        self._pts = arr

    @property
    def array(self) -> np.ndarray:
        return self._pts

    def __len__(self) -> int:
        return len(self._pts)

    def __iter__(self) -> Iterator[Point2]:
        for x, y in self._pts:
            yield Point2(float(x), float(y))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self._pts.shape == other._pts.shape and bool(np.array_equal(self._pts, other._pts))

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)})"

    def transformed_into(self, pose: Pose) -> PointCloud:
        """Re-express the cloud in the frame of ``pose``."""
        return PointCloud(points_to_local(pose, self._pts))


@dataclass(frozen=True)
class TaskCorridor:
    """Polyline centreline plus half-width.

    A single-point centreline degenerates to a disc.
    """

    centreline: tuple[Point2, ...]
    half_width: float

    def __post_init__(self) -> None:
        if not self.centreline:
            raise ValueError("corridor needs at least one centreline point")
        if self.half_width < 0:
            raise ValueError("corridor half_width must be >= 0")

    def distances(self, pts: np.ndarray) -> np.ndarray:
        """Distance from each point to the centreline."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        line = np.array([(p.x, p.y) for p in self.centreline])
        if len(line) == 1:
            return np.hypot(pts[:, 0] - line[0, 0], pts[:, 1] - line[0, 1])
        best = np.full(len(pts), np.inf)
        for a, b in zip(line[:-1], line[1:]):
            best = np.minimum(best, _point_segment_distance(pts, a, b))
        return best


def _point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    rel = pts - a
    if denom == 0.0:
        return np.hypot(rel[:, 0], rel[:, 1])
    t = np.clip(rel @ ab / denom, 0.0, 1.0)
    d = rel - np.outer(t, ab)
    return np.hypot(d[:, 0], d[:, 1])


def resample_pointcloud(cloud: PointCloud, corridor: TaskCorridor) -> PointCloud:
    """Keep only the points in the way of a task (inside its corridor).

    Order is preserved. Points are filtered, never thinned.
    """
    if len(cloud) == 0:
        return cloud
    keep = corridor.distances(cloud.array) <= corridor.half_width
    return PointCloud(cloud.array[keep])


def _polygon_is_convex(verts: np.ndarray) -> bool:
    n = len(verts)
    signs = set()
    for i in range(n):
        a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) > 1e-12:
            signs.add(cross > 0)
    return len(signs) == 1


@dataclass(frozen=True)
class Obstacle:
    """Convex polygon, vertices stored counter-clockwise."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise ScenarioError("obstacle needs at least 3 vertices")
        if not np.all(np.isfinite(verts)):
            raise ScenarioError("obstacle has non-finite vertices")
        area2 = float(np.sum(verts[:, 0] * np.roll(verts[:, 1], -1) - np.roll(verts[:, 0], -1) * verts[:, 1]))
        if abs(area2) < 1e-12:
            raise ScenarioError("obstacle is degenerate (collinear vertices)")
        if area2 < 0:
            verts = verts[::-1]
        if not _polygon_is_convex(verts):
            raise ScenarioError("obstacle must be convex; decompose concave shapes")
        object.__setattr__(self, "vertices", tuple((float(x), float(y)) for x, y in verts))

    @classmethod
    def box(cls, cx: float, cy: float, half_x: float, half_y: float) -> Obstacle:
        return cls(
            (
                (cx - half_x, cy - half_y),
                (cx + half_x, cy - half_y),
                (cx + half_x, cy + half_y),
                (cx - half_x, cy + half_y),
            )
        )

    @property
    def array(self) -> np.ndarray:
        return np.array(self.vertices)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.array
        return v, np.roll(v, -1, axis=0)

    def contains(self, p: Point2, tol: float = 0.0) -> bool:
        """True if ``p`` is inside or on the boundary (within ``tol``)."""
        a, b = self.edges()
        e = b - a
        cross = e[:, 0] * (p.y - a[:, 1]) - e[:, 1] * (p.x - a[:, 0])
        lengths = np.hypot(e[:, 0], e[:, 1])
        return bool(np.all(cross / lengths >= -tol))

    def translated(self, dx: float, dy: float) -> Obstacle:
        return Obstacle(tuple((x + dx, y + dy) for x, y in self.vertices))

    def scaled(self, factor: float) -> Obstacle:
        return Obstacle(tuple((x * factor, y * factor) for x, y in self.vertices))


@dataclass(frozen=True)
class Scenario:
    robot_start: Pose
    footprint: Footprint
    goal: Point2
    obstacles: tuple[Obstacle, ...] = ()
    lidar: LidarModel = field(default_factory=LidarModel)

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for ob in self.obstacles:
            if ob.contains(self.goal):
                raise ScenarioError("goal lies inside an obstacle")

    def with_obstacles(self, obstacles: Sequence[Obstacle]) -> Scenario:
        return Scenario(self.robot_start, self.footprint, self.goal, tuple(obstacles), self.lidar)


def ray_cast_scan(scenario: Scenario, pose: Pose, rng: np.random.Generator | int | None = None) -> PointCloud:
    """Synthesise a LiDAR scan of the ground-truth world from ``pose``.

    Returns one ego-frame point per beam that hits an obstacle within
    ``max_range``. With ``range_noise_sd > 0`` Gaussian noise is added along
    the beam; ``rng`` seeds it.
    """
    origin = pose.position
    for ob in scenario.obstacles:
        if ob.contains(origin):
            raise SensorOccludedError("sensor origin occluded")
    lidar = scenario.lidar
    if not scenario.obstacles:
        return PointCloud()

    bearings = lidar.bearings()
    angles = pose.heading + bearings
    d = np.column_stack((np.cos(angles), np.sin(angles)))  # (B, 2)

    starts = np.concatenate([ob.edges()[0] for ob in scenario.obstacles])
    ends = np.concatenate([ob.edges()[1] for ob in scenario.obstacles])
    e = ends - starts  # (E, 2)
    w = starts - (origin.x, origin.y)  # (E, 2)

    # origin + t*d = start + u*e  ->  t = cross(w, e)/cross(d, e), u = cross(w, d)/cross(d, e)
    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]  # (B, E)
    cross_we = w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]  # (E,)
    cross_wd = w[None, :, 0] * d[:, None, 1] - w[None, :, 1] * d[:, None, 0]  # (B, E)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_we[None, :] / denom
        u = cross_wd / denom
    valid = (np.abs(denom) > 1e-15) & (t >= 0) & (u >= 0) & (u <= 1)
    t = np.where(valid, t, np.inf)
    ranges = t.min(axis=1)
    hit = ranges <= lidar.max_range
    ranges = ranges[hit]
    bearings = bearings[hit]
    if lidar.range_noise_sd > 0 and len(ranges):
        gen = np.random.default_rng(rng)
        ranges = np.clip(ranges + gen.normal(0.0, lidar.range_noise_sd, len(ranges)), 0.0, lidar.max_range)
    pts = np.column_stack((ranges * np.cos(bearings), ranges * np.sin(bearings)))
    return PointCloud(pts)


# ---------------------------------------------------------------- file format

_TOP_KEYS = {"robot", "goal", "obstacles", "lidar"}
_ROBOT_KEYS = {"x", "y", "theta", "half_width", "half_length"}
_GOAL_KEYS = {"x", "y"}
_LIDAR_KEYS = {"beams", "max_range", "span", "noise_sd"}


def _check_keys(obj: object, allowed: set[str], where: str, required: set[str] | None = None) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"'{where}' must be an object")
    for key in obj:
        if key not in allowed:
            raise ScenarioError(f"unknown key '{where}.{key}'" if where else f"unknown key '{key}'")
    for key in sorted(required or set()):
        if key not in obj:
            raise ScenarioError(f"missing key '{where}.{key}'" if where else f"missing key '{key}'")
    return obj


def _num(obj: dict, key: str, where: str, default: float | None = None) -> float:
    if key not in obj:
        if default is None:
            raise ScenarioError(f"missing key '{where}.{key}'")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ScenarioError(f"key '{where}.{key}' must be a finite number")
    return float(val)


def scenario_from_dict(data: object) -> Scenario:
    """Build a :class:`Scenario` from its parsed JSON form. Unknown keys are rejected."""
    top = _check_keys(data, _TOP_KEYS, "", required={"robot", "goal"})
    robot = _check_keys(top["robot"], _ROBOT_KEYS, "robot", required={"half_width", "half_length"})
    goal = _check_keys(top["goal"], _GOAL_KEYS, "goal", required={"x", "y"})
    lidar_d = _check_keys(top.get("lidar", {}), _LIDAR_KEYS, "lidar")

    beams = lidar_d.get("beams", 360)
    if isinstance(beams, bool) or not isinstance(beams, int):
        raise ScenarioError("key 'lidar.beams' must be an integer")

    obstacles_raw = top.get("obstacles", [])
    if not isinstance(obstacles_raw, list):
        raise ScenarioError("'obstacles' must be a list of polygons")
    obstacles = []
    for i, poly in enumerate(obstacles_raw):
        if not isinstance(poly, list) or not all(
            isinstance(v, list) and len(v) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)
            for v in poly
        ):
            raise ScenarioError(f"'obstacles[{i}]' must be a list of [x, y] pairs")
        try:
            obstacles.append(Obstacle(tuple((float(x), float(y)) for x, y in poly)))
        except ScenarioError as exc:
            raise ScenarioError(f"'obstacles[{i}]': {exc}") from None

    try:
        return Scenario(
            robot_start=Pose(_num(robot, "x", "robot", 0.0), _num(robot, "y", "robot", 0.0), _num(robot, "theta", "robot", 0.0)),
            footprint=Footprint(_num(robot, "half_width", "robot"), _num(robot, "half_length", "robot")),
            goal=Point2(_num(goal, "x", "goal"), _num(goal, "y", "goal")),
            obstacles=tuple(obstacles),
            lidar=LidarModel(
                beam_count=beams,
                max_range=_num(lidar_d, "max_range", "lidar", 4.0),
                angular_span=_num(lidar_d, "span", "lidar", TWO_PI),
                range_noise_sd=_num(lidar_d, "noise_sd", "lidar", 0.0),
            ),
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def scenario_to_dict(scenario: Scenario) -> dict:
    s = scenario
    return {
        "robot": {
            "x": s.robot_start.x,
            "y": s.robot_start.y,
            "theta": s.robot_start.heading,
            "half_width": s.footprint.half_width,
            "half_length": s.footprint.half_length,
        },
        "goal": {"x": s.goal.x, "y": s.goal.y},
        "obstacles": [[list(v) for v in ob.vertices] for ob in s.obstacles],
        "lidar": {
            "beams": s.lidar.beam_count,
            "max_range": s.lidar.max_range,
            "span": s.lidar.angular_span,
            "noise_sd": s.lidar.range_noise_sd,
        },
    }


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from None
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")
