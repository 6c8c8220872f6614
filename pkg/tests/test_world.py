import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clbplan.world import (
    LidarModel,
    Obstacle,
    Point2,
    PointCloud,
    Pose,
    ScenarioError,
    SensorOccludedError,
    TaskCorridor,
    load_scenario,
    ray_cast_scan,
    resample_pointcloud,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    wrap_angle,
)

from conftest import make_scenario, wall

finite = st.floats(-3.0, 3.0, allow_nan=False)


# ---------------------------------------------------------------- primitives


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point2(float("nan"), 0.0)
    with pytest.raises(ValueError):
        Point2(0.0, float("inf"))


@pytest.mark.parametrize(
    "raw, expected",
    [(0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi), (3 * math.pi, math.pi), (2 * math.pi + 0.1, 0.1)],
)
def test_wrap_angle_range(raw, expected):
    assert wrap_angle(raw) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-50, 50, allow_nan=False))
def test_pose_heading_in_half_open_interval(h):
    p = Pose(0.0, 0.0, h)
    assert -math.pi < p.heading <= math.pi


@given(finite, finite, st.floats(-math.pi, math.pi), finite, finite)
def test_to_local_inverts_to_world(x, y, h, px, py):
    pose = Pose(x, y, h)
    back = pose.to_world(pose.to_local(Point2(px, py)))
    assert back.x == pytest.approx(px, abs=1e-9)
    assert back.y == pytest.approx(py, abs=1e-9)


def test_pose_compose_and_relative_roundtrip():
    a = Pose(1.0, 2.0, 0.7)
    b = Pose(-0.3, 0.4, -1.2)
    rel = a.relative(b)
    again = a.compose(rel)
    assert (again.x, again.y) == pytest.approx((b.x, b.y), abs=1e-12)
    assert again.heading == pytest.approx(b.heading, abs=1e-12)


def test_obstacle_validation():
    with pytest.raises(ScenarioError, match="3 vertices"):
        Obstacle(((0, 0), (1, 0)))
    with pytest.raises(ScenarioError, match="degenerate"):
        Obstacle(((0, 0), (1, 0), (2, 0)))
    with pytest.raises(ScenarioError, match="convex"):
        Obstacle(((0, 0), (2, 0), (2, 2), (1, 0.5), (0, 2)))
    # clockwise input is reoriented
    cw = Obstacle(((0, 0), (0, 1), (1, 1), (1, 0)))
    assert cw.contains(Point2(0.5, 0.5))


def test_goal_inside_obstacle_rejected():
    with pytest.raises(ScenarioError, match="goal"):
        make_scenario([wall(1.0, 0.0, 0.1, 0.1)])


# ---------------------------------------------------------------- ray casting


def _brute_force_range(origin, angle, obstacles, max_range):
    """Per-beam oracle: loop over every segment and solve the 2x2 system directly."""
    dx, dy = math.cos(angle), math.sin(angle)
    best = math.inf
    for ob in obstacles:
        v = ob.vertices
        for i in range(len(v)):
            (ax, ay), (bx, by) = v[i], v[(i + 1) % len(v)]
            m = np.array([[dx, -(bx - ax)], [dy, -(by - ay)]])
            if abs(np.linalg.det(m)) < 1e-15:
                continue
            t, u = np.linalg.solve(m, [ax - origin[0], ay - origin[1]])
            if t >= 0 and 0 <= u <= 1:
                best = min(best, t)
    return best if best <= max_range else None


def test_scan_of_empty_world_is_empty():
    assert len(ray_cast_scan(make_scenario(), Pose(0.3, -0.2, 1.0))) == 0


def test_single_beam_hits_wall_ahead():
    sc = make_scenario([wall(0.55, 0.0, 0.05, 0.5)], goal=(-1.0, 0.0))
    sc = type(sc)(sc.robot_start, sc.footprint, sc.goal, sc.obstacles, LidarModel(beam_count=1, angular_span=0.1))
    cloud = ray_cast_scan(sc, Pose.origin())
    np.testing.assert_allclose(cloud.array, [[0.5, 0.0]], atol=1e-12)


def test_overtaking_scan_matches_segment_oracle(overtaking):
    pose = overtaking.robot_start
    cloud = ray_cast_scan(overtaking, pose)
    expected = []
    for b in overtaking.lidar.bearings():
        r = _brute_force_range((pose.x, pose.y), pose.heading + b, overtaking.obstacles, overtaking.lidar.max_range)
        if r is not None:
            expected.append((r * math.cos(b), r * math.sin(b)))
    assert len(cloud) == len(expected) > 0
    np.testing.assert_allclose(cloud.array, np.array(expected), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(
    st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-math.pi, math.pi),
    st.floats(0.4, 1.5), st.floats(-1.0, 1.0), st.floats(0.02, 0.3), st.floats(0.02, 0.3),
)
def test_scan_points_lie_on_obstacle_boundary(x, y, h, cx, cy, hx, hy):
    ob = wall(cx, cy, hx, hy)
    if ob.contains(Point2(x, y), tol=1e-6):
        return
    sc = make_scenario([ob], goal=(-2.0, -2.0), beams=90)
    pose = Pose(x, y, h)
    cloud = ray_cast_scan(sc, pose)
    a, b = ob.edges()
    for p in cloud:
        w = pose.to_world(p)
        dist = min(_seg_dist((w.x, w.y), s, e) for s, e in zip(a, b))
        assert dist < 1e-9


def _seg_dist(p, a, b):
    p, a, b = map(np.asarray, (p, a, b))
    t = np.clip((p - a) @ (b - a) / ((b - a) @ (b - a)), 0, 1)
    return float(np.linalg.norm(p - (a + t * (b - a))))


def test_scan_is_deterministic_without_noise(overtaking):
    assert ray_cast_scan(overtaking, Pose(0.1, 0.05, 0.2)) == ray_cast_scan(overtaking, Pose(0.1, 0.05, 0.2))


def test_scan_noise_is_seeded(overtaking):
    noisy = type(overtaking)(
        overtaking.robot_start, overtaking.footprint, overtaking.goal, overtaking.obstacles,
        LidarModel(range_noise_sd=0.01),
    )
    a = ray_cast_scan(noisy, Pose.origin(), rng=3)
    b = ray_cast_scan(noisy, Pose.origin(), rng=3)
    clean = ray_cast_scan(overtaking, Pose.origin())
    assert a == b
    assert a != clean
    assert np.all(np.hypot(*a.array.T) <= noisy.lidar.max_range)


def test_scan_from_inside_obstacle_fails(overtaking):
    ob = overtaking.obstacles[0]
    inside = Point2(*ob.array.mean(axis=0))
    with pytest.raises(SensorOccludedError, match="sensor origin occluded"):
        ray_cast_scan(overtaking, Pose(inside.x, inside.y, 0.0))


def test_scan_respects_max_range():
    sc = make_scenario([wall(5.0, 0.0, 0.1, 0.5)])
    assert len(ray_cast_scan(sc, Pose.origin())) == 0


# ---------------------------------------------------------------- resampling

STRAIGHT = TaskCorridor((Point2(0.0, 0.0), Point2(1.0, 0.0)), 0.125)


def test_resample_empty_cloud():
    assert len(resample_pointcloud(PointCloud(), STRAIGHT)) == 0


def test_resample_excludes_far_point():
    assert len(resample_pointcloud(PointCloud([Point2(0.5, 5.0)]), STRAIGHT)) == 0


def test_resample_keeps_points_within_half_width():
    cloud = PointCloud([Point2(0.5, 0.0), Point2(0.5, 0.10), Point2(0.5, 0.20)])
    kept = resample_pointcloud(cloud, STRAIGHT)
    assert kept.array.tolist() == [[0.5, 0.0], [0.5, 0.10]]


def test_resample_boundary_point_is_kept():
    assert len(resample_pointcloud(PointCloud([Point2(0.5, 0.125)]), STRAIGHT)) == 1


clouds = st.lists(st.tuples(finite, finite), max_size=40).map(lambda pts: PointCloud(np.array(pts, dtype=float)))
corridors = st.builds(
    lambda pts, hw: TaskCorridor(tuple(Point2(*p) for p in pts), hw),
    st.lists(st.tuples(finite, finite), min_size=1, max_size=4),
    st.floats(0.0, 1.0),
)


@given(clouds, corridors)
def test_resample_is_idempotent(cloud, corridor):
    once = resample_pointcloud(cloud, corridor)
    assert resample_pointcloud(once, corridor) == once


@given(clouds, corridors)
def test_resample_is_ordered_subset(cloud, corridor):
    out = [tuple(p) for p in resample_pointcloud(cloud, corridor).array.tolist()]
    src = [tuple(p) for p in cloud.array.tolist()]
    it = iter(src)
    assert all(any(p == q for q in it) for p in out)


# ---------------------------------------------------------------- scenario files


def test_scenario_roundtrip(tmp_path, overtaking):
    path = tmp_path / "s.json"
    save_scenario(overtaking, path)
    assert load_scenario(path) == overtaking


@pytest.mark.parametrize(
    "mutate, key",
    [
        (lambda d: d.update(extra=1), "extra"),
        (lambda d: d["robot"].update(radius=0.1), "robot.radius"),
        (lambda d: d["lidar"].update(fov=1.0), "lidar.fov"),
        (lambda d: d["goal"].update(z=0.0), "goal.z"),
    ],
)
def test_parser_rejects_unknown_keys(overtaking, mutate, key):
    data = json.loads(json.dumps(scenario_to_dict(overtaking)))
    mutate(data)
    with pytest.raises(ScenarioError, match=key.replace(".", r"\.")):
        scenario_from_dict(data)


def test_parser_rejects_bad_values(overtaking):
    data = scenario_to_dict(overtaking)
    data["robot"]["half_width"] = -1
    with pytest.raises(ScenarioError):
        scenario_from_dict(data)
    data = scenario_to_dict(overtaking)
    data["lidar"]["beams"] = 0
    with pytest.raises(ScenarioError):
        scenario_from_dict(data)
