import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clbplan.tasks import (
    BehaviourKind,
    Disturbance,
    DisturbanceKind,
    Task,
    TaskParams,
    UnboundedTaskError,
    control_step,
    corridor_of,
    integrate,
    terminated,
    trajectory_of,
)
from clbplan.world import Footprint, Point2, Pose

FP = Footprint(0.075, 0.1)
GOAL_AHEAD = Disturbance.goal(1.0, 0.0)
QUARTER = TaskParams(turn_angle=math.pi / 2)


def straight(goal=GOAL_AHEAD, **kw):
    return Task(BehaviourKind.STRAIGHT, goal, Pose.origin(), TaskParams(**kw))


def test_task_needs_a_disturbance():
    with pytest.raises(ValueError):
        Task(BehaviourKind.STRAIGHT, Disturbance.none())


@pytest.mark.parametrize(
    "kw",
    [{"linear_speed": 0}, {"angular_speed": -1}, {"turn_angle": 0}, {"turn_angle": 4.0}, {"max_travel": -0.1}],
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        TaskParams(**kw)


# ---------------------------------------------------------------- control_step / terminated


def test_straight_at_termination_outputs_zero():
    assert control_step(straight(), Pose(1.0, 0.0, 0.0)).motor == (0.0, 0.0)


def test_left_turn_at_start_rotates_positive():
    task = Task(BehaviourKind.LEFT_TURN, GOAL_AHEAD, Pose.origin(), QUARTER)
    assert control_step(task, Pose.origin()).motor == (0.0, QUARTER.angular_speed)


def test_right_turn_stops_at_quarter_turn():
    task = Task(BehaviourKind.RIGHT_TURN, GOAL_AHEAD, Pose.origin(), QUARTER)
    assert control_step(task, Pose(0, 0, -math.radians(80))).motor == (0.0, -QUARTER.angular_speed)
    assert control_step(task, Pose(0, 0, -math.radians(90))).motor == (0.0, 0.0)
    # integrate under the stepper and read off the stop angle
    pose, dt, turned = Pose.origin(), 0.05, 0.0
    while not terminated(task, pose):
        _, w = control_step(task, pose).motor
        pose = integrate(pose, 0.0, w, dt)
        turned += abs(w) * dt
    assert turned == pytest.approx(math.pi / 2, abs=QUARTER.angular_speed * dt)


def test_error_signal_reports_bearing_and_range():
    sig = control_step(straight(Disturbance.goal(1.0, 1.0)), Pose.origin())
    assert sig.error == pytest.approx((math.pi / 4, math.sqrt(2)))


def test_straight_termination_examples():
    assert terminated(straight(), Pose(1.0, 0.0, 0.0))
    assert not terminated(straight(), Pose.origin())


def test_offset_goal_terminates_at_closest_approach():
    task = straight(Disturbance.goal(0.7, 0.4))
    poses = trajectory_of(task)
    assert poses[-1].x == pytest.approx(0.7, abs=1e-12)
    assert not terminated(task, Pose(0.69, 0.0, 0.0))


def test_straight_capped_by_max_travel():
    task = straight(Disturbance.goal(5.0, 0.0), max_travel=0.3)
    assert trajectory_of(task)[-1].x == pytest.approx(0.3)


def test_goal_behind_gives_zero_travel():
    assert len(trajectory_of(straight(Disturbance.goal(-1.0, 0.2)))) == 1


@given(
    st.sampled_from(list(BehaviourKind)),
    st.floats(-2, 2), st.floats(-2, 2), st.floats(-math.pi, math.pi),
    st.floats(-2, 2), st.floats(-2, 2),
)
def test_motor_zero_iff_terminated(kind, x, y, h, gx, gy):
    task = Task(kind, Disturbance.goal(gx, gy), Pose.origin(), TaskParams())
    pose = Pose(x, y, h)
    assert (control_step(task, pose).motor == (0.0, 0.0)) == terminated(task, pose)


# ---------------------------------------------------------------- trajectories


def test_left_turn_trajectory_monotone_and_final_heading():
    task = Task(BehaviourKind.LEFT_TURN, GOAL_AHEAD, Pose.origin(), QUARTER)
    dt = 0.05
    headings = [p.heading for p in trajectory_of(task, dt)]
    assert all(b > a for a, b in zip(headings, headings[1:]))
    assert headings[-1] == pytest.approx(math.pi / 2, abs=QUARTER.angular_speed * dt)
    assert all(p.x == 0 and p.y == 0 for p in trajectory_of(task, dt))


def test_zero_max_travel_is_single_pose():
    assert trajectory_of(straight(max_travel=0.0)) == [Pose.origin()]


def test_one_metre_straight_pose_count():
    poses = trajectory_of(straight(), 0.05)
    assert len(poses) == 101
    gaps = np.diff([p.x for p in poses])
    np.testing.assert_allclose(gaps, 0.01, atol=1e-12)


@given(st.sampled_from(list(BehaviourKind)), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.0, 3.0))
def test_trajectory_ends_terminated_and_within_travel(kind, gx, gy, travel):
    task = Task(kind, Disturbance.goal(gx, gy), Pose.origin(), TaskParams(max_travel=travel))
    poses = trajectory_of(task)
    assert poses[0] == task.start_pose
    assert terminated(task, poses[-1])
    if kind is BehaviourKind.STRAIGHT:
        assert poses[-1].x <= travel + 1e-12


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-math.pi, math.pi), st.floats(0.1, math.pi))
def test_turns_are_mirror_images(x, y, h, angle):
    params = TaskParams(turn_angle=angle)
    start = Pose(x, y, h)
    mirrored_start = Pose(x, -y, -h)
    left = trajectory_of(Task(BehaviourKind.LEFT_TURN, GOAL_AHEAD, start, params))
    right = trajectory_of(Task(BehaviourKind.RIGHT_TURN, GOAL_AHEAD, mirrored_start, params))
    assert len(left) == len(right)
    for a, b in zip(left, right):
        assert (a.x, -a.y) == pytest.approx((b.x, b.y), abs=1e-9)
        assert math.cos(a.heading) == pytest.approx(math.cos(b.heading), abs=1e-9)
        assert math.sin(a.heading) == pytest.approx(-math.sin(b.heading), abs=1e-9)


def test_unbounded_straight_raises():
    far = object.__new__(Point2)  # bypass the finiteness check
    object.__setattr__(far, "x", math.inf)
    object.__setattr__(far, "y", 0.0)
    task = straight(max_travel=math.inf)
    object.__setattr__(task, "contingent", Disturbance(DisturbanceKind.GOAL, far))
    with pytest.raises(UnboundedTaskError, match="unbounded task"):
        trajectory_of(task)


def test_integrate_arc_closed_form():
    end = integrate(Pose.origin(), 1.0, 1.0, math.pi / 2)
    assert (end.x, end.y, end.heading) == pytest.approx((1.0, 1.0, math.pi / 2))


# ---------------------------------------------------------------- corridors


def test_straight_corridor_is_inflated_rectangle():
    c = corridor_of(straight(), FP, clearance=0.05)
    assert [(p.x, p.y) for p in c.centreline] == [(0.0, 0.0), (1.0, 0.0)]
    assert c.half_width == pytest.approx(0.125)


def test_zero_length_straight_corridor_is_start_disc():
    c = corridor_of(straight(max_travel=0.0), FP, clearance=0.05)
    assert len(c.centreline) == 1
    assert c.half_width == pytest.approx(FP.half_diagonal + 0.05)


def test_turn_corridor_is_swept_disc():
    c = corridor_of(Task(BehaviourKind.LEFT_TURN, GOAL_AHEAD, Pose.origin(), QUARTER), FP, clearance=0.05)
    assert len(c.centreline) == 1
    assert c.half_width == pytest.approx(math.hypot(0.075, 0.1) + 0.05)


@pytest.mark.parametrize("kind", [BehaviourKind.LEFT_TURN, BehaviourKind.RIGHT_TURN])
def test_half_turn_terminates(kind):
    task = Task(kind, GOAL_AHEAD, Pose.origin(), TaskParams(turn_angle=math.pi))
    poses = trajectory_of(task)
    assert abs(poses[-1].heading) == pytest.approx(math.pi, abs=1e-9)
    assert len(poses) == math.ceil(math.pi / 0.05) + 1


def test_long_footprint_stretches_straight_corridor():
    long_fp = Footprint(0.05, 0.3)
    c = corridor_of(straight(), long_fp, clearance=0.05)
    stretch = 0.3 - math.sqrt(0.1**2 - 0.05**2)
    assert c.half_width == pytest.approx(0.1)
    assert (c.centreline[0].x, c.centreline[1].x) == pytest.approx((-stretch, 1.0 + stretch))
    # the front corners of the footprint at the end pose sit on the cap
    assert c.distances(np.array([[1.3, 0.05]]))[0] == pytest.approx(0.1)
