"""Closed-loop execution in the ground-truth world, reactive baseline and benchmark harness."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np
from shapely.geometry import Polygon
from shapely.prepared import prep

from .configurator import (
    CognitiveMap,
    NoViablePlanError,
    Plan,
    PlannerConfig,
    build_cognitive_map,
    extract_plan,
)
from .core_sim import EngineConfig, StartInCollisionError
from .tasks import Disturbance, Task, control_step, integrate, step_duration, terminated
from .world import Point2, PointCloud, Pose, Scenario, ScenarioError, SensorOccludedError, ray_cast_scan

log = logging.getLogger(__name__)

# Default actuation noise: 5% of the default commanded speeds (m/s, rad/s).
DEFAULT_ACTUATION_NOISE = (0.01, 0.05)


@dataclass
class ExecutionTrace:
    times: list[float] = field(default_factory=list)
    poses: list[Pose] = field(default_factory=list)
    in_contact: list[bool] = field(default_factory=list)
    collisions: list[tuple[float, Point2]] = field(default_factory=list)
    goal_reached: bool = False
    wall_time_planning: float | None = None
    states_explored: int = 0
    actuation_noise_sd: tuple[float, float] = (0.0, 0.0)

    @property
    def final_pose(self) -> Pose:
        return self.poses[-1]


class _ContactMonitor:
    """Logs one collision per contact episode between footprint and obstacle polygons."""

    def __init__(self, scenario: Scenario, trace: ExecutionTrace):
        self.footprint = scenario.footprint
        self.obstacles = [Polygon(ob.vertices) for ob in scenario.obstacles]
        self.prepared = [prep(p) for p in self.obstacles]
        self.trace = trace
        self.touching = False

    def record(self, t: float, pose: Pose) -> None:
        hit = None
        if self.obstacles:
            body = Polygon(self.footprint.corners(pose))
            for poly, fast in zip(self.obstacles, self.prepared):
                if fast.intersects(body):
                    c = poly.intersection(body).centroid
                    hit = Point2(c.x, c.y) if not c.is_empty else pose.position
                    break
        if hit is not None and not self.touching:
            self.trace.collisions.append((t, hit))
        self.touching = hit is not None
        self.trace.times.append(t)
        self.trace.poses.append(pose)
        self.trace.in_contact.append(self.touching)


def _noisy(lin: float, ang: float, noise: tuple[float, float], rng: np.random.Generator | None) -> tuple[float, float]:
    if rng is None or (noise[0] == 0 and noise[1] == 0):
        return lin, ang
    return lin + rng.normal(0.0, noise[0]), ang + rng.normal(0.0, noise[1])


def execute_plan(
    scenario: Scenario,
    plan: Plan,
    noise: tuple[float, float] = (0.0, 0.0),
    rng: np.random.Generator | int | None = None,
    time_step: float = 0.05,
    goal_radius: float = 0.05,
) -> ExecutionTrace:
    """Run each plan task's control loop against the real (ground-truth) world.

    Every task is re-anchored at the pose the robot actually reached, so
    actuation errors accumulate across tasks. Contacts are logged, never
    fatal.
    """
    gen = np.random.default_rng(rng) if (noise[0] or noise[1]) else None
    trace = ExecutionTrace(actuation_noise_sd=tuple(noise))
    monitor = _ContactMonitor(scenario, trace)
    pose = plan.origin.compose(plan.steps[0].start_pose) if plan.steps else scenario.robot_start
    t = 0.0
    monitor.record(t, pose)
    for step in plan.steps:
        target = plan.origin.to_world(step.contingent.location)
        task = Task(step.kind, Disturbance(step.contingent.kind, pose.to_local(target)), pose, step.params)
        rate = step.params.angular_speed if step.kind.is_turn else step.params.linear_speed
        cap = 10 * int(math.ceil(task.target() / (rate * time_step))) + 100
        for _ in range(cap):
            if terminated(task, pose):
                break
            lin, ang = control_step(task, pose).motor
            dt = step_duration(task, pose, time_step)
            lin, ang = _noisy(lin, ang, noise, gen)
            pose = integrate(pose, lin, ang, dt)
            t += dt
            monitor.record(t, pose)
    trace.goal_reached = pose.position.distance_to(scenario.goal) <= goal_radius
    return trace


@dataclass(frozen=True)
class BaselineParams:
    linear_speed: float = 0.2
    angular_speed: float = 1.0
    lookahead: float = 0.3
    clearance: float = 0.05
    steer_gain: float = 2.0
    time_step: float = 0.05
    time_budget: float = 60.0
    stuck_timeout: float = 10.0
    progress_eps: float = 0.02
    goal_radius: float = 0.05


def reactive_baseline(
    scenario: Scenario,
    params: BaselineParams = BaselineParams(),
    noise: tuple[float, float] = (0.0, 0.0),
    rng: np.random.Generator | int | None = None,
) -> ExecutionTrace:
    """Single always-on controller with one-loop-ahead obstacle detection.

    Steers toward the goal; when a scan return enters the corridor just ahead
    of the robot it turns in place, away from the centroid of the returns in
    front, until the corridor clears. Nothing is simulated ahead.
    """
    gen = np.random.default_rng(rng)
    trace = ExecutionTrace(actuation_noise_sd=tuple(noise))
    monitor = _ContactMonitor(scenario, trace)
    fp = scenario.footprint
    reach = fp.half_length + params.lookahead
    half = fp.half_width + params.clearance
    pose = scenario.robot_start
    t = 0.0
    monitor.record(t, pose)
    best = pose.position.distance_to(scenario.goal)
    last_progress = 0.0
    avoid_dir = 0.0
    use_noise = bool(noise[0] or noise[1])
    while t < params.time_budget:
        dist = pose.position.distance_to(scenario.goal)
        if dist <= params.goal_radius:
            break
        if dist < best - params.progress_eps:
            best, last_progress = dist, t
        elif t - last_progress > params.stuck_timeout:
            log.debug("baseline stuck at t=%.2f", t)
            break
        try:
            scan = ray_cast_scan(scenario, pose, gen).array
        except SensorOccludedError:
            log.debug("baseline drove into an obstacle at t=%.2f", t)
            break
        ahead = scan[(scan[:, 0] > 0) & (scan[:, 0] <= reach) & (np.abs(scan[:, 1]) <= half)] if len(scan) else scan
        if len(ahead):
            if avoid_dir == 0.0:
                front = scan[scan[:, 0] > 0]
                centroid_bearing = math.atan2(front[:, 1].mean(), front[:, 0].mean())
                avoid_dir = -1.0 if centroid_bearing >= 0 else 1.0
            lin, ang = 0.0, avoid_dir * params.angular_speed
        else:
            avoid_dir = 0.0
            g = pose.to_local(scenario.goal)
            bearing = math.atan2(g.y, g.x)
            ang = max(-params.angular_speed, min(params.angular_speed, params.steer_gain * bearing))
            lin = params.linear_speed * max(0.0, math.cos(bearing))
        if use_noise:
            lin, ang = _noisy(lin, ang, noise, gen)
        pose = integrate(pose, lin, ang, params.time_step)
        t += params.time_step
        monitor.record(t, pose)
    trace.goal_reached = pose.position.distance_to(scenario.goal) <= params.goal_radius
    return trace


# ---------------------------------------------------------------- planning pipeline


def planner_config_for(scenario: Scenario, **overrides: Any) -> PlannerConfig:
    """Planner settings for a scenario: goal in the robot's start frame, norm = start-to-goal distance."""
    goal = scenario.robot_start.to_local(scenario.goal)
    defaults = dict(
        goal=Disturbance.goal(goal.x, goal.y),
        norm_length=math.hypot(goal.x, goal.y) or 1.0,
        footprint=scenario.footprint,
    )
    defaults.update(overrides)
    return PlannerConfig(**defaults)


@dataclass
class PlanningOutcome:
    config: PlannerConfig
    cloud: PointCloud
    cmap: CognitiveMap | None
    plan: Plan | None
    wall_time: float
    error: str | None = None


def plan_scenario(
    scenario: Scenario,
    cfg: PlannerConfig | None = None,
    rng: np.random.Generator | int | None = None,
    require_goal: bool = True,
) -> PlanningOutcome:
    """Scan from the robot's start, build the cognitive map and extract a plan."""
    cfg = cfg or planner_config_for(scenario)
    cloud = ray_cast_scan(scenario, scenario.robot_start, rng)
    t0 = time.perf_counter()
    try:
        cmap = build_cognitive_map(cloud, cfg)
    except StartInCollisionError as exc:
        return PlanningOutcome(cfg, cloud, None, None, time.perf_counter() - t0, str(exc))
    try:
        plan = replace(extract_plan(cmap, cfg, require_goal=require_goal), origin=scenario.robot_start)
        error = None
    except NoViablePlanError as exc:
        plan, error = None, str(exc)
    return PlanningOutcome(cfg, cloud, cmap, plan, time.perf_counter() - t0, error)


# ---------------------------------------------------------------- benchmark


def _mean_sd(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    arr = np.asarray(values, dtype=float)
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), sd


def jitter_scenario(scenario: Scenario, rng: np.random.Generator, sd: float, max_tries: int = 100) -> Scenario:
    """Translate every obstacle by Gaussian noise, redrawing layouts that trap the start or goal."""
    if sd == 0 or not scenario.obstacles:
        return scenario
    fp_poly = Polygon(scenario.footprint.corners(scenario.robot_start))
    for _ in range(max_tries):
        moved = [ob.translated(*rng.normal(0.0, sd, 2)) for ob in scenario.obstacles]
        if any(Polygon(ob.vertices).intersects(fp_poly) for ob in moved):
            continue
        try:
            return scenario.with_obstacles(moved)
        except ScenarioError:
            continue
    raise ScenarioError("could not jitter obstacles without trapping start or goal")


@dataclass
class RunStreams:
    jitter: np.random.Generator
    scan: np.random.Generator
    execution: np.random.Generator
    baseline: np.random.Generator


def run_streams(seed: int, n_runs: int) -> list[RunStreams]:
    """Independent generators for each benchmark run, derived from child ``i`` of ``SeedSequence(seed)``."""
    return [
        RunStreams(*(np.random.default_rng(s) for s in child.spawn(4)))
        for child in np.random.SeedSequence(seed).spawn(n_runs)
    ]


@dataclass
class RunRecord:
    run: int
    plan_found: bool
    states: int
    plan_length: int
    planned_goal_reached: bool
    planned_collisions: int
    baseline_goal_reached: bool
    baseline_collisions: int
    planning_time: float = field(default=0.0, compare=False)


@dataclass
class BenchmarkResult:
    runs: list[RunRecord]
    settings: dict[str, Any]
    plan_traces: list[ExecutionTrace | None] = field(default_factory=list, repr=False)
    baseline_traces: list[ExecutionTrace] = field(default_factory=list, repr=False)

    def summary(self) -> dict[str, Any]:
        """Seed-deterministic statistics (no wall-clock values)."""
        runs = self.runs
        n = len(runs)
        states_mean, states_sd = _mean_sd([r.states for r in runs])
        plan_ok = [r.plan_found and r.planned_goal_reached and r.planned_collisions == 0 for r in runs]
        base_bad = [not r.baseline_goal_reached or r.baseline_collisions > 0 for r in runs]
        return {
            "runs": n,
            "settings": self.settings,
            "planning": {
                "plans_found": sum(r.plan_found for r in runs),
                "goal_reached": sum(r.planned_goal_reached for r in runs),
                "collision_runs": sum(r.planned_collisions > 0 for r in runs),
                "collisions_total": sum(r.planned_collisions for r in runs),
                "success_rate": sum(plan_ok) / n,
                "states_mean": states_mean,
                "states_sd": states_sd,
            },
            "reactive": {
                "goal_reached": sum(r.baseline_goal_reached for r in runs),
                "collision_runs": sum(r.baseline_collisions > 0 for r in runs),
                "collisions_total": sum(r.baseline_collisions for r in runs),
                "failed_or_collided": sum(base_bad),
                "success_rate": 1 - sum(base_bad) / n,
            },
            "per_run": [
                {k: v for k, v in asdict(r).items() if k != "planning_time"} for r in runs
            ],
        }

    def timing(self) -> dict[str, float]:
        mean, sd = _mean_sd([r.planning_time for r in self.runs])
        return {"planning_time_mean_s": mean, "planning_time_sd_s": sd}


def run_benchmark(
    scenario: Scenario,
    n_runs: int = 10,
    seed: int = 0,
    jitter_sd: float = 0.01,
    actuation_noise: tuple[float, float] = DEFAULT_ACTUATION_NOISE,
    lidar_noise_sd: float | None = None,
    cfg_overrides: dict[str, Any] | None = None,
    baseline: BaselineParams = BaselineParams(),
) -> BenchmarkResult:
    """Run the planning and reactive conditions ``n_runs`` times each.

    Run ``i`` draws all of its randomness from :func:`run_streams`, so
    results are reproducible and independent of execution order.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    cfg_overrides = dict(cfg_overrides or {})
    if lidar_noise_sd is not None:
        scenario = replace(scenario, lidar=replace(scenario.lidar, range_noise_sd=lidar_noise_sd))
    time_step = cfg_overrides.get("engine", EngineConfig()).time_step
    goal_radius = cfg_overrides.get("goal_radius", 0.05)
    baseline = replace(baseline, goal_radius=goal_radius)

    result = BenchmarkResult(
        runs=[],
        settings={
            "seed": seed,
            "jitter_sd": jitter_sd,
            "actuation_noise_sd": list(actuation_noise),
            "lidar_noise_sd": scenario.lidar.range_noise_sd,
        },
    )
    for i, streams in enumerate(run_streams(seed, n_runs)):
        world = jitter_scenario(scenario, streams.jitter, jitter_sd)
        outcome = plan_scenario(world, planner_config_for(world, **cfg_overrides), streams.scan)
        trace = None
        if outcome.plan is not None:
            trace = execute_plan(world, outcome.plan, actuation_noise, streams.execution, time_step, goal_radius)
            trace.wall_time_planning = outcome.wall_time
            trace.states_explored = len(outcome.cmap)
        base = reactive_baseline(world, baseline, actuation_noise, streams.baseline)
        result.plan_traces.append(trace)
        result.baseline_traces.append(base)
        result.runs.append(
            RunRecord(
                run=i,
                plan_found=outcome.plan is not None,
                states=len(outcome.cmap) if outcome.cmap else 0,
                plan_length=len(outcome.plan.states) if outcome.plan else 0,
                planned_goal_reached=bool(trace and trace.goal_reached),
                planned_collisions=len(trace.collisions) if trace else 0,
                baseline_goal_reached=base.goal_reached,
                baseline_collisions=len(base.collisions),
                planning_time=outcome.wall_time,
            )
        )
        log.info("run %d: %s", i, result.runs[-1])
    return result
