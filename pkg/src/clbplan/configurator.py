"""Best-first construction of the cognitive map and plan extraction.

The planning root frame is the robot's ego frame at planning time. Every
state stores its task in the task's own start frame (robot at the origin)
together with ``world_pose``, the task start in the root frame.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Literal

from .core_sim import (
    CoreKnowledgeEngine,
    EngineConfig,
    KinematicEngine,
    SimulationResult,
    StartInCollisionError,
    build_world_model,
    footprint_mask,
)
from .tasks import DEFAULT_CLEARANCE, BehaviourKind, Disturbance, DisturbanceKind, Task, TaskParams
from .world import Footprint, PointCloud, Pose

ChiSign = Literal["positive", "paper-negative"]

BRANCHES: tuple[tuple[BehaviourKind, ...], ...] = (
    (BehaviourKind.STRAIGHT,),
    (BehaviourKind.LEFT_TURN, BehaviourKind.STRAIGHT),
    (BehaviourKind.RIGHT_TURN, BehaviourKind.STRAIGHT),
)

_KIND_CODE = {BehaviourKind.STRAIGHT: "S", BehaviourKind.LEFT_TURN: "L", BehaviourKind.RIGHT_TURN: "R"}

# Grid used to detect revisited configurations (m, rad).
REVISIT_RESOLUTION = 1e-6


class ResetUndefinedError(ValueError):
    pass


class ExpandInterruptedError(ValueError):
    pass


class NoViablePlanError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    goal: Disturbance
    goal_radius: float = 0.05
    norm_length: float = 1.0
    max_expansions: int = 1000
    chi_sign: ChiSign = "positive"
    footprint: Footprint = Footprint(0.075, 0.1)
    params: TaskParams = TaskParams()
    engine: EngineConfig = EngineConfig()
    clearance: float = DEFAULT_CLEARANCE
    stop_at_goal: bool = True
    max_depth: int | None = None
    prune_revisits: bool = True

    def __post_init__(self) -> None:
        if self.goal.kind is not DisturbanceKind.GOAL:
            raise ValueError("planner goal must be a Goal disturbance")
        if not self.goal_radius > 0:
            raise ValueError("goal_radius must be positive")
        if not self.norm_length > 0:
            raise ValueError("norm_length must be positive")
        if self.max_expansions < 0:
            raise ValueError("max_expansions must be >= 0")
        if self.chi_sign not in ("positive", "paper-negative"):
            raise ValueError(f"unknown chi_sign {self.chi_sign!r}")


@dataclass
class State:
    id: int
    task: Task
    sim: SimulationResult
    world_pose: Pose
    parent: int | None = None
    depth: int = 0
    path: tuple[str, ...] = ()
    gamma: float = 0.0
    chi: float = 0.0
    phi: float = 0.0

    @property
    def contingent(self) -> Disturbance:
        return self.task.contingent

    @property
    def interrupting(self) -> Disturbance:
        return self.sim.interrupting

    @property
    def interrupted(self) -> bool:
        return self.sim.interrupted

    @property
    def end_world(self) -> Pose:
        return self.world_pose.compose(self.sim.end_pose)

    @property
    def label(self) -> str:
        return "".join(self.path) or "root"


@dataclass(frozen=True)
class ExpansionRecord:
    expanded: int
    queue: tuple[int, ...]


@dataclass
class CognitiveMap:
    states: list[State] = field(default_factory=list)
    transitions: list[tuple[int, int]] = field(default_factory=list)
    guard_flags: dict[tuple[int, int], int] = field(default_factory=dict)
    root: int = 0
    goal_reached: bool = False
    budget_exhausted: bool = False
    expansion_log: list[ExpansionRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)

    def add(self, state: State) -> State:
        assert state.id == len(self.states)
        self.states.append(state)
        if state.parent is not None:
            edge = (state.parent, state.id)
            self.transitions.append(edge)
            self.guard_flags[edge] = 0
        return state

    def children(self, sid: int) -> list[int]:
        return [c for p, c in self.transitions if p == sid]

    def path_to(self, sid: int) -> list[int]:
        path = [sid]
        while self.states[path[-1]].parent is not None:
            path.append(self.states[path[-1]].parent)
        return path[::-1]


@dataclass(frozen=True)
class PlanStep:
    state_id: int
    kind: BehaviourKind
    params: TaskParams
    start_pose: Pose  # root frame
    contingent: Disturbance  # root frame
    end_pose: Pose  # predicted, root frame


@dataclass(frozen=True)
class Plan:
    states: tuple[int, ...]
    steps: tuple[PlanStep, ...]
    origin: Pose = Pose.origin()  # root frame expressed in the world

    @property
    def tasks(self) -> list[BehaviourKind]:
        return [s.kind for s in self.steps]


# ---------------------------------------------------------------- costs


def reset(parent: State | None, goal: Disturbance) -> Disturbance:
    """Disturbance injected into the task that follows ``parent``.

    Only defined when ``parent`` was not interrupted; the goal is returned in
    the child's start frame.
    """
    if parent is None:
        return goal
    if parent.interrupted:
        raise ResetUndefinedError("reset undefined for interrupted state")
    return goal.reframed(Pose.origin(), parent.end_world)


def gamma(q: State, cfg: PlannerConfig) -> float:
    if not q.interrupted:
        return 0.0
    return q.sim.distance_travelled / cfg.norm_length


def chi(q: State, cfg: PlannerConfig) -> float:
    end = q.end_world
    d = math.hypot(end.x - cfg.goal.location.x, end.y - cfg.goal.location.y) / cfg.norm_length
    return -d if cfg.chi_sign == "paper-negative" else d


def phi(q: State, cfg: PlannerConfig) -> float:
    return gamma(q, cfg) + chi(q, cfg)


def priority(q: State, cfg: PlannerConfig) -> tuple[float, int]:
    """Sort key: lowest first. Under the paper-negative sign the maximum phi wins."""
    return (-q.phi if cfg.chi_sign == "paper-negative" else q.phi, q.id)


# ---------------------------------------------------------------- expansion


def _simulate(cloud: PointCloud, world_pose: Pose, task: Task, cfg: PlannerConfig, engine: CoreKnowledgeEngine) -> SimulationResult:
    local = cloud.transformed_into(world_pose)
    try:
        model = build_world_model(local, task, cfg.footprint, cfg.engine, cfg.clearance)
    except StartInCollisionError:
        mask = footprint_mask(Pose.origin(), local.array, cfg.footprint, cfg.engine.collision_inflation)
        x, y = local.array[mask][0]
        return SimulationResult(Pose.origin(), Disturbance.obstacle(float(x), float(y)), 0.0, 0, (Pose.origin(),))
    return engine.simulate(model, task)


def _new_state(
    cmap: CognitiveMap,
    kind: BehaviourKind,
    parent: State | None,
    cloud: PointCloud,
    cfg: PlannerConfig,
    engine: CoreKnowledgeEngine,
    params: TaskParams | None = None,
) -> State:
    contingent = reset(parent, cfg.goal)
    task = Task(kind, contingent, Pose.origin(), params or cfg.params)
    world_pose = parent.end_world if parent is not None else Pose.origin()
    q = State(
        id=len(cmap.states),
        task=task,
        sim=_simulate(cloud, world_pose, task, cfg, engine),
        world_pose=world_pose,
        parent=None if parent is None else parent.id,
        depth=0 if parent is None else parent.depth + (0 if parent.task.kind.is_turn else 1),
        path=() if parent is None else parent.path + (_KIND_CODE[kind],),
    )
    q.gamma, q.chi = gamma(q, cfg), chi(q, cfg)
    q.phi = q.gamma + q.chi
    return cmap.add(q)


def expand(
    cmap: CognitiveMap,
    q_e: State,
    cloud: PointCloud,
    cfg: PlannerConfig,
    engine: CoreKnowledgeEngine | None = None,
) -> list[State]:
    """Simulate the straight, left-then-straight and right-then-straight branches out of ``q_e``.

    Every simulated task becomes a state. A branch stops at its first
    interrupted task. Returns the safe straight states that end a branch.
    """
    if q_e.interrupted:
        raise ExpandInterruptedError("expanding interrupted state")
    engine = engine or KinematicEngine()
    frontier = []
    for branch in BRANCHES:
        parent = q_e
        for kind in branch:
            child = _new_state(cmap, kind, parent, cloud, cfg, engine)
            if child.interrupted:
                break
            parent = child
        else:
            frontier.append(child)
    return frontier


def _reached(q: State, cfg: PlannerConfig) -> bool:
    end = q.end_world
    return not q.interrupted and math.hypot(end.x - cfg.goal.location.x, end.y - cfg.goal.location.y) <= cfg.goal_radius


def _config_key(q: State) -> tuple[int, int, int]:
    end = q.end_world
    r = REVISIT_RESOLUTION
    return (round(end.x / r), round(end.y / r), round(end.heading / r))


def build_cognitive_map(
    cloud: PointCloud,
    cfg: PlannerConfig,
    engine: CoreKnowledgeEngine | None = None,
) -> CognitiveMap:
    """Grow the cognitive map best-first until the goal is reached or nothing is left to expand.

    ``cloud`` is the scan in the root frame (robot at the origin). The root
    state is the robot's present straight task toward the goal, simulated
    over zero travel so that every alternative starts from the current pose.
    """
    engine = engine or KinematicEngine()
    if len(cloud) and footprint_mask(Pose.origin(), cloud.array, cfg.footprint, cfg.engine.collision_inflation).any():
        raise StartInCollisionError("start in collision")

    cmap = CognitiveMap()
    root = _new_state(cmap, BehaviourKind.STRAIGHT, None, cloud, cfg, engine, replace(cfg.params, max_travel=0.0))
    cmap.goal_reached = _reached(root, cfg)

    queue: list[tuple[tuple[float, int], int]] = [(priority(root, cfg), root.id)]
    seen = {_config_key(root)}
    expansions = 0
    while queue:
        if cfg.stop_at_goal and cmap.goal_reached:
            break
        if expansions >= cfg.max_expansions:
            cmap.budget_exhausted = True
            break
        members = tuple(sorted(sid for _, sid in queue))
        _, sid = heapq.heappop(queue)
        cmap.expansion_log.append(ExpansionRecord(sid, members))
        first_new = len(cmap.states)
        frontier = expand(cmap, cmap.states[sid], cloud, cfg, engine)
        expansions += 1
        if any(_reached(q, cfg) for q in cmap.states[first_new:]):
            cmap.goal_reached = True
        for q in frontier:
            if cfg.max_depth is not None and q.depth >= cfg.max_depth:
                continue
            if cfg.prune_revisits:
                key = _config_key(q)
                if key in seen:
                    continue
                seen.add(key)
            heapq.heappush(queue, (priority(q, cfg), q.id))
    return cmap


def extract_plan(cmap: CognitiveMap, cfg: PlannerConfig, require_goal: bool = False) -> Plan:
    """Root-to-best path, where "best" is the least-cost uninterrupted state.

    Sets the guard flag to 1 on the plan's transitions and 0 elsewhere.
    With ``require_goal`` the best state must also lie within the goal radius.
    """
    safe = [q for q in cmap.states if not q.interrupted]
    if not any(q.id != cmap.root for q in safe):
        raise NoViablePlanError("no viable plan")
    best = min(safe, key=lambda q: priority(q, cfg))
    if require_goal and not _reached(best, cfg):
        raise NoViablePlanError("no viable plan: goal not reached")

    ids = cmap.path_to(best.id)
    on_path = set(zip(ids[:-1], ids[1:]))
    for edge in cmap.guard_flags:
        cmap.guard_flags[edge] = int(edge in on_path)

    steps = []
    for sid in ids:
        q = cmap.states[sid]
        steps.append(
            PlanStep(
                state_id=sid,
                kind=q.task.kind,
                params=q.task.params,
                start_pose=q.world_pose,
                contingent=q.contingent.reframed(q.world_pose, Pose.origin()),
                end_pose=q.end_world,
            )
        )
    return Plan(tuple(ids), tuple(steps))
