"""Readers and writers for everything the CLI emits.

Every writer here has a matching reader so emitted files can be re-parsed.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import networkx as nx

from .configurator import CognitiveMap, Plan, PlanStep
from .executor import ExecutionTrace
from .tasks import BehaviourKind, Disturbance, DisturbanceKind, TaskParams
from .world import Point2, Pose

TRACE_COLUMNS = ["t", "x", "y", "theta", "collided"]


def _pose_dict(p: Pose) -> dict[str, float]:
    return {"x": p.x, "y": p.y, "theta": p.heading}


def _pose(d: dict[str, float]) -> Pose:
    return Pose(d["x"], d["y"], d["theta"])


# ---------------------------------------------------------------- traces


def write_trace_csv(trace: ExecutionTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for t, p, c in zip(trace.times, trace.poses, trace.in_contact):
            writer.writerow([repr(t), repr(p.x), repr(p.y), repr(p.heading), int(c)])


def read_trace_csv(path: str | Path) -> ExecutionTrace:
    """Rebuild the time series of a trace. Collision events are re-derived from contact onsets."""
    trace = ExecutionTrace()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace columns {reader.fieldnames}")
        previous = False
        for row in reader:
            t = float(row["t"])
            pose = Pose(float(row["x"]), float(row["y"]), float(row["theta"]))
            touching = row["collided"] == "1"
            if touching and not previous:
                trace.collisions.append((t, pose.position))
            previous = touching
            trace.times.append(t)
            trace.poses.append(pose)
            trace.in_contact.append(touching)
    return trace


# ---------------------------------------------------------------- plans


def plan_to_dict(plan: Plan) -> dict[str, Any]:
    return {
        "origin": _pose_dict(plan.origin),
        "states": list(plan.states),
        "tasks": [
            {
                "state": s.state_id,
                "kind": s.kind.value,
                "start": _pose_dict(s.start_pose),
                "end": _pose_dict(s.end_pose),
                "contingent": {
                    "kind": s.contingent.kind.value,
                    "x": s.contingent.location.x,
                    "y": s.contingent.location.y,
                },
                "params": {
                    "speed": s.params.linear_speed,
                    "angular_speed": s.params.angular_speed,
                    "turn_angle": s.params.turn_angle,
                    "max_travel": s.params.max_travel,
                },
            }
            for s in plan.steps
        ],
    }


def plan_from_dict(data: dict[str, Any]) -> Plan:
    steps = []
    for t in data["tasks"]:
        c, p = t["contingent"], t["params"]
        steps.append(
            PlanStep(
                state_id=int(t["state"]),
                kind=BehaviourKind(t["kind"]),
                params=TaskParams(p["speed"], p["angular_speed"], p["turn_angle"], p["max_travel"]),
                start_pose=_pose(t["start"]),
                contingent=Disturbance(DisturbanceKind(c["kind"]), Point2(c["x"], c["y"])),
                end_pose=_pose(t["end"]),
            )
        )
    return Plan(tuple(int(s) for s in data["states"]), tuple(steps), _pose(data["origin"]))


def save_plan(plan: Plan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=2) + "\n")


def load_plan(path: str | Path) -> Plan:
    return plan_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- cognitive map


def map_to_graph(cmap: CognitiveMap) -> nx.DiGraph:
    g = nx.DiGraph(goal_reached=cmap.goal_reached, budget_exhausted=cmap.budget_exhausted)
    for q in cmap.states:
        end = q.end_world
        g.add_node(
            q.id,
            label=q.label,
            kind=q.task.kind.value,
            phi=q.phi,
            gamma=q.gamma,
            chi=q.chi,
            interrupted=q.interrupted,
            x=end.x,
            y=end.y,
            theta=end.heading,
        )
    for edge in cmap.transitions:
        g.add_edge(*edge, guard=cmap.guard_flags[edge])
    return g


def write_map_graphml(cmap: CognitiveMap, path: str | Path) -> None:
    nx.write_graphml(map_to_graph(cmap), str(path))


def read_map_graphml(path: str | Path) -> nx.DiGraph:
    return nx.read_graphml(str(path), node_type=int)


# ---------------------------------------------------------------- structured text


def write_json(data: Any, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
