"""Command-line entry point: ``clbplan {plan,run,baseline,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import artifacts
from .configurator import PlannerConfig
from .core_sim import EngineConfig
from .executor import (
    DEFAULT_ACTUATION_NOISE,
    BaselineParams,
    execute_plan,
    plan_scenario,
    planner_config_for,
    reactive_baseline,
    run_benchmark,
)
from .tasks import TaskParams
from .world import Scenario, ScenarioError, load_scenario

log = logging.getLogger("clbplan")

EXIT_OK, EXIT_INPUT, EXIT_NO_PLAN = 0, 1, 2

CONFIG_KEYS = {
    "speed",
    "angular_speed",
    "turn_angle",
    "max_travel",
    "time_step",
    "inflation",
    "goal_radius",
    "chi_sign",
    "max_expansions",
    "clearance",
}


class InputError(Exception):
    pass


def bundled_scenarios() -> list[str]:
    root = resources.files("clbplan") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario(name: str) -> Scenario:
    path = Path(name)
    if not path.exists():
        bundled = resources.files("clbplan") / "scenarios" / f"{name}.json"
        if not bundled.is_file():
            raise InputError(f"scenario not found: {name}")
        path = Path(str(bundled))
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        raise InputError(f"{path}: {exc}") from None


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    """Merge config-file keys with command-line flags (flags win)."""
    merged: dict[str, Any] = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"config file: {exc}") from None
        if not isinstance(data, dict):
            raise InputError("config file must hold a JSON object")
        for key in data:
            if key not in CONFIG_KEYS:
                raise InputError(f"unknown config key '{key}'")
        merged.update(data)
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _planner_overrides(settings: dict[str, Any]) -> dict[str, Any]:
    d = TaskParams()
    e = EngineConfig()
    try:
        params = TaskParams(
            linear_speed=float(settings.get("speed", d.linear_speed)),
            angular_speed=float(settings.get("angular_speed", d.angular_speed)),
            turn_angle=float(settings.get("turn_angle", d.turn_angle)),
            max_travel=float(settings.get("max_travel", d.max_travel)),
        )
        engine = EngineConfig(
            time_step=float(settings.get("time_step", e.time_step)),
            collision_inflation=float(settings.get("inflation", e.collision_inflation)),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    out: dict[str, Any] = {"params": params, "engine": engine}
    for key in ("goal_radius", "chi_sign", "max_expansions", "clearance"):
        if key in settings:
            out[key] = settings[key]
    return out


def _config_for(scenario: Scenario, settings: dict[str, Any]) -> PlannerConfig:
    try:
        return planner_config_for(scenario, **_planner_overrides(settings))
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None


def _config_used(args: argparse.Namespace, cfg: PlannerConfig, extra: dict[str, Any] | None = None) -> dict[str, Any]:
    used = {
        "command": args.command,
        "scenario": args.scenario,
        "seed": args.seed,
        "planner": {
            "goal": [cfg.goal.location.x, cfg.goal.location.y],
            "goal_radius": cfg.goal_radius,
            "norm_length": cfg.norm_length,
            "max_expansions": cfg.max_expansions,
            "chi_sign": cfg.chi_sign,
            "clearance": cfg.clearance,
            "footprint": asdict(cfg.footprint),
        },
        "task_params": asdict(cfg.params),
        "engine": asdict(cfg.engine),
    }
    used.update(extra or {})
    return used


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory: {exc}") from None
    return out


def _noise(args: argparse.Namespace) -> tuple[float, float]:
    return tuple(args.noise) if args.noise is not None else (0.0, 0.0)


def cmd_plan(args: argparse.Namespace) -> int:
    scenario = resolve_scenario(args.scenario)
    cfg = _config_for(scenario, _settings(args))
    out = _out_dir(args)
    outcome = plan_scenario(scenario, cfg, rng=args.seed)
    artifacts.write_json(_config_used(args, cfg), out / "config_used.json")
    stats = {
        "states_explored": len(outcome.cmap) if outcome.cmap else 0,
        "wall_time_s": outcome.wall_time,
        "goal_reached": bool(outcome.cmap and outcome.cmap.goal_reached),
        "plan_found": outcome.plan is not None,
    }
    if outcome.cmap is not None:
        artifacts.write_map_graphml(outcome.cmap, out / "map.graphml")
    artifacts.write_json(stats, out / "plan_stats.json")
    print(f"states_explored={stats['states_explored']} wall_time={stats['wall_time_s']:.4f}s plan_found={stats['plan_found']}")
    if outcome.plan is None:
        print(f"no viable plan ({outcome.error})", file=sys.stderr)
        return EXIT_NO_PLAN
    artifacts.save_plan(outcome.plan, out / "plan.json")
    print("plan: " + " -> ".join(s.kind.value for s in outcome.plan.steps[1:]))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    scenario = resolve_scenario(args.scenario)
    cfg = _config_for(scenario, _settings(args))
    out = _out_dir(args)
    if args.plan:
        try:
            plan = artifacts.load_plan(args.plan)
        except (OSError, KeyError, ValueError) as exc:
            raise InputError(f"plan file: {exc}") from None
        wall, states = None, 0
    else:
        outcome = plan_scenario(scenario, cfg, rng=args.seed)
        if outcome.plan is None:
            print(f"no viable plan ({outcome.error})", file=sys.stderr)
            return EXIT_NO_PLAN
        plan, wall, states = outcome.plan, outcome.wall_time, len(outcome.cmap)
        artifacts.save_plan(plan, out / "plan.json")
    noise = _noise(args)
    trace = execute_plan(scenario, plan, noise, args.seed, cfg.engine.time_step, cfg.goal_radius)
    trace.wall_time_planning, trace.states_explored = wall, states
    artifacts.write_trace_csv(trace, out / "trace.csv")
    summary = {
        "goal_reached": trace.goal_reached,
        "collisions": len(trace.collisions),
        "final_pose": [trace.final_pose.x, trace.final_pose.y, trace.final_pose.heading],
        "states_explored": states,
    }
    artifacts.write_json(summary, out / "run_summary.json")
    artifacts.write_json(_config_used(args, cfg, {"actuation_noise_sd": list(noise)}), out / "config_used.json")
    print(f"goal_reached={trace.goal_reached} collisions={len(trace.collisions)}")
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    scenario = resolve_scenario(args.scenario)
    cfg = _config_for(scenario, _settings(args))
    out = _out_dir(args)
    params = BaselineParams(
        linear_speed=cfg.params.linear_speed,
        angular_speed=cfg.params.angular_speed,
        time_step=cfg.engine.time_step,
        goal_radius=cfg.goal_radius,
    )
    noise = _noise(args)
    trace = reactive_baseline(scenario, params, noise, args.seed)
    artifacts.write_trace_csv(trace, out / "baseline_trace.csv")
    summary = {"goal_reached": trace.goal_reached, "collisions": len(trace.collisions), "duration_s": trace.times[-1]}
    artifacts.write_json(summary, out / "baseline_summary.json")
    artifacts.write_json(
        _config_used(args, cfg, {"baseline": asdict(params), "actuation_noise_sd": list(noise)}),
        out / "config_used.json",
    )
    print(f"goal_reached={trace.goal_reached} collisions={len(trace.collisions)}")
    return EXIT_OK


def format_bench_table(summary: dict[str, Any], timing: dict[str, float]) -> str:
    p, r, n = summary["planning"], summary["reactive"], summary["runs"]
    rows = [
        ("condition", "goal reached", "runs w/ collision", "collisions"),
        ("planning", f"{p['goal_reached']}/{n}", f"{p['collision_runs']}/{n}", str(p["collisions_total"])),
        ("reactive", f"{r['goal_reached']}/{n}", f"{r['collision_runs']}/{n}", str(r["collisions_total"])),
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    lines.append(
        f"planning time {timing['planning_time_mean_s']:.3f} +/- {timing['planning_time_sd_s']:.3f} s, "
        f"states {p['states_mean']:.1f} +/- {p['states_sd']:.2f}"
    )
    return "\n".join(lines)


def cmd_bench(args: argparse.Namespace) -> int:
    scenario = resolve_scenario(args.scenario)
    settings = _settings(args)
    cfg = _config_for(scenario, settings)
    out = _out_dir(args)
    noise = tuple(args.noise) if args.noise is not None else DEFAULT_ACTUATION_NOISE
    result = run_benchmark(
        scenario,
        n_runs=args.runs,
        seed=args.seed,
        jitter_sd=args.jitter,
        actuation_noise=noise,
        lidar_noise_sd=args.lidar_noise,
        cfg_overrides=_planner_overrides(settings),
    )
    summary, timing = result.summary(), result.timing()
    artifacts.write_json(summary, out / "summary.json")
    artifacts.write_json(timing, out / "timing.json")
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for i, (pt, bt) in enumerate(zip(result.plan_traces, result.baseline_traces)):
        if pt is not None:
            artifacts.write_trace_csv(pt, traces / f"planning_{i:03d}.csv")
        artifacts.write_trace_csv(bt, traces / f"reactive_{i:03d}.csv")
    artifacts.write_json(
        _config_used(args, cfg, {"runs": args.runs, "jitter_sd": args.jitter, "actuation_noise_sd": list(noise)}),
        out / "config_used.json",
    )
    print(format_bench_table(summary, timing))
    return EXIT_OK


def _positive(text: str) -> float:
    val = float(text)
    if not val > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return val


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors: exit 1, keeping 2 for "no viable plan"."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument(
        "--scenario", required=True, help="scenario JSON file, or a bundled name: " + ", ".join(bundled_scenarios())
    )
    common.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    common.add_argument("--seed", type=int, default=0, help="master RNG seed (default: %(default)s)")
    common.add_argument("--config", help="JSON file with keys: " + ", ".join(sorted(CONFIG_KEYS)))
    common.add_argument("--speed", type=_positive, help="straight-task speed, m/s (default 0.2)")
    common.add_argument("--angular-speed", dest="angular_speed", type=_positive, help="turn rate, rad/s (default 1.0)")
    common.add_argument("--turn-angle", dest="turn_angle", type=_positive, help=f"turn angle, rad (default {math.pi / 4:.4f})")
    common.add_argument("--max-travel", dest="max_travel", type=float, help="straight-task travel cap, m (default 2.0)")
    common.add_argument("--time-step", dest="time_step", type=_positive, help="simulation step, s (default 0.05)")
    common.add_argument("--inflation", type=float, help="collision inflation of the internal model, m (default 0)")
    common.add_argument("--clearance", type=float, help="corridor clearance for scan filtering, m (default 0.05)")
    common.add_argument("--goal-radius", dest="goal_radius", type=_positive, help="goal-reached radius, m (default 0.05)")
    common.add_argument("--max-expansions", dest="max_expansions", type=int, help="expansion budget (default 1000)")
    common.add_argument(
        "--chi-sign",
        dest="chi_sign",
        choices=["positive", "paper-negative"],
        help="heuristic sign convention (default positive)",
    )
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="clbplan", description="Closed-loop behaviour planner")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("plan", parents=[common], help="build the cognitive map and extract a plan")
    run = sub.add_parser("run", parents=[common], help="plan (or load a plan) and execute it")
    run.add_argument("--plan", help="plan JSON file to execute instead of planning")
    run.add_argument("--noise", type=float, nargs=2, metavar=("LIN", "ANG"), help="actuation noise sd (default 0 0)")
    base = sub.add_parser("baseline", parents=[common], help="run the reactive single-loop controller")
    base.add_argument("--noise", type=float, nargs=2, metavar=("LIN", "ANG"), help="actuation noise sd (default 0 0)")
    bench = sub.add_parser("bench", parents=[common], help="repeat both conditions on jittered scenarios")
    bench.add_argument("--runs", type=int, default=10, help="runs per condition (default: %(default)s)")
    bench.add_argument("--jitter", type=float, default=0.01, help="obstacle placement jitter sd, m (default: %(default)s)")
    bench.add_argument(
        "--noise",
        type=float,
        nargs=2,
        metavar=("LIN", "ANG"),
        help=f"actuation noise sd (default {DEFAULT_ACTUATION_NOISE[0]} {DEFAULT_ACTUATION_NOISE[1]})",
    )
    bench.add_argument("--lidar-noise", dest="lidar_noise", type=float, help="override LiDAR range noise sd, m")
    return parser


COMMANDS = {"plan": cmd_plan, "run": cmd_run, "baseline": cmd_baseline, "bench": cmd_bench}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "runs", 1) < 1:
        print("error: --runs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
