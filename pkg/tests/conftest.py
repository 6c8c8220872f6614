import math
from pathlib import Path

import pytest

from clbplan.world import Footprint, LidarModel, Obstacle, Point2, Pose, Scenario, load_scenario

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "src" / "clbplan" / "scenarios"

# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def overtaking() -> Scenario:
    return load_scenario(SCENARIO_DIR / "overtaking.json")


@pytest.fixture
def open_world() -> Scenario:
    return load_scenario(SCENARIO_DIR / "open.json")


@pytest.fixture
def enclosed() -> Scenario:
    return load_scenario(SCENARIO_DIR / "enclosed.json")


def make_scenario(obstacles=(), goal=(1.0, 0.0), beams=360, start=Pose(0.0, 0.0, 0.0)) -> Scenario:
    return Scenario(
        robot_start=start,
        footprint=Footprint(0.075, 0.1),
        goal=Point2(*goal),
        obstacles=tuple(obstacles),
        lidar=LidarModel(beam_count=beams, max_range=4.0, angular_span=2 * math.pi),
    )


def wall(cx: float, cy: float, half_x: float, half_y: float) -> Obstacle:
    return Obstacle.box(cx, cy, half_x, half_y)
