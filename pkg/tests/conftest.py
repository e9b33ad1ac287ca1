import json
import os

import pytest

from mobanom.core import GeoPoint, StayPoint, Trajectory

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def golden_path(*parts: str) -> str:
    return os.path.join(GOLDEN_DIR, *parts)


def read_golden(*parts: str) -> str:
    with open(golden_path(*parts), "r", encoding="utf-8", newline="") as fh:
        return fh.read()


@pytest.fixture
def fixture_trajectory() -> Trajectory:
    with open(golden_path("fixture_trajectory.json"), "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    points = [
        StayPoint(p["arrive"], p["depart"], p["place_id"], p["place_type"], GeoPoint(p["lat"], p["lon"]))
        for p in obj["points"]
    ]
    return Trajectory(obj["agent_id"], points)
