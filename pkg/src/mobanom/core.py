"""Trajectory data model, spherical geometry, validation, and JSONL (de)serialization.

Everything downstream (ingestion, simulation, injection, detectors, prompting,
evaluation) consumes the types defined here.  All operations are pure functions
over immutable values.

File formats
------------
``dataset.jsonl``
    One JSON object per line, one line per trajectory::

        {"agent_id": ..., "points": [{"arrive": ..., "depart": ..., "place_id": ...,
                                      "place_type": ..., "lat": ..., "lon": ...}, ...]}

    ``arrive``/``depart`` are integer UTC epoch seconds.  Dataset-level
    provenance (``meta``) is stored in a sidecar ``<name>.meta.json`` next to
    the JSONL file so the per-line schema stays pure while round trips stay
    lossless.

``labels.jsonl``
    One JSON object per line::

        {"agent_id": ..., "is_outlier": ..., "outlier_type": ..., "deviate_index": ...}
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

EARTH_RADIUS_KM = 6371.0

OUTLIER_TYPES = ("imposter", "hunger", "social", "work", "none")

#: Place categories used by the simulator and prompt rendering.  The type
#: vocabulary is open: ingestion may produce anything, with "Unknown" as the
#: catch-all bucket.
CANONICAL_PLACE_TYPES = (
    "Apartment",
    "Workplace",
    "Restaurant",
    "Pub",
    "Recreation",
    "Shop",
    "Unknown",
)


class MobanomError(Exception):
    """Base class for all library errors."""


class InvalidInputError(MobanomError):
    pass


class CorruptInputError(MobanomError):
    pass


class ConfigError(MobanomError):
    pass


class InjectionError(MobanomError):
    pass


class TrainingDivergedError(MobanomError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class ScoreParseError(MobanomError):
    """Raised when no anomaly score can be extracted from a model answer."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


class PartialParseError(ScoreParseError):
    """Multi-agent answer resolved only some agents."""

    def __init__(self, message: str, raw_text: str, resolved: dict, unresolved: list):
        super().__init__(message, raw_text)
        self.resolved = resolved
        self.unresolved = unresolved


class UndefinedMetricError(MobanomError):
    pass


class EndpointError(MobanomError):
    pass


class AuthError(EndpointError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    """WGS-ish latitude/longitude pair in decimal degrees."""

    lat: float
    lon: float

    def validate(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InvalidInputError(f"non-finite coordinates: ({self.lat}, {self.lon})")
        if not (-90.0 <= self.lat <= 90.0):
            raise InvalidInputError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise InvalidInputError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class StayPoint:
    """A contiguous dwell at one semantic place.

    ``arrive``/``depart`` are UTC epoch seconds with ``depart >= arrive``.
    """

    arrive: int
    depart: int
    place_id: str
    place_type: str
    location: GeoPoint


@dataclass
class Trajectory:
    """Time-ordered stay points of one agent."""

    agent_id: str
    points: list[StayPoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class Dataset:
    trajectories: list[Trajectory] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def agent_ids(self) -> list[str]:
        return [t.agent_id for t in self.trajectories]

    def by_agent(self) -> dict[str, Trajectory]:
        return {t.agent_id: t for t in self.trajectories}


@dataclass(frozen=True)
class LabelEntry:
    is_outlier: bool
    outlier_type: str = "none"
    deviate_index: int | None = None


@dataclass
class LabelSet:
    """Ground-truth outlier flags keyed by agent id."""

    entries: dict[str, LabelEntry] = field(default_factory=dict)

    def outlier_ids(self) -> list[str]:
        return [a for a, e in self.entries.items() if e.is_outlier]

    def n_outliers(self) -> int:
        return len(self.outlier_ids())


def params_hash(params) -> str:
    """Stable short hash of a JSON-serializable parameter mapping."""
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in kilometers (mean Earth radius 6371.0 km)."""
    a.validate()
    b.validate()
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return EARTH_RADIUS_KM * 2.0 * math.asin(min(1.0, math.sqrt(h)))


def latlon_to_unit3(p: GeoPoint) -> tuple[float, float, float]:
    """Map lat/lon to a 3D unit vector (x toward 0N0E, z toward the north pole)."""
    p.validate()
    lat = math.radians(p.lat)
    lon = math.radians(p.lon)
    return (
        math.cos(lat) * math.cos(lon),
        math.cos(lat) * math.sin(lon),
        math.sin(lat),
    )


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str
    message: str


def validate_trajectory(t: Trajectory) -> list[Violation]:
    """Return every invariant violation in ``t`` (empty list means ok).

    Checked per point: finite in-range coordinates, ``depart >= arrive``,
    strictly increasing arrivals, and no overlap with the previous stay
    (``arrive >= previous depart``).
    """
    violations = []
    prev: StayPoint | None = None
    for i, sp in enumerate(t.points):
        try:
            sp.location.validate()
        except InvalidInputError as exc:
            violations.append(Violation(i, "geo", str(exc)))
        if sp.depart < sp.arrive:
            violations.append(Violation(i, "negative_stay", f"depart {sp.depart} < arrive {sp.arrive}"))
        if prev is not None:
            if sp.arrive <= prev.arrive:
                violations.append(
                    Violation(i, "non_monotonic", f"arrive {sp.arrive} <= previous arrive {prev.arrive}")
                )
            if sp.arrive < prev.depart:
                violations.append(
                    Violation(i, "overlap", f"arrive {sp.arrive} < previous depart {prev.depart}")
                )
        prev = sp
    return violations


def total_travel_distance(t: Trajectory, interval: tuple[int, int] | None = None) -> float:
    """Sum of consecutive great-circle hops over ``points[start:stop]``.

    ``interval`` is a half-open index range; empty or singleton ranges
    contribute 0.
    """
    pts = t.points if interval is None else t.points[interval[0] : interval[1]]
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        total += haversine_km(a.location, b.location)
    return total


# ---------------------------------------------------------------------------
# Canonical JSONL (de)serialization.
#
# Encoding is canonical so byte-level reproducibility holds: fixed key order,
# compact separators, one "\n"-terminated line per record.
# ---------------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True)


def trajectory_to_json(t: Trajectory) -> str:
    points = [
        {
            "arrive": sp.arrive,
            "depart": sp.depart,
            "place_id": sp.place_id,
            "place_type": sp.place_type,
            "lat": sp.location.lat,
            "lon": sp.location.lon,
        }
        for sp in t.points
    ]
    return _dumps({"agent_id": t.agent_id, "points": points})


def trajectory_from_json(line: str) -> Trajectory:
    obj = json.loads(line)
    points = []
    for p in obj["points"]:
        arrive = int(p["arrive"])
        # absent depart means a zero-duration stay
        depart = arrive if p.get("depart") is None else int(p["depart"])
        points.append(
            StayPoint(
                arrive=arrive,
                depart=depart,
                place_id=str(p["place_id"]),
                place_type=str(p["place_type"]),
                location=GeoPoint(float(p["lat"]), float(p["lon"])),
            )
        )
    return Trajectory(agent_id=str(obj["agent_id"]), points=points)


def _meta_path(path: str) -> str:
    base, _ = os.path.splitext(path)
    return base + ".meta.json"


def write_dataset(ds: Dataset, path: str) -> None:
    """Write ``dataset.jsonl`` plus its ``.meta.json`` sidecar."""
    seen = set()
    for t in ds.trajectories:
        if t.agent_id in seen:
            raise InvalidInputError(f"duplicate agent_id {t.agent_id!r}")
        seen.add(t.agent_id)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for t in ds.trajectories:
            fh.write(trajectory_to_json(t) + "\n")
    with open(_meta_path(path), "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(ds.meta, sort_keys=True, separators=(",", ":")) + "\n")


def read_dataset(path: str) -> Dataset:
    trajectories = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                trajectories.append(trajectory_from_json(line))
    meta: dict = {}
    mpath = _meta_path(path)
    if os.path.exists(mpath):
        with open(mpath, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    return Dataset(trajectories=trajectories, meta=meta)


def label_to_json(agent_id: str, e: LabelEntry) -> str:
    return _dumps(
        {
            "agent_id": agent_id,
            "is_outlier": e.is_outlier,
            "outlier_type": e.outlier_type,
            "deviate_index": e.deviate_index,
        }
    )


def write_labels(labels: LabelSet, path: str) -> None:
    for agent_id, e in labels.entries.items():
        if e.is_outlier and e.deviate_index is None:
            raise InvalidInputError(f"outlier {agent_id!r} lacks deviate_index")
        if not e.is_outlier and e.deviate_index is not None:
            raise InvalidInputError(f"non-outlier {agent_id!r} carries deviate_index")
        if e.outlier_type not in OUTLIER_TYPES:
            raise InvalidInputError(f"unknown outlier_type {e.outlier_type!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for agent_id, e in labels.entries.items():
            fh.write(label_to_json(agent_id, e) + "\n")


def read_labels(path: str) -> LabelSet:
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            entries[str(obj["agent_id"])] = LabelEntry(
                is_outlier=bool(obj["is_outlier"]),
                outlier_type=str(obj["outlier_type"]),
                deviate_index=None if obj.get("deviate_index") is None else int(obj["deviate_index"]),
            )
    return LabelSet(entries=entries)
