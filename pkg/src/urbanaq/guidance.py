"""Health advisories and pollution-aware route planning on the fused grid.

Advisory levels follow the six AQI bands (0-50, 51-100, 101-150,
151-200, 201-300, >300); respiratory and cardiac profiles are shifted
one band toward severe.  Routes run on a uniform-depth cell lattice with
4-adjacency; each leg costs its geodesic length inflated by the mean AQI
of its endpoint cells, so cleaner detours win once they are short enough.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NoRoute, ValidationError
from .grid import BoundingBox, cell_center, haversine_m, quadkey_for
from .model import GeoPoint, MaqiRecord, TimeSlot


class ProfileKind(Enum):
    GENERAL = "general"
    RESPIRATORY = "respiratory"
    CARDIAC = "cardiac"

    @classmethod
    def parse(cls, text: str) -> "ProfileKind":
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ValidationError(f"unknown profile: {text!r}") from None


@dataclass(frozen=True)
class UserProfile:
    kind: ProfileKind = ProfileKind.GENERAL
    indoor: bool = False


class AdvisoryLevel(IntEnum):
    EXCELLENT = 1
    GOOD = 2
    LIGHTLY_POLLUTED = 3
    MODERATELY_POLLUTED = 4
    HEAVILY_POLLUTED = 5
    SEVERELY_POLLUTED = 6


_BAND_UPPER = (50, 100, 150, 200, 300)

_MESSAGE_KEYS = {
    AdvisoryLevel.EXCELLENT: "air-excellent",
    AdvisoryLevel.GOOD: "air-good",
    AdvisoryLevel.LIGHTLY_POLLUTED: "outdoor-caution",
    AdvisoryLevel.MODERATELY_POLLUTED: "outdoor-reduce",
    AdvisoryLevel.HEAVILY_POLLUTED: "outdoor-avoid",
    AdvisoryLevel.SEVERELY_POLLUTED: "stay-indoors",
}

SLEEP_MESSAGE_KEY = "sleep-ventilation"


def band_for_aqi(aqi: int) -> AdvisoryLevel:
    if aqi < 0:
        raise ValidationError(f"aqi must be non-negative, got {aqi}")
    for band, upper in enumerate(_BAND_UPPER, start=1):
        if aqi <= upper:
            return AdvisoryLevel(band)
    return AdvisoryLevel.SEVERELY_POLLUTED


@dataclass(frozen=True)
class Advisory:
    level: AdvisoryLevel
    message_key: str
    aqi: int
    cell: str | None = None
    slot: TimeSlot | None = None


def advisory_for(
    aqi: int,
    profile: UserProfile,
    cell: str | None = None,
    slot: TimeSlot | None = None,
) -> Advisory:
    """Advisory band for an AQI, shifted one band up for sensitive profiles."""
    level = band_for_aqi(aqi)
    if profile.kind in (ProfileKind.RESPIRATORY, ProfileKind.CARDIAC):
        level = AdvisoryLevel(min(int(level) + 1, int(AdvisoryLevel.SEVERELY_POLLUTED)))
    return Advisory(level=level, message_key=_MESSAGE_KEYS[level], aqi=aqi, cell=cell, slot=slot)


def load_message_catalog(path: str | Path | None = None) -> dict[str, str]:
    """Message catalog: one ``key=text`` per line, ``#`` comments allowed."""
    if path is None:
        text = resources.files("urbanaq").joinpath("data/advisory_messages.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    catalog: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, message = line.partition("=")
        catalog[key.strip()] = message.strip()
    return catalog


def sleep_advisory(
    night_mean_aqi: float,
    profile: UserProfile,
    slot: TimeSlot | None = None,
) -> Advisory | None:
    """Overnight ventilation warning for indoor users above the Good band."""
    if not profile.indoor:
        return None
    level = band_for_aqi(round(night_mean_aqi))
    if level <= AdvisoryLevel.GOOD:
        return None
    return Advisory(level=level, message_key=SLEEP_MESSAGE_KEY, aqi=round(night_mean_aqi), slot=slot)


@dataclass(frozen=True)
class SleepCorrelationReport:
    """Descriptive association between nightly mean AQI and sleep scores."""

    nights: int
    pearson_r: float | None
    mean_aqi: float
    mean_score: float


def sleep_correlation_report(
    nightly_mean_aqi: Sequence[float], sleep_scores: Sequence[float]
) -> SleepCorrelationReport:
    if len(nightly_mean_aqi) != len(sleep_scores):
        raise ValidationError("need one sleep score per night of AQI data")
    n = len(nightly_mean_aqi)
    if n == 0:
        return SleepCorrelationReport(0, None, math.nan, math.nan)
    aqi = np.asarray(nightly_mean_aqi, dtype=float)
    scores = np.asarray(sleep_scores, dtype=float)
    r: float | None = None
    if n >= 2 and aqi.std() > 0 and scores.std() > 0:
        r = float(np.corrcoef(aqi, scores)[0, 1])
    return SleepCorrelationReport(n, r, float(aqi.mean()), float(scores.mean()))


# --- route planning -------------------------------------------------------

@dataclass(frozen=True)
class RouteQuery:
    start: GeoPoint
    goal: GeoPoint
    slot: TimeSlot | None = None
    alpha: float = 0.0
    avoid: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValidationError(f"exposure aversion must be >= 0, got {self.alpha}")
        object.__setattr__(self, "avoid", frozenset(self.avoid))


@dataclass(frozen=True)
class Route:
    """Ordered 4-adjacent cell path with its length and exposure score."""

    cells: tuple[str, ...]
    distance_m: float
    exposure: float


def _xy_of(quadkey: str) -> tuple[int, int]:
    x = y = 0
    for digit in quadkey:
        d = int(digit)
        x = (x << 1) | (d & 1)
        y = (y << 1) | (d >> 1)
    return x, y


def _quadkey_of(x: int, y: int, depth: int) -> str:
    digits = []
    for level in range(depth - 1, -1, -1):
        ix = (x >> level) & 1
        iy = (y >> level) & 1
        digits.append(str(2 * iy + ix))
    return "".join(digits)


def _exposure_rate(aqi_a: int, aqi_b: int) -> float:
    return max(0.0, (aqi_a + aqi_b) / 2 - 50.0) / 100.0

_COST_TOLERANCE_M = 1e-6


def plan_route(
    records: Iterable[MaqiRecord],
    query: RouteQuery,
    bbox: BoundingBox,
    depth: int = 8,
) -> Route:
    """Minimum-cost 4-neighbor path from start to goal over one slot's cells.

    Leg cost is geodesic cell-center distance times
    ``1 + alpha * max(0, mean(AQI) - 50) / 100``; cells without a record
    count as AQI 0 with no samples, avoid-zone cells are impassable.
    Among minimum-cost paths the lexicographically smallest quadkey
    sequence wins, which makes the result deterministic.
    """
    aqi_map: dict[tuple[int, int], int] = {}
    for record in records:
        if len(record.cell) != depth:
            raise ValidationError(f"record cell {record.cell!r} is not at depth {depth}")
        aqi_map[_xy_of(record.cell)] = record.aqi

    side = 1 << depth
    lon_step = bbox.width / side
    lat_step = bbox.height / side

    def center(x: int, y: int) -> GeoPoint:
        return GeoPoint(bbox.west + (x + 0.5) * lon_step, bbox.north - (y + 0.5) * lat_step)

    start_xy = _xy_of(quadkey_for(query.start, bbox, depth))
    goal_xy = _xy_of(quadkey_for(query.goal, bbox, depth))
    blocked = {_xy_of(q) for q in query.avoid}
    if start_xy in blocked or goal_xy in blocked:
        raise NoRoute("start or goal lies in an avoid-zone")
    if start_xy == goal_xy:
        return Route(cells=(_quadkey_of(*start_xy, depth),), distance_m=0.0, exposure=0.0)

    def neighbors(x: int, y: int):
        for nx, ny in ((x, y - 1), (x - 1, y), (x + 1, y), (x, y + 1)):
            if 0 <= nx < side and 0 <= ny < side and (nx, ny) not in blocked:
                yield nx, ny

    def leg(u: tuple[int, int], v: tuple[int, int]) -> tuple[float, float]:
        dist = haversine_m(center(*u), center(*v))
        rate = _exposure_rate(aqi_map.get(u, 0), aqi_map.get(v, 0))
        return dist * (1.0 + query.alpha * rate), dist

    dist: dict[tuple[int, int], float] = {start_xy: 0.0}
    settled: set[tuple[int, int]] = set()
    heap: list[tuple[float, tuple[int, int]]] = [(0.0, start_xy)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        for v in neighbors(*u):
            nd = d + leg(u, v)[0]
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))

    if goal_xy not in settled:
        raise NoRoute("avoid-zones disconnect the start from the goal")

    # Tight edges form a DAG over minimum-cost paths; walk it greedily by
    # quadkey, restricted to nodes that can still reach the goal.
    reaches_goal = {goal_xy}
    stack = [goal_xy]
    while stack:
        v = stack.pop()
        dv = dist[v]
        for u in neighbors(*v):
            if u in settled and u not in reaches_goal:
                if dist[u] + leg(u, v)[0] <= dv + _COST_TOLERANCE_M:
                    reaches_goal.add(u)
                    stack.append(u)

    path = [start_xy]
    total_distance = 0.0
    total_exposure = 0.0
    current = start_xy
    while current != goal_xy:
        options = []
        for v in neighbors(*current):
            if v in reaches_goal or v == goal_xy:
                cost, raw = leg(current, v)
                if dist[current] + cost <= dist[v] + _COST_TOLERANCE_M:
                    options.append((_quadkey_of(*v, depth), v, cost, raw))
        if not options:
            raise NoRoute("no tight edge toward the goal")  # defensive; cannot happen
        options.sort()
        _, current, cost, raw = options[0]
        total_distance += raw
        total_exposure += raw * _exposure_rate(
            aqi_map.get(path[-1], 0), aqi_map.get(current, 0)
        )
        path.append(current)

    return Route(
        cells=tuple(_quadkey_of(x, y, depth) for x, y in path),
        distance_m=total_distance,
        exposure=total_exposure,
    )
