"""Density-adaptive spatial gridding and per-cell sufficient statistics.

Cells are quadtree nodes identified by base-4 quadkeys (root = empty
string; children ordered NW, NE, SW, SE).  A cell owns its west and
south edges, except along the bounding box's east and north borders,
so every in-box point maps to exactly one cell at any depth.

Fusion works on sufficient statistics, (sum, count) per source class
and pollutant plus a per-class sample tally, so cells can be merged by
componentwise addition: coarsening a grid, or combining partial grids
computed on different edge nodes, never loses information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Iterator, Mapping

from .errors import OutOfBoundingBox, ValidationError
from .model import UTC, GeoPoint, PollutantKind, SensorSample, SourceClass, TimeSlot

EARTH_RADIUS_M = 6371000.0


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in meters."""
    lon1, lat1, lon2, lat2 = map(math.radians, (a.longitude, a.latitude, b.longitude, b.latitude))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class BoundingBox:
    west: float
    south: float
    east: float
    north: float

    def __post_init__(self) -> None:
        if not (-180.0 <= self.west < self.east <= 180.0):
            raise ValidationError(f"invalid longitude span [{self.west}, {self.east}]")
        if not (-90.0 <= self.south < self.north <= 90.0):
            raise ValidationError(f"invalid latitude span [{self.south}, {self.north}]")

    @property
    def width(self) -> float:
        return self.east - self.west

    @property
    def height(self) -> float:
        return self.north - self.south

    def contains(self, point: GeoPoint) -> bool:
        return self.west <= point.longitude <= self.east and self.south <= point.latitude <= self.north

    def intersects(self, other: "BoundingBox") -> bool:
        return not (
            other.east < self.west
            or other.west > self.east
            or other.north < self.south
            or other.south > self.north
        )

    def center(self) -> GeoPoint:
        return GeoPoint((self.west + self.east) / 2, (self.south + self.north) / 2)


#: Default coverage, sized to the city the sample coordinates fall in.
WUHAN_BBOX = BoundingBox(west=113.7, south=29.9, east=115.1, north=31.4)


def quadkey_for(point: GeoPoint, bbox: BoundingBox, depth: int) -> str:
    """Quadkey of the depth-``depth`` cell owning ``point``.

    Digits: 0 = NW, 1 = NE, 2 = SW, 3 = SE.  Points on a shared edge
    belong to the east/north neighbor, keeping the partition exact.
    """
    if not bbox.contains(point):
        raise OutOfBoundingBox(point.longitude, point.latitude)
    west, east, south, north = bbox.west, bbox.east, bbox.south, bbox.north
    digits = []
    for _ in range(depth):
        mid_lon = (west + east) / 2
        mid_lat = (south + north) / 2
        ix = 0 if point.longitude < mid_lon else 1
        iy = 0 if point.latitude >= mid_lat else 1
        digits.append(str(2 * iy + ix))
        west, east = (west, mid_lon) if ix == 0 else (mid_lon, east)
        south, north = (mid_lat, north) if iy == 0 else (south, mid_lat)
    return "".join(digits)


def cell_bounds(quadkey: str, bbox: BoundingBox) -> BoundingBox:
    west, east, south, north = bbox.west, bbox.east, bbox.south, bbox.north
    for digit in quadkey:
        mid_lon = (west + east) / 2
        mid_lat = (south + north) / 2
        d = int(digit)
        if d not in (0, 1, 2, 3):
            raise ValidationError(f"invalid quadkey digit {digit!r}")
        west, east = (west, mid_lon) if d in (0, 2) else (mid_lon, east)
        south, north = (mid_lat, north) if d in (0, 1) else (south, mid_lat)
    return BoundingBox(west=west, south=south, east=east, north=north)


def cell_center(quadkey: str, bbox: BoundingBox) -> GeoPoint:
    return cell_bounds(quadkey, bbox).center()


def cell_children(quadkey: str) -> tuple[str, str, str, str]:
    return (quadkey + "0", quadkey + "1", quadkey + "2", quadkey + "3")


class CellStats:
    """Mergeable sufficient statistics for one cell.

    Tracks the per-class sample tally and, per (class, pollutant), the
    running sum and count of present readings.
    """

    __slots__ = ("sample_counts", "sums", "counts")

    def __init__(self) -> None:
        self.sample_counts: dict[SourceClass, int] = {}
        self.sums: dict[SourceClass, dict[PollutantKind, float]] = {}
        self.counts: dict[SourceClass, dict[PollutantKind, int]] = {}

    def add(self, sample: SensorSample) -> None:
        cls = sample.source
        self.sample_counts[cls] = self.sample_counts.get(cls, 0) + 1
        sums = self.sums.setdefault(cls, {})
        counts = self.counts.setdefault(cls, {})
        for kind, value in sample.values.items():
            sums[kind] = sums.get(kind, 0.0) + value
            counts[kind] = counts.get(kind, 0) + 1

    def merge_in(self, other: "CellStats") -> None:
        for cls, n in other.sample_counts.items():
            self.sample_counts[cls] = self.sample_counts.get(cls, 0) + n
        for cls, sums in other.sums.items():
            mine = self.sums.setdefault(cls, {})
            for kind, total in sums.items():
                mine[kind] = mine.get(kind, 0.0) + total
        for cls, counts in other.counts.items():
            mine_c = self.counts.setdefault(cls, {})
            for kind, n in counts.items():
                mine_c[kind] = mine_c.get(kind, 0) + n

    def copy(self) -> "CellStats":
        dup = CellStats()
        dup.merge_in(self)
        return dup

    @property
    def total_samples(self) -> int:
        return sum(self.sample_counts.values())

    def count(self, cls: SourceClass, kind: PollutantKind) -> int:
        return self.counts.get(cls, {}).get(kind, 0)

    def mean(self, cls: SourceClass, kind: PollutantKind) -> float:
        return self.sums[cls][kind] / self.counts[cls][kind]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CellStats):
            return NotImplemented
        return (
            self.sample_counts == other.sample_counts
            and self.sums == other.sums
            and self.counts == other.counts
        )

    def __repr__(self) -> str:
        return f"CellStats(samples={dict(self.sample_counts)})"

    def to_obj(self) -> dict:
        """JSON-compatible encoding with deterministic key order."""
        return {
            "samples": {cls.value: self.sample_counts[cls] for cls in SourceClass if cls in self.sample_counts},
            "pollutants": {
                cls.value: {
                    kind.value: [self.sums[cls][kind], self.counts[cls][kind]]
                    for kind in PollutantKind
                    if kind in self.sums.get(cls, {})
                }
                for cls in SourceClass
                if cls in self.sums
            },
        }

    @classmethod
    def from_obj(cls, obj: Mapping) -> "CellStats":
        stats = cls()
        for name, n in obj.get("samples", {}).items():
            stats.sample_counts[SourceClass(name)] = int(n)
        for name, per_kind in obj.get("pollutants", {}).items():
            source = SourceClass(name)
            for kind_name, (total, n) in per_kind.items():
                kind = PollutantKind(kind_name)
                stats.sums.setdefault(source, {})[kind] = float(total)
                stats.counts.setdefault(source, {})[kind] = int(n)
        return stats


@dataclass(frozen=True)
class GridConfig:
    """Quadtree refinement parameters.

    A cell splits while it holds more than ``split_threshold`` samples,
    sits above ``max_depth`` and its shorter side exceeds
    ``min_cell_deg`` degrees.
    """

    bbox: BoundingBox = WUHAN_BBOX
    split_threshold: int = 64
    max_depth: int = 16
    min_cell_deg: float = 0.005

    def __post_init__(self) -> None:
        if self.split_threshold < 1 or self.max_depth < 1 or self.min_cell_deg <= 0:
            raise ValidationError("grid parameters must be positive")

    def cell_side(self, depth: int) -> float:
        return min(self.bbox.width, self.bbox.height) / (2**depth)


@dataclass
class Grid:
    """Leaf cells of one refined quadtree over one time slot.

    ``cells`` maps every leaf quadkey (including empty leaves created by
    a split) to its statistics; leaves tile the bounding box exactly.
    """

    bbox: BoundingBox
    config: GridConfig
    cells: dict[str, CellStats] = field(default_factory=dict)
    slot: TimeSlot | None = None

    @property
    def is_empty(self) -> bool:
        return not self.cells

    def leaf_for(self, point: GeoPoint) -> str | None:
        """Quadkey of the leaf owning ``point``, or None on an empty grid."""
        if not self.cells:
            return None
        deepest = quadkey_for(point, self.bbox, self.config.max_depth)
        for depth in range(self.config.max_depth + 1):
            prefix = deepest[:depth]
            if prefix in self.cells:
                return prefix
        return None

    def sorted_items(self) -> list[tuple[str, CellStats]]:
        return sorted(self.cells.items())


def assign_time_slot(timestamp: datetime, duration: timedelta = timedelta(hours=1)) -> TimeSlot:
    """The aligned half-open slot containing ``timestamp``."""
    if duration <= timedelta(0):
        raise ValidationError(f"slot duration must be positive, got {duration}")
    if timestamp.tzinfo is None:
        timestamp = timestamp.replace(tzinfo=UTC)
    seconds = int(duration.total_seconds())
    epoch = int(timestamp.timestamp())
    start = epoch - epoch % seconds
    return TimeSlot(datetime.fromtimestamp(start, tz=UTC), duration)


def partition_by_slot(
    samples: Iterable[SensorSample], duration: timedelta = timedelta(hours=1)
) -> dict[TimeSlot, list[SensorSample]]:
    """Group samples into their time slots, slots ordered by start."""
    groups: dict[TimeSlot, list[SensorSample]] = {}
    for sample in samples:
        groups.setdefault(assign_time_slot(sample.timestamp, duration), []).append(sample)
    return dict(sorted(groups.items(), key=lambda kv: kv[0].start))


def deep_stats_for(samples: Iterable[SensorSample], config: GridConfig) -> dict[str, CellStats]:
    """Accumulate samples into max-depth cells, in sample_id order.

    Sorting first makes the result (and every float in it) independent
    of the input ordering.
    """
    ordered = sorted(samples, key=lambda s: s.sample_id)
    deep: dict[str, CellStats] = {}
    for sample in ordered:
        quadkey = quadkey_for(sample.location, config.bbox, config.max_depth)
        deep.setdefault(quadkey, CellStats()).add(sample)
    return deep


def aggregate_grid(
    deep: Mapping[str, CellStats],
    config: GridConfig,
    slot: TimeSlot | None = None,
) -> Grid:
    """Refine max-depth statistics into a density-adaptive grid.

    The same routine serves direct fusion and remote re-integration of
    edge batches: both feed max-depth (sum, count) cells in here, so the
    two paths produce identical grids for identical totals.
    """
    grid = Grid(bbox=config.bbox, config=config, slot=slot)
    if not deep:
        return grid
    for quadkey in deep:
        if len(quadkey) != config.max_depth:
            raise ValidationError(f"expected depth-{config.max_depth} quadkey, got {quadkey!r}")

    def refine(prefix: str, keys: list[str]) -> None:
        depth = len(prefix)
        count = sum(deep[k].total_samples for k in keys)
        splittable = (
            count > config.split_threshold
            and depth < config.max_depth
            and config.cell_side(depth) > config.min_cell_deg
        )
        if not splittable:
            stats = CellStats()
            for key in sorted(keys):
                stats.merge_in(deep[key])
            grid.cells[prefix] = stats
            return
        by_digit: dict[str, list[str]] = {c: [] for c in "0123"}
        for key in keys:
            by_digit[key[depth]].append(key)
        for digit in "0123":
            refine(prefix + digit, by_digit[digit])

    refine("", list(deep))
    return grid


def build_adaptive_grid(
    samples: Iterable[SensorSample],
    config: GridConfig,
    slot: TimeSlot | None = None,
) -> Grid:
    """Build the density-adaptive grid for one slot's samples.

    An empty sample list yields an empty grid (no cells).
    """
    return aggregate_grid(deep_stats_for(samples, config), config, slot)
