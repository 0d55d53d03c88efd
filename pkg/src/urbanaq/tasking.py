"""Crowdsensing task assignment from mobility traces and data-quality credits.

The association matrix records, per resident and sensing point, the
empirical probability of a visit within a time slot over a trailing
window.  Task assignment greedily fills each sensing point with the
residents ranked by visit probability times credit, under a per-resident
quota.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyTrace, ValidationError
from .grid import BoundingBox, assign_time_slot, haversine_m, quadkey_for
from .model import GeoPoint, TimeSlot


@dataclass(frozen=True)
class TracePoint:
    timestamp: datetime
    location: GeoPoint
    speed: float
    acceleration: float = 0.0

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValidationError(f"speed must be non-negative, got {self.speed}")


@dataclass(frozen=True)
class MobilityTrace:
    """Ordered GPS/speed/acceleration readings of one resident."""

    resident_id: str
    points: tuple[TracePoint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        for prev, cur in zip(self.points, self.points[1:]):
            if cur.timestamp <= prev.timestamp:
                raise ValidationError(f"{self.resident_id}: trace timestamps must strictly increase")


@dataclass(frozen=True)
class CellScheme:
    """Fixed-depth cell addressing used for visits and sensing points."""

    bbox: BoundingBox
    depth: int = 8
    slot_duration: timedelta = timedelta(hours=1)

    def cell_of(self, point: GeoPoint) -> str:
        return quadkey_for(point, self.bbox, self.depth)


@dataclass(frozen=True)
class MobilityFeatures:
    resident_id: str
    mean_speed: float
    radius_of_gyration_m: float
    visited: Mapping[TimeSlot, frozenset[str]]
    visit_frequency: Mapping[str, float]


def extract_mobility_features(trace: MobilityTrace, scheme: CellScheme) -> MobilityFeatures:
    """Movement features over the full trace.

    The radius of gyration is the root-mean-square distance of the trace
    points from their centroid.
    """
    if not trace.points:
        raise EmptyTrace(trace.resident_id)
    lons = [p.location.longitude for p in trace.points]
    lats = [p.location.latitude for p in trace.points]
    centroid = GeoPoint(sum(lons) / len(lons), sum(lats) / len(lats))
    radius = math.sqrt(
        sum(haversine_m(p.location, centroid) ** 2 for p in trace.points) / len(trace.points)
    )
    mean_speed = sum(p.speed for p in trace.points) / len(trace.points)

    visited: dict[TimeSlot, set[str]] = {}
    cell_counts: dict[str, int] = {}
    for point in trace.points:
        cell = scheme.cell_of(point.location)
        slot = assign_time_slot(point.timestamp, scheme.slot_duration)
        visited.setdefault(slot, set()).add(cell)
        cell_counts[cell] = cell_counts.get(cell, 0) + 1
    total = sum(cell_counts.values())
    frequency = {cell: n / total for cell, n in sorted(cell_counts.items())}
    return MobilityFeatures(
        resident_id=trace.resident_id,
        mean_speed=mean_speed,
        radius_of_gyration_m=radius,
        visited={slot: frozenset(cells) for slot, cells in visited.items()},
        visit_frequency=frequency,
    )


@dataclass(frozen=True)
class AssociationMatrix:
    """Resident-by-sensing-point visit probabilities over a trailing window."""

    residents: tuple[str, ...]
    points: tuple[str, ...]
    probabilities: np.ndarray  # shape (len(residents), len(points)), entries in [0, 1]

    def entry(self, resident_id: str, point: str) -> float:
        try:
            r = self.residents.index(resident_id)
            p = self.points.index(point)
        except ValueError:
            return 0.0
        return float(self.probabilities[r, p])


def build_association_matrix(
    features: Sequence[MobilityFeatures],
    points: Sequence[str],
    window: int,
) -> AssociationMatrix:
    """Entry (r, p) = fraction of the window's slots in which r visited p.

    The window covers the most recent ``window`` distinct slots seen across
    all features; slots with no record count as no visit.
    """
    if window < 1:
        raise ValidationError(f"window must be >= 1, got {window}")
    all_slots = sorted({slot for f in features for slot in f.visited}, key=lambda s: s.start)
    window_slots = all_slots[-window:]
    residents = tuple(sorted({f.resident_id for f in features}))
    by_resident = {f.resident_id: f for f in features}
    matrix = np.zeros((len(residents), len(points)))
    for r, resident_id in enumerate(residents):
        visited = by_resident[resident_id].visited
        for p, point in enumerate(points):
            visits = sum(1 for slot in window_slots if point in visited.get(slot, frozenset()))
            matrix[r, p] = visits / window
    return AssociationMatrix(residents=residents, points=tuple(points), probabilities=matrix)


@dataclass(frozen=True)
class CreditScore:
    """Data-quality score; the composite drives task assignment."""

    resident_id: str
    accuracy: float
    timeliness: float
    correlativity: float
    integrity: float
    composite: float

    def __post_init__(self) -> None:
        for name in ("accuracy", "timeliness", "correlativity", "integrity", "composite"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        expected = (
            0.4 * self.accuracy
            + 0.2 * self.timeliness
            + 0.2 * self.correlativity
            + 0.2 * self.integrity
        )
        if abs(self.composite - expected) > 1e-9:
            raise ValidationError("composite does not match its components")

    @classmethod
    def from_components(
        cls, resident_id: str, accuracy: float, timeliness: float, correlativity: float, integrity: float
    ) -> "CreditScore":
        composite = 0.4 * accuracy + 0.2 * timeliness + 0.2 * correlativity + 0.2 * integrity
        return cls(resident_id, accuracy, timeliness, correlativity, integrity, composite)


NEUTRAL_CREDIT = 0.5

#: Timeliness decays as exp(-mean_latency / this many seconds).
TIMELINESS_SCALE_S = 300.0


@dataclass(frozen=True)
class SampleFeedback:
    """Quality evidence for one past contribution of a resident.

    ``reference`` is the co-located meteorological value used for the
    correlativity component; it defaults to the consensus value.
    ``scale`` normalizes the accuracy error and defaults to |consensus|.
    """

    value: float
    consensus: float
    latency_s: float = 0.0
    reference: float | None = None
    present_fields: int = 6
    total_fields: int = 6
    scale: float | None = None


def update_credit(resident_id: str, history: Sequence[SampleFeedback]) -> CreditScore:
    """Credit from a resident's contribution history.

    An empty history scores the neutral prior 0.5 on every component.
    Accuracy penalizes normalized error, timeliness decays exponentially
    with mean latency, correlativity is the (clamped) Pearson correlation
    against co-located reference values, integrity is the mean fraction
    of non-absent pollutant fields.
    """
    if not history:
        return CreditScore.from_components(
            resident_id, NEUTRAL_CREDIT, NEUTRAL_CREDIT, NEUTRAL_CREDIT, NEUTRAL_CREDIT
        )
    errors = []
    for fb in history:
        scale = fb.scale if fb.scale is not None else max(abs(fb.consensus), 1e-9)
        errors.append(abs(fb.value - fb.consensus) / scale)
    accuracy = max(0.0, 1.0 - sum(errors) / len(errors))
    mean_latency = sum(fb.latency_s for fb in history) / len(history)
    timeliness = math.exp(-mean_latency / TIMELINESS_SCALE_S)
    values = np.array([fb.value for fb in history], dtype=float)
    references = np.array(
        [fb.reference if fb.reference is not None else fb.consensus for fb in history], dtype=float
    )
    correlativity = 0.0
    if len(history) >= 2 and values.std() > 0 and references.std() > 0:
        correlativity = max(0.0, float(np.corrcoef(values, references)[0, 1]))
    integrity = sum(fb.present_fields / fb.total_fields for fb in history) / len(history)
    return CreditScore.from_components(
        resident_id, min(1.0, accuracy), min(1.0, timeliness), min(1.0, correlativity), min(1.0, integrity)
    )


@dataclass(frozen=True)
class TaskAssignment:
    """Sensing point -> chosen resident ids for one slot."""

    slot: TimeSlot | None
    assignments: Mapping[str, tuple[str, ...]]


def assign_tasks(
    matrix: AssociationMatrix,
    credits: Mapping[str, "CreditScore | float"],
    k: int,
    q: int,
    slot: TimeSlot | None = None,
) -> TaskAssignment:
    """Greedy assignment: points in quadkey order, candidates ranked by
    visit probability times composite credit (ties by resident id).

    A resident never exceeds ``q`` tasks; a point gets at most ``k``
    residents and only residents with a positive matrix entry.  Residents
    without a credit record rank with the neutral composite 0.5; a bare
    float stands in for a full :class:`CreditScore`.
    """
    if k < 1 or q < 1:
        raise ValidationError("k and q must be >= 1")
    load = {resident: 0 for resident in matrix.residents}
    chosen: dict[str, tuple[str, ...]] = {}
    for point in sorted(matrix.points):
        candidates = []
        for resident in matrix.residents:
            entry = matrix.entry(resident, point)
            if entry <= 0 or load[resident] >= q:
                continue
            credit = credits.get(resident, NEUTRAL_CREDIT)
            composite = credit.composite if isinstance(credit, CreditScore) else float(credit)
            candidates.append((-entry * composite, resident))
        candidates.sort()
        picked = tuple(resident for _, resident in candidates[:k])
        for resident in picked:
            load[resident] += 1
        chosen[point] = picked
    return TaskAssignment(slot=slot, assignments=chosen)
