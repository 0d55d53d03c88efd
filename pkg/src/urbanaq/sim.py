"""Synthetic scenario generation and fusion-quality evaluation.

Ground truth is a sum of Gaussian plumes over a background level, which
keeps the truth differentiable and lets evaluation compare fused cell
values against the exact field at the cell centroid.  Sample noise is
multiplicative Gaussian per source class with optional per-pollutant
dropout, seeded for reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .grid import BoundingBox, WUHAN_BBOX
from .model import (
    GeoPoint,
    MaqiRecord,
    PollutantKind,
    PollutantVector,
    SensorSample,
    SourceClass,
    TimeSlot,
    parse_timestamp,
)
from .tasking import MobilityTrace, TracePoint


@dataclass(frozen=True)
class GaussianPlume:
    center: GeoPoint
    amplitude: Mapping[PollutantKind, float]
    sigma_deg: float

    def __post_init__(self) -> None:
        if self.sigma_deg <= 0 or any(a < 0 for a in self.amplitude.values()):
            raise ValidationError("plume sigma must be positive and amplitudes non-negative")


@dataclass(frozen=True)
class SyntheticField:
    """Ground-truth pollution field: background plus Gaussian plumes."""

    plumes: tuple[GaussianPlume, ...] = ()
    background: Mapping[PollutantKind, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if any(v < 0 for v in self.background.values()):
            raise ValidationError("background levels must be non-negative")

    def value_at(self, point: GeoPoint) -> dict[PollutantKind, float]:
        values = {kind: level for kind, level in self.background.items()}
        for plume in self.plumes:
            d2 = (point.longitude - plume.center.longitude) ** 2 + (
                point.latitude - plume.center.latitude
            ) ** 2
            gain = math.exp(-d2 / (2.0 * plume.sigma_deg**2))
            for kind, amplitude in plume.amplitude.items():
                values[kind] = values.get(kind, 0.0) + amplitude * gain
        return values

    @property
    def kinds(self) -> tuple[PollutantKind, ...]:
        present = set(self.background)
        for plume in self.plumes:
            present.update(plume.amplitude)
        return tuple(kind for kind in PollutantKind if kind in present)


#: Class noise encodes the accuracy ordering: stations best, phones worst.
DEFAULT_SIGMA = {
    SourceClass.CROWDSOURCED: 0.30,
    SourceClass.IOT_SENSING: 0.15,
    SourceClass.METEOROLOGICAL: 0.05,
}


@dataclass(frozen=True)
class NoiseModel:
    sigma: Mapping[SourceClass, float] = field(default_factory=lambda: dict(DEFAULT_SIGMA))
    dropout: Mapping[SourceClass, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(s < 0 for s in self.sigma.values()):
            raise ValidationError("noise sigmas must be non-negative")
        if any(not 0 <= p <= 1 for p in self.dropout.values()):
            raise ValidationError("dropout probabilities must lie in [0, 1]")


def generate_samples(
    fieldspec: SyntheticField,
    noise: NoiseModel,
    counts: Mapping[SourceClass, int],
    slot: TimeSlot,
    seed: int,
    bbox: BoundingBox = WUHAN_BBOX,
) -> list[SensorSample]:
    """Noisy samples drawn uniformly over the bounding box, one RNG per seed.

    Sample values are the field value at the location scaled by
    ``1 + N(0, sigma_class)`` and clamped at zero; dropout nulls single
    pollutants (re-drawn if a sample would end up empty).
    """
    rng = np.random.default_rng(seed)
    slot_seconds = int(slot.duration.total_seconds())
    samples: list[SensorSample] = []
    kinds = fieldspec.kinds
    if not kinds and any(counts.values()):
        raise ValidationError("field defines no pollutants to sample")
    for cls in SourceClass:
        n = int(counts.get(cls, 0))
        if n < 0:
            raise ValidationError(f"counts must be non-negative, got {n} for {cls.value}")
        sigma = float(noise.sigma.get(cls, 0.0))
        p_drop = float(noise.dropout.get(cls, 0.0))
        if p_drop >= 1.0 and n > 0:
            raise ValidationError("dropout must be < 1 to generate non-empty samples")
        for i in range(n):
            lon = float(rng.uniform(bbox.west, bbox.east))
            lat = float(rng.uniform(bbox.south, bbox.north))
            location = GeoPoint(lon, lat)
            offset = int(rng.integers(0, slot_seconds))
            truth = fieldspec.value_at(location)
            while True:
                kept = [kind for kind in kinds if p_drop == 0.0 or rng.random() >= p_drop]
                if kept:
                    break
            values: dict[str, float] = {}
            for kind in kept:
                noisy = truth[kind] * (1.0 + (float(rng.normal(0.0, sigma)) if sigma > 0 else 0.0))
                values[kind.value] = max(0.0, noisy)
            samples.append(
                SensorSample(
                    sample_id=f"sim-{seed}-{cls.value}-{i:05d}",
                    location=location,
                    timestamp=slot.start + timedelta(seconds=offset),
                    source=cls,
                    values=PollutantVector(**values),
                )
            )
    return samples


@dataclass(frozen=True)
class FusionMetrics:
    """Per-pollutant RMSE against the field at cell centroids, plus coverage."""

    rmse: Mapping[PollutantKind, float]
    coverage: float
    cells: int


def evaluate_fusion(
    records: Sequence[MaqiRecord],
    fieldspec: SyntheticField,
    total_cells: int | None = None,
) -> FusionMetrics:
    """Compare fused records to the ground-truth field.

    ``total_cells`` is the grid's full leaf count; when omitted, coverage
    is 1.0 for any non-empty record list and 0.0 otherwise.
    """
    errors: dict[PollutantKind, list[float]] = {}
    for record in records:
        truth = fieldspec.value_at(record.centroid)
        for kind, fused in record.values.items():
            errors.setdefault(kind, []).append((fused - truth.get(kind, 0.0)) ** 2)
    rmse = {kind: math.sqrt(sum(sq) / len(sq)) for kind, sq in errors.items()}
    if total_cells is not None and total_cells > 0:
        coverage = len(records) / total_cells
    else:
        coverage = 1.0 if records else 0.0
    return FusionMetrics(rmse=rmse, coverage=coverage, cells=len(records))


@dataclass(frozen=True)
class MobilityConfig:
    bbox: BoundingBox = WUHAN_BBOX
    n_points: int = 60
    tick_s: int = 60
    speed_min: float = 1.0
    speed_max: float = 2.0
    start_iso: str = "2017-05-15T08:00:00Z"

    def __post_init__(self) -> None:
        if self.n_points < 1 or self.tick_s < 1:
            raise ValidationError("n_points and tick_s must be positive")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ValidationError("need 0 <= speed_min <= speed_max")


def generate_traces(n: int, config: MobilityConfig, seed: int) -> list[MobilityTrace]:
    """Random-waypoint traces: walk toward a target, pick a new one on arrival."""
    rng = np.random.default_rng(seed)
    start_time = parse_timestamp(config.start_iso)
    bbox = config.bbox
    mid_lat = math.radians((bbox.south + bbox.north) / 2)
    m_per_deg_lat = 111_320.0
    m_per_deg_lon = m_per_deg_lat * math.cos(mid_lat)
    traces: list[MobilityTrace] = []
    for r in range(int(n)):
        lon = float(rng.uniform(bbox.west, bbox.east))
        lat = float(rng.uniform(bbox.south, bbox.north))
        target = (float(rng.uniform(bbox.west, bbox.east)), float(rng.uniform(bbox.south, bbox.north)))
        speed = float(rng.uniform(config.speed_min, config.speed_max))
        prev_speed = speed
        points: list[TracePoint] = []
        for tick in range(config.n_points):
            timestamp = start_time + timedelta(seconds=tick * config.tick_s)
            accel = (speed - prev_speed) / config.tick_s
            points.append(TracePoint(timestamp, GeoPoint(lon, lat), speed, accel))
            prev_speed = speed
            dx_m = (target[0] - lon) * m_per_deg_lon
            dy_m = (target[1] - lat) * m_per_deg_lat
            remaining = math.hypot(dx_m, dy_m)
            step = speed * config.tick_s
            if remaining <= step:
                lon, lat = target
                target = (
                    float(rng.uniform(bbox.west, bbox.east)),
                    float(rng.uniform(bbox.south, bbox.north)),
                )
                speed = float(rng.uniform(config.speed_min, config.speed_max))
            else:
                lon += dx_m / remaining * step / m_per_deg_lon
                lat += dy_m / remaining * step / m_per_deg_lat
        traces.append(MobilityTrace(resident_id=f"resident-{seed}-{r:03d}", points=tuple(points)))
    return traces
