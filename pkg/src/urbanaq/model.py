"""Core domain types shared by every stage of the pipeline.

All types are immutable values after construction; they can be shared
freely between concurrent tasks.  Validation happens in ``__post_init__``
so an instance that exists is an instance that satisfies its invariants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Iterator, Mapping

from .errors import (
    AllValuesAbsent,
    OutOfRangeConcentration,
    OutOfRangeCoordinate,
    OutOfRangeVital,
    UnparseableTimestamp,
    ValidationError,
)

UTC = timezone.utc

#: External records carry timestamps in this layout (no timezone, read as UTC).
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


class SourceClass(Enum):
    """Origin of a sensor sample; drives the per-class fusion weights."""

    CROWDSOURCED = "crowdsourced"
    METEOROLOGICAL = "meteorological"
    IOT_SENSING = "iot"

    @classmethod
    def parse(cls, text: str) -> "SourceClass":
        key = str(text).strip().lower()
        aliases = {
            "crowdsourced": cls.CROWDSOURCED,
            "crowd": cls.CROWDSOURCED,
            "meteorological": cls.METEOROLOGICAL,
            "met": cls.METEOROLOGICAL,
            "iot": cls.IOT_SENSING,
            "iot_sensing": cls.IOT_SENSING,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown source class: {text!r}") from None


class PollutantKind(Enum):
    """The six tracked pollutants.  Declaration order breaks AQI ties."""

    PM25 = "pm25"
    PM10 = "pm10"
    CO = "co"
    NO2 = "no2"
    O3 = "o3"
    SO2 = "so2"

    @property
    def unit(self) -> str:
        return "mg/m3" if self is PollutantKind.CO else "ug/m3"


@dataclass(frozen=True)
class GeoPoint:
    """WGS-84 longitude/latitude pair in decimal degrees."""

    longitude: float
    latitude: float

    def __post_init__(self) -> None:
        lon, lat = self.longitude, self.latitude
        if not isinstance(lon, (int, float)) or not math.isfinite(lon) or not -180.0 <= lon <= 180.0:
            raise OutOfRangeCoordinate("longitude", lon)
        if not isinstance(lat, (int, float)) or not math.isfinite(lat) or not -90.0 <= lat <= 90.0:
            raise OutOfRangeCoordinate("latitude", lat)


@dataclass(frozen=True)
class PollutantVector:
    """Concentrations per pollutant; ``None`` marks an absent reading.

    Units follow the ingest convention: mg/m3 for CO, ug/m3 otherwise.
    At least one pollutant must be present.
    """

    pm25: float | None = None
    pm10: float | None = None
    co: float | None = None
    no2: float | None = None
    o3: float | None = None
    so2: float | None = None

    def __post_init__(self) -> None:
        any_present = False
        for kind in PollutantKind:
            value = getattr(self, kind.value)
            if value is None:
                continue
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise OutOfRangeConcentration(kind.value, value)
            any_present = True
        if not any_present:
            raise AllValuesAbsent()

    def get(self, kind: PollutantKind) -> float | None:
        return getattr(self, kind.value)

    def items(self) -> Iterator[tuple[PollutantKind, float]]:
        """Yield (kind, value) for the present pollutants in declaration order."""
        for kind in PollutantKind:
            value = getattr(self, kind.value)
            if value is not None:
                yield kind, value

    @property
    def present(self) -> tuple[PollutantKind, ...]:
        return tuple(kind for kind, _ in self.items())

    @classmethod
    def from_mapping(cls, values: Mapping[PollutantKind, float]) -> "PollutantVector":
        return cls(**{kind.value: values.get(kind) for kind in PollutantKind})


def parse_timestamp(value: object) -> datetime:
    """Parse an external timestamp into a UTC-aware instant at seconds resolution.

    Accepts ``YYYY-MM-DD hh:mm:ss``, ISO-8601 (``T`` separator, optional
    ``Z`` or offset), or an existing ``datetime``.  Naive inputs are read
    as UTC.
    """
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, str):
        text = value.strip()
        try:
            dt = datetime.strptime(text, TIMESTAMP_FORMAT)
        except ValueError:
            try:
                dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
            except ValueError:
                raise UnparseableTimestamp(value) from None
    else:
        raise UnparseableTimestamp(value)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=UTC)
    return dt.astimezone(UTC).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class TimeSlot:
    """Half-open aligned interval ``[start, start + duration)``."""

    start: datetime
    duration: timedelta = timedelta(hours=1)

    def __post_init__(self) -> None:
        if self.duration <= timedelta(0):
            raise ValidationError(f"slot duration must be positive, got {self.duration}")
        seconds = self.duration.total_seconds()
        if seconds != int(seconds):
            raise ValidationError("slot duration must be a whole number of seconds")
        start = self.start
        if start.tzinfo is None:
            start = start.replace(tzinfo=UTC)
            object.__setattr__(self, "start", start)
        if start.microsecond != 0 or int(start.timestamp()) % int(seconds) != 0:
            raise ValidationError(f"slot start {start} is not aligned to {self.duration}")

    @property
    def end(self) -> datetime:
        return self.start + self.duration

    def contains(self, instant: datetime) -> bool:
        if instant.tzinfo is None:
            instant = instant.replace(tzinfo=UTC)
        return self.start <= instant < self.end

    def label(self) -> str:
        """Human-readable label, e.g. ``2017-05-15(12:00-13:00)``."""
        s, e = self.start.astimezone(UTC), self.end.astimezone(UTC)
        return f"{s:%Y-%m-%d}({s:%H:%M}-{e:%H:%M})"

    def iso(self) -> str:
        return format_timestamp(self.start)


@dataclass(frozen=True)
class FusionWeights:
    """Per-source-class fusion weights; must sum to one."""

    w_crowd: float = 0.2
    w_met: float = 0.5
    w_iot: float = 0.3

    def __post_init__(self) -> None:
        for name in ("w_crowd", "w_met", "w_iot"):
            w = getattr(self, name)
            if not isinstance(w, (int, float)) or not math.isfinite(w) or not 0.0 <= w <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {w!r}")
        total = self.w_crowd + self.w_met + self.w_iot
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"fusion weights must sum to 1 (got {total!r})")

    def for_class(self, source: SourceClass) -> float:
        return {
            SourceClass.CROWDSOURCED: self.w_crowd,
            SourceClass.METEOROLOGICAL: self.w_met,
            SourceClass.IOT_SENSING: self.w_iot,
        }[source]


DEFAULT_WEIGHTS = FusionWeights(0.2, 0.5, 0.3)


@dataclass(frozen=True)
class SensorSample:
    """One timestamped, geolocated pollutant measurement from one source."""

    sample_id: str
    location: GeoPoint
    timestamp: datetime
    source: SourceClass
    values: PollutantVector
    reporter_id: str | None = None

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise ValidationError("sample_id must be non-empty")
        ts = self.timestamp
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=UTC)
        object.__setattr__(self, "timestamp", ts.astimezone(UTC).replace(microsecond=0))


def _coerce_coordinate(record: Mapping[str, object], field_name: str, *keys: str) -> float:
    for key in keys:
        if key in record and record[key] is not None:
            raw = record[key]
            try:
                return float(raw)  # type: ignore[arg-type]
            except (TypeError, ValueError):
                raise OutOfRangeCoordinate(field_name, raw) from None
    raise OutOfRangeCoordinate(field_name, None)


def validate_sample(record: Mapping[str, object]) -> SensorSample:
    """Build a validated :class:`SensorSample` from a parsed external record.

    Pollutant fields equal to ``"-"``, ``""`` or ``None`` become absent.
    Raises :class:`OutOfRangeCoordinate`, :class:`UnparseableTimestamp` or
    :class:`AllValuesAbsent` naming the offending field.
    """
    sample_id = record.get("sample_id") or record.get("id")
    if not sample_id:
        raise ValidationError("sample_id missing from record")
    lon = _coerce_coordinate(record, "longitude", "longitude", "lon")
    lat = _coerce_coordinate(record, "latitude", "latitude", "lat")
    location = GeoPoint(lon, lat)
    raw_time = record.get("time", record.get("timestamp"))
    if raw_time is None:
        raise UnparseableTimestamp(raw_time)
    timestamp = parse_timestamp(raw_time)
    source = SourceClass.parse(str(record.get("source", "")))

    concentrations: dict[str, float | None] = {}
    for kind in PollutantKind:
        raw = record.get(kind.value)
        if raw is None or raw == "-" or raw == "":
            concentrations[kind.value] = None
            continue
        try:
            concentrations[kind.value] = float(raw)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            raise OutOfRangeConcentration(kind.value, raw) from None
    values = PollutantVector(**concentrations)

    reporter = record.get("reporter_id")
    return SensorSample(
        sample_id=str(sample_id),
        location=location,
        timestamp=timestamp,
        source=source,
        values=values,
        reporter_id=str(reporter) if reporter is not None else None,
    )


@dataclass(frozen=True)
class EcgSegment:
    """Raw ADC sample run with its sampling rate."""

    samples: tuple[int, ...]
    sampling_rate: float
    start: datetime | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(int(s) for s in self.samples))
        if len(self.samples) < 2:
            raise ValidationError("an ADC segment needs at least 2 samples")
        if not 50.0 <= self.sampling_rate <= 2000.0:
            raise ValidationError(f"sampling rate {self.sampling_rate} Hz outside [50, 2000]")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sampling_rate


_VITAL_RANGES = {
    "heart_rate": (30.0, 220.0),
    "spo2": (0.0, 100.0),
    "body_temp": (20.0, 45.0),  # skin temperature, not core
}


@dataclass(frozen=True)
class PhysioRecord:
    """One timestamped, geolocated physiological reading."""

    location: GeoPoint
    timestamp: datetime
    ecg: EcgSegment | None = None
    emg: EcgSegment | None = None
    heart_rate: float | None = None
    body_temp: float | None = None
    spo2: float | None = None

    def __post_init__(self) -> None:
        ts = self.timestamp
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=UTC)
        object.__setattr__(self, "timestamp", ts.astimezone(UTC).replace(microsecond=0))
        for name, (lo, hi) in _VITAL_RANGES.items():
            value = getattr(self, name)
            if value is None:
                continue
            if not isinstance(value, (int, float)) or not math.isfinite(value) or not lo <= value <= hi:
                raise OutOfRangeVital(name, value)


@dataclass(frozen=True)
class MaqiRecord:
    """Fused per-cell, per-slot pollutant vector with its derived AQI."""

    cell: str
    centroid: GeoPoint
    slot: TimeSlot
    aqi: int
    primary_pollutant: PollutantKind | None
    values: PollutantVector
    sample_counts: Mapping[SourceClass, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.aqi < 0:
            raise ValidationError(f"aqi must be non-negative, got {self.aqi}")
        counts = {cls: int(self.sample_counts.get(cls, 0)) for cls in SourceClass}
        if any(v < 0 for v in counts.values()):
            raise ValidationError("sample counts must be non-negative")
        if sum(counts.values()) < 1:
            raise ValidationError("a fused record needs at least one contributing sample")
        object.__setattr__(self, "sample_counts", counts)
