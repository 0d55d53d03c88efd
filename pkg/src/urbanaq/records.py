"""Line-delimited wire encodings for samples, physio records and traces.

Record batches travel as UTF-8 JSON lines with named fields; mobility
traces as headerless CSV (resident_id, ISO timestamp, lon, lat, speed,
acceleration).  Timestamps are ISO-8601 UTC on the wire.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import timedelta
from typing import Iterable, Iterator, Mapping

from .aqi import compute_aqi
from .errors import ValidationError
from .grid import assign_time_slot
from .model import (
    GeoPoint,
    MaqiRecord,
    PhysioRecord,
    PollutantKind,
    PollutantVector,
    SensorSample,
    SourceClass,
    TimeSlot,
    format_timestamp,
    parse_timestamp,
    validate_sample,
)
from .physio import validate_physio
from .tasking import MobilityTrace, TracePoint


def sample_to_obj(sample: SensorSample) -> dict:
    obj: dict = {
        "sample_id": sample.sample_id,
        "longitude": sample.location.longitude,
        "latitude": sample.location.latitude,
        "time": format_timestamp(sample.timestamp),
        "source": sample.source.value,
    }
    if sample.reporter_id is not None:
        obj["reporter_id"] = sample.reporter_id
    for kind, value in sample.values.items():
        obj[kind.value] = value
    return obj


def sample_from_obj(obj: Mapping[str, object]) -> SensorSample:
    return validate_sample(obj)


def physio_to_obj(record: PhysioRecord, resident_id: str | None = None) -> dict:
    obj: dict = {
        "longitude": record.location.longitude,
        "latitude": record.location.latitude,
        "time": format_timestamp(record.timestamp),
    }
    if resident_id is not None:
        obj["resident_id"] = resident_id
    for name in ("heart_rate", "body_temp", "spo2"):
        value = getattr(record, name)
        if value is not None:
            obj[name] = value
    for name in ("ecg", "emg"):
        segment = getattr(record, name)
        if segment is not None:
            obj[name] = {"rate_hz": segment.sampling_rate, "samples": list(segment.samples)}
    return obj


def physio_from_obj(obj: Mapping[str, object]) -> tuple[str | None, PhysioRecord]:
    resident = obj.get("resident_id")
    return (str(resident) if resident is not None else None), validate_physio(obj)


def maqi_to_obj(record: MaqiRecord) -> dict:
    obj: dict = {
        "cell": record.cell,
        "longitude": record.centroid.longitude,
        "latitude": record.centroid.latitude,
        "slot": record.slot.iso(),
        "duration_s": int(record.slot.duration.total_seconds()),
        "aqi": record.aqi,
        "primary_pollutant": record.primary_pollutant.value if record.primary_pollutant else None,
    }
    for kind, value in record.values.items():
        obj[kind.value] = value
    for cls in SourceClass:
        obj[f"samples_{cls.value}"] = record.sample_counts.get(cls, 0)
    return obj


def maqi_from_obj(obj: Mapping[str, object]) -> MaqiRecord:
    slot = TimeSlot(parse_timestamp(obj["slot"]), timedelta(seconds=int(obj.get("duration_s", 3600))))
    values = {}
    for kind in PollutantKind:
        if obj.get(kind.value) is not None:
            values[kind.value] = float(obj[kind.value])  # type: ignore[arg-type]
    vector = PollutantVector(**values)
    result = compute_aqi(vector)
    counts = {cls: int(obj.get(f"samples_{cls.value}", 0)) for cls in SourceClass}
    return MaqiRecord(
        cell=str(obj["cell"]),
        centroid=GeoPoint(float(obj["longitude"]), float(obj["latitude"])),  # type: ignore[arg-type]
        slot=slot,
        aqi=result.aqi,
        primary_pollutant=result.primary_pollutant,
        values=vector,
        sample_counts=counts,
    )


def encode_ndjson(objs: Iterable[Mapping]) -> str:
    return "".join(json.dumps(obj, sort_keys=True) + "\n" for obj in objs)


def iter_ndjson(text: str) -> Iterator[tuple[int, dict]]:
    """Yield (line_index, parsed object) for each non-blank line.

    Raises :class:`ValidationError` tagged with the line index when a
    line is not valid JSON.
    """
    for index, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"line {index}: not valid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ValidationError(f"line {index}: expected a JSON object")
        yield index, obj


def parse_slot(text: str, duration: timedelta = timedelta(hours=1)) -> TimeSlot:
    """Slot whose start is the given instant, snapped down to alignment."""
    return assign_time_slot(parse_timestamp(text), duration)


def write_traces(traces: Iterable[MobilityTrace]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    for trace in traces:
        for p in trace.points:
            writer.writerow(
                [
                    trace.resident_id,
                    format_timestamp(p.timestamp),
                    repr(p.location.longitude),
                    repr(p.location.latitude),
                    repr(p.speed),
                    repr(p.acceleration),
                ]
            )
    return buffer.getvalue()


def read_traces(text: str) -> list[MobilityTrace]:
    """Parse headerless trace CSV; rows grouped by resident, in row order."""
    points: dict[str, list[TracePoint]] = {}
    for row_num, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row:
            continue
        if len(row) != 6:
            raise ValidationError(f"trace row {row_num}: expected 6 fields, got {len(row)}")
        resident, ts, lon, lat, speed, accel = row
        points.setdefault(resident, []).append(
            TracePoint(
                timestamp=parse_timestamp(ts),
                location=GeoPoint(float(lon), float(lat)),
                speed=float(speed),
                acceleration=float(accel),
            )
        )
    return [MobilityTrace(resident_id=r, points=tuple(ps)) for r, ps in points.items()]
