"""Physiological record validation and heart-rate derivation from raw ECG.

R-peaks are taken as local maxima exceeding mean + 2 std with a 0.25 s
refractory period; the rate follows from the span between the first and
last detected peak.  This is deliberately simple signal handling for
wearable-grade segments, not a clinical QRS detector.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import NoPeaksDetected, OutOfRangeVital, SegmentTooShort, ValidationError
from .model import EcgSegment, GeoPoint, PhysioRecord, parse_timestamp

__all__ = [
    "EcgSegment",
    "PhysioRecord",
    "validate_physio",
    "heart_rate_from_ecg",
    "REFRACTORY_S",
    "MIN_SEGMENT_S",
]

REFRACTORY_S = 0.25
MIN_SEGMENT_S = 4.0


def _parse_segment(obj: object) -> EcgSegment | None:
    if obj is None:
        return None
    if isinstance(obj, EcgSegment):
        return obj
    if isinstance(obj, Mapping):
        return EcgSegment(
            samples=tuple(int(v) for v in obj["samples"]),  # type: ignore[index]
            sampling_rate=float(obj.get("rate_hz", obj.get("sampling_rate", 0)) or 0),
        )
    raise ValidationError(f"cannot read ADC segment from {type(obj).__name__}")


def _optional_vital(record: Mapping[str, object], key: str) -> float | None:
    raw = record.get(key)
    if raw is None or raw == "" or raw == "-":
        return None
    try:
        return float(raw)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise OutOfRangeVital(key, raw) from None


def validate_physio(record: Mapping[str, object]) -> PhysioRecord:
    """Build a validated :class:`PhysioRecord` from a parsed external record.

    All vitals are nullable; present vitals must sit in physiological
    range or :class:`OutOfRangeVital` names the offending field.
    """
    lon = record.get("longitude", record.get("lon"))
    lat = record.get("latitude", record.get("lat"))
    location = GeoPoint(float(lon), float(lat))  # type: ignore[arg-type]
    timestamp = parse_timestamp(record.get("time", record.get("timestamp")))
    return PhysioRecord(
        location=location,
        timestamp=timestamp,
        ecg=_parse_segment(record.get("ecg")),
        emg=_parse_segment(record.get("emg")),
        heart_rate=_optional_vital(record, "heart_rate"),
        body_temp=_optional_vital(record, "body_temp"),
        spo2=_optional_vital(record, "spo2"),
    )


def detect_r_peaks(segment: EcgSegment) -> list[int]:
    """Indices of R-peaks: local maxima above mean + 2 std, 0.25 s apart.

    The detection threshold scales with the signal, so rescaling the
    whole segment by a positive constant finds the same peaks.
    """
    x = np.asarray(segment.samples, dtype=float)
    threshold = x.mean() + 2.0 * x.std()
    refractory = int(round(REFRACTORY_S * segment.sampling_rate))
    peaks: list[int] = []
    for i in range(1, len(x) - 1):
        if x[i] <= threshold or x[i] < x[i - 1] or x[i] < x[i + 1]:
            continue
        if peaks and i - peaks[-1] < refractory:
            continue
        peaks.append(i)
    return peaks


def heart_rate_from_ecg(segment: EcgSegment) -> int:
    """Beats per minute from a raw ECG segment of at least 4 seconds."""
    if segment.duration_s < MIN_SEGMENT_S:
        raise SegmentTooShort(segment.duration_s, MIN_SEGMENT_S)
    peaks = detect_r_peaks(segment)
    if len(peaks) < 2:
        raise NoPeaksDetected(f"found {len(peaks)} peaks, need at least 2")
    span_s = (peaks[-1] - peaks[0]) / segment.sampling_rate
    return round(60.0 * (len(peaks) - 1) / span_s)
