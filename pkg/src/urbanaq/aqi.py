"""Pollutant sub-indices and the composite air quality index.

Each pollutant concentration maps to an integer sub-index by
piecewise-linear interpolation over a breakpoint table; the composite
AQI is the maximum sub-index over the pollutants present.  The default
table carries the Chinese hourly-reporting breakpoints (HJ 633-2012):
1-hour segments for CO, NO2, O3 and SO2, the standard particulate
segments for PM2.5 and PM10.  Concentrations use ug/m3 except CO, which
is stored in mg/m3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .errors import UnknownPollutant, ValidationError
from .model import AllValuesAbsent, PollutantKind, PollutantVector

#: One interpolation segment: (conc_lo, conc_hi, index_lo, index_hi).
Segment = tuple[float, float, float, float]

_DEFAULT_SEGMENTS: dict[PollutantKind, tuple[Segment, ...]] = {
    PollutantKind.PM25: (
        (0, 35, 0, 50),
        (35, 75, 50, 100),
        (75, 115, 100, 150),
        (115, 150, 150, 200),
        (150, 250, 200, 300),
        (250, 350, 300, 400),
        (350, 500, 400, 500),
    ),
    PollutantKind.PM10: (
        (0, 50, 0, 50),
        (50, 150, 50, 100),
        (150, 250, 100, 150),
        (250, 350, 150, 200),
        (350, 420, 200, 300),
        (420, 500, 300, 400),
        (500, 600, 400, 500),
    ),
    PollutantKind.CO: (
        (0, 5, 0, 50),
        (5, 10, 50, 100),
        (10, 35, 100, 150),
        (35, 60, 150, 200),
        (60, 90, 200, 300),
        (90, 120, 300, 400),
        (120, 150, 400, 500),
    ),
    PollutantKind.NO2: (
        (0, 100, 0, 50),
        (100, 200, 50, 100),
        (200, 700, 100, 150),
        (700, 1200, 150, 200),
        (1200, 2340, 200, 300),
        (2340, 3090, 300, 400),
        (3090, 3840, 400, 500),
    ),
    PollutantKind.O3: (
        (0, 160, 0, 50),
        (160, 200, 50, 100),
        (200, 300, 100, 150),
        (300, 400, 150, 200),
        (400, 800, 200, 300),
        (800, 1000, 300, 400),
        (1000, 1200, 400, 500),
    ),
    # The hourly SO2 scale is defined only up to 800 ug/m3.
    PollutantKind.SO2: (
        (0, 150, 0, 50),
        (150, 500, 50, 100),
        (500, 650, 100, 150),
        (650, 800, 150, 200),
    ),
}


@dataclass(frozen=True)
class BreakpointTable:
    """Ordered interpolation segments per pollutant.

    Segments must be contiguous, strictly increasing in both concentration
    and index, and start at (0, 0).
    """

    segments: Mapping[PollutantKind, tuple[Segment, ...]]

    def __post_init__(self) -> None:
        for kind, segs in self.segments.items():
            if not segs:
                raise ValidationError(f"{kind.value}: empty segment list")
            if segs[0][0] != 0 or segs[0][2] != 0:
                raise ValidationError(f"{kind.value}: first segment must start at (0, 0)")
            for i, (c_lo, c_hi, i_lo, i_hi) in enumerate(segs):
                if not (c_lo < c_hi and i_lo < i_hi):
                    raise ValidationError(f"{kind.value}: segment {i} is not increasing")
                if i > 0 and (c_lo != segs[i - 1][1] or i_lo != segs[i - 1][3]):
                    raise ValidationError(f"{kind.value}: segment {i} is not contiguous")

    def for_kind(self, kind: PollutantKind) -> tuple[Segment, ...]:
        try:
            return self.segments[kind]
        except KeyError:
            raise UnknownPollutant(kind) from None

    def max_index(self, kind: PollutantKind) -> int:
        return int(self.for_kind(kind)[-1][3])

    @classmethod
    def default(cls) -> "BreakpointTable":
        return DEFAULT_TABLE


DEFAULT_TABLE = BreakpointTable(dict(_DEFAULT_SEGMENTS))


def load_breakpoint_table(path: str | Path) -> BreakpointTable:
    """Load a table from a text file, one ``pollutant c_lo c_hi i_lo i_hi`` per line.

    Fields may be separated by whitespace or commas; ``#`` starts a comment.
    """
    by_kind: dict[PollutantKind, list[Segment]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 5:
            raise ValidationError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            kind = PollutantKind(parts[0].lower())
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: unknown pollutant {parts[0]!r}") from None
        c_lo, c_hi, i_lo, i_hi = (float(p) for p in parts[1:])
        by_kind.setdefault(kind, []).append((c_lo, c_hi, i_lo, i_hi))
    segments = {kind: tuple(sorted(segs)) for kind, segs in by_kind.items()}
    return BreakpointTable(segments)


def pollutant_subindex(
    kind: PollutantKind,
    concentration: float,
    table: BreakpointTable = DEFAULT_TABLE,
) -> int:
    """Integer sub-index for one pollutant concentration.

    Linear interpolation within the enclosing segment, rounded up to the
    next integer; concentrations beyond the last segment clamp to the
    table's maximum index.
    """
    if not math.isfinite(concentration) or concentration < 0:
        raise ValidationError(f"concentration must be finite and >= 0, got {concentration!r}")
    segs = table.for_kind(kind)
    if concentration > segs[-1][1]:
        return int(segs[-1][3])
    for c_lo, c_hi, i_lo, i_hi in segs:
        if concentration <= c_hi:
            # Multiply before dividing so integer-valued results stay exact.
            return math.ceil(i_lo + (concentration - c_lo) * (i_hi - i_lo) / (c_hi - c_lo))
    raise AssertionError("unreachable: segments cover [0, max]")


@dataclass(frozen=True)
class AqiResult:
    """Composite AQI with its per-pollutant sub-indices.

    ``primary_pollutant`` is the arg-max sub-index (ties broken by
    pollutant declaration order) and is reported only when the AQI
    exceeds 50.
    """

    aqi: int
    primary_pollutant: PollutantKind | None
    subindices: Mapping[PollutantKind, int]


def compute_aqi(values: PollutantVector, table: BreakpointTable = DEFAULT_TABLE) -> AqiResult:
    """Composite AQI over the present pollutants: the maximum sub-index."""
    subindices: dict[PollutantKind, int] = {}
    for kind, concentration in values.items():
        subindices[kind] = pollutant_subindex(kind, concentration, table)
    if not subindices:
        raise AllValuesAbsent()
    aqi = max(subindices.values())
    primary = None
    if aqi > 50:
        primary = next(kind for kind in PollutantKind if subindices.get(kind) == aqi)
    return AqiResult(aqi=aqi, primary_pollutant=primary, subindices=subindices)


def write_breakpoint_table(table: BreakpointTable, path: str | Path) -> None:
    """Serialize a table in the format accepted by :func:`load_breakpoint_table`."""
    lines: Iterable[str] = (
        f"{kind.value} {c_lo:g} {c_hi:g} {i_lo:g} {i_hi:g}"
        for kind in PollutantKind
        if kind in table.segments
        for c_lo, c_hi, i_lo, i_hi in table.segments[kind]
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
