"""Exception types raised across the package."""


class UrbanAqError(Exception):
    """Base class for all domain errors."""


class ValidationError(UrbanAqError, ValueError):
    """A record or value violates a domain invariant."""


class OutOfRangeCoordinate(ValidationError):
    def __init__(self, field: str, value: object):
        super().__init__(f"{field} out of range: {value!r}")
        self.field = field
        self.value = value


class UnparseableTimestamp(ValidationError):
    def __init__(self, value: object):
        super().__init__(f"unparseable timestamp: {value!r}")
        self.value = value


class AllValuesAbsent(ValidationError):
    def __init__(self, field: str = "values"):
        super().__init__(f"{field}: every pollutant concentration is absent")
        self.field = field


class OutOfRangeConcentration(ValidationError):
    def __init__(self, field: str, value: object):
        super().__init__(f"{field} must be a finite non-negative number, got {value!r}")
        self.field = field
        self.value = value


class OutOfRangeVital(ValidationError):
    def __init__(self, field: str, value: object):
        super().__init__(f"{field} out of physiological range: {value!r}")
        self.field = field
        self.value = value


class UnknownPollutant(UrbanAqError, KeyError):
    def __init__(self, kind: object):
        super().__init__(f"breakpoint table has no segments for {kind!r}")
        self.kind = kind


class NoData(UrbanAqError):
    """A fusion input carries no samples at all."""


class OutOfBoundingBox(ValidationError):
    def __init__(self, lon: float, lat: float):
        super().__init__(f"point ({lon}, {lat}) lies outside the configured bounding box")
        self.lon = lon
        self.lat = lat


class SlotStillOpen(UrbanAqError):
    def __init__(self, slot: object):
        super().__init__(f"slot {slot} has not closed yet")
        self.slot = slot


class UnknownSlot(UrbanAqError, KeyError):
    def __init__(self, slot: object):
        super().__init__(f"no data for slot {slot}")
        self.slot = slot


class EmptyTrace(ValidationError):
    def __init__(self, resident_id: str = ""):
        super().__init__(f"mobility trace is empty ({resident_id})")
        self.resident_id = resident_id


class NoPeaksDetected(UrbanAqError):
    """Fewer than two R-peaks found in an ECG segment."""


class SegmentTooShort(UrbanAqError):
    def __init__(self, duration_s: float, minimum_s: float):
        super().__init__(f"segment spans {duration_s:.3f} s, need at least {minimum_s:.0f} s")
        self.duration_s = duration_s
        self.minimum_s = minimum_s


class NoRoute(UrbanAqError):
    """Start and goal are disconnected by avoid-zones."""
