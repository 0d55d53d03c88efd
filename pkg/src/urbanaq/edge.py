"""Edge-node ingestion and remote re-integration of per-slot statistics.

Edges never ship fused values: they ship max-depth (sum, count) cells,
which merge by addition at the remote store.  Re-integrating merged
statistics with the same grid/fusion routine used locally therefore
reproduces, bit for bit up to float associativity, the records a single
node would have computed over the union of all samples.

Batches are idempotent: the batch id is a content hash, re-delivery is
a no-op, and any permutation of deliveries yields the same store.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Mapping

from .aqi import BreakpointTable
from .errors import SlotStillOpen, UnknownSlot, ValidationError
from .fusion import build_maqi_records
from .grid import CellStats, Grid, GridConfig, aggregate_grid, assign_time_slot, quadkey_for
from .model import (
    UTC,
    FusionWeights,
    MaqiRecord,
    SensorSample,
    TimeSlot,
    format_timestamp,
    parse_timestamp,
)


def _canonical_stats(stats: Mapping[str, CellStats]) -> str:
    return json.dumps({k: stats[k].to_obj() for k in sorted(stats)}, sort_keys=True)


@dataclass(frozen=True)
class EdgeBatch:
    """One edge's statistics shipment for one closed slot."""

    edge_id: str
    slot: TimeSlot
    stats: Mapping[str, CellStats]
    sample_ids: frozenset[str]
    batch_id: str

    @classmethod
    def build(
        cls,
        edge_id: str,
        slot: TimeSlot,
        stats: Mapping[str, CellStats],
        sample_ids: Iterable[str],
    ) -> "EdgeBatch":
        ids = frozenset(sample_ids)
        digest = hashlib.sha256()
        digest.update(f"{edge_id}|{slot.iso()}|{int(slot.duration.total_seconds())}|".encode())
        digest.update(_canonical_stats(stats).encode())
        digest.update(json.dumps(sorted(ids)).encode())
        return cls(
            edge_id=edge_id,
            slot=slot,
            stats={k: stats[k].copy() for k in stats},
            sample_ids=ids,
            batch_id=digest.hexdigest(),
        )

    def to_lines(self) -> str:
        """Wire encoding: a header line, one cell-stat line per cell, an id line."""
        header = {
            "record": "batch",
            "edge_id": self.edge_id,
            "slot": self.slot.iso(),
            "duration_s": int(self.slot.duration.total_seconds()),
            "batch_id": self.batch_id,
            "cells": len(self.stats),
        }
        lines = [json.dumps(header, sort_keys=True)]
        for quadkey in sorted(self.stats):
            obj = {"quadkey": quadkey}
            obj.update(self.stats[quadkey].to_obj())
            lines.append(json.dumps(obj, sort_keys=True))
        lines.append(json.dumps({"sample_ids": sorted(self.sample_ids)}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_lines(cls, text: str) -> "EdgeBatch":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise ValidationError("empty batch payload")
        header = json.loads(lines[0])
        if header.get("record") != "batch":
            raise ValidationError("first line is not a batch header")
        duration = timedelta(seconds=int(header["duration_s"]))
        slot = TimeSlot(parse_timestamp(header["slot"]), duration)
        stats: dict[str, CellStats] = {}
        ids: frozenset[str] = frozenset()
        for line in lines[1:]:
            obj = json.loads(line)
            if "sample_ids" in obj:
                ids = frozenset(obj["sample_ids"])
            else:
                stats[obj["quadkey"]] = CellStats.from_obj(obj)
        return cls(
            edge_id=header["edge_id"],
            slot=slot,
            stats=stats,
            sample_ids=ids,
            batch_id=header["batch_id"],
        )


class EdgeNode:
    """Single-writer edge state: dedupes samples and accumulates max-depth cells."""

    def __init__(self, edge_id: str, config: GridConfig, slot_duration: timedelta = timedelta(hours=1)):
        self.edge_id = edge_id
        self.config = config
        self.slot_duration = slot_duration
        self._slots: dict[TimeSlot, dict[str, CellStats]] = {}
        self._slot_ids: dict[TimeSlot, set[str]] = {}
        self._seen: set[str] = set()

    def ingest(self, sample: SensorSample) -> bool:
        """Accumulate a validated sample; returns False for a duplicate id."""
        if sample.sample_id in self._seen:
            return False
        quadkey = quadkey_for(sample.location, self.config.bbox, self.config.max_depth)
        slot = assign_time_slot(sample.timestamp, self.slot_duration)
        self._seen.add(sample.sample_id)
        self._slots.setdefault(slot, {}).setdefault(quadkey, CellStats()).add(sample)
        self._slot_ids.setdefault(slot, set()).add(sample.sample_id)
        return True

    def flush(self, slot: TimeSlot, now: datetime | None = None) -> EdgeBatch:
        """Batch of the slot's statistics; data is retained until acknowledged."""
        if now is None:
            now = datetime.now(UTC)
        elif now.tzinfo is None:
            now = now.replace(tzinfo=UTC)
        if now < slot.end:
            raise SlotStillOpen(slot.label())
        stats = self._slots.get(slot, {})
        ids = self._slot_ids.get(slot, set())
        return EdgeBatch.build(self.edge_id, slot, stats, ids)

    def acknowledge(self, batch: EdgeBatch) -> None:
        """Drop retained data once the remote store confirmed the batch."""
        current = self._slots.get(batch.slot)
        if current is None:
            return
        confirmed = EdgeBatch.build(self.edge_id, batch.slot, current, self._slot_ids.get(batch.slot, set()))
        if confirmed.batch_id == batch.batch_id:
            del self._slots[batch.slot]
            del self._slot_ids[batch.slot]

    def sample_count(self, slot: TimeSlot) -> int:
        return len(self._slot_ids.get(slot, set()))


class RemoteStore:
    """Merged per-slot statistics from many edges, idempotent by batch id."""

    def __init__(self) -> None:
        self._slots: dict[TimeSlot, dict[str, CellStats]] = {}
        self._slot_ids: dict[TimeSlot, set[str]] = {}
        self._applied: set[str] = set()

    @property
    def applied_batches(self) -> frozenset[str]:
        return frozenset(self._applied)

    def known_slots(self) -> list[TimeSlot]:
        return sorted(self._slots, key=lambda s: s.start)

    def merge(self, batch: EdgeBatch) -> bool:
        """Add a batch's statistics; a re-delivered batch id is a no-op."""
        if batch.batch_id in self._applied:
            return False
        self._applied.add(batch.batch_id)
        merged = self._slots.setdefault(batch.slot, {})
        for quadkey in sorted(batch.stats):
            merged.setdefault(quadkey, CellStats()).merge_in(batch.stats[quadkey])
        self._slot_ids.setdefault(batch.slot, set()).update(batch.sample_ids)
        return True

    def stats_for(self, slot: TimeSlot) -> dict[str, CellStats]:
        if slot not in self._slots:
            raise UnknownSlot(slot.label())
        return {k: v.copy() for k, v in self._slots[slot].items()}

    def sample_count(self, slot: TimeSlot) -> int:
        return len(self._slot_ids.get(slot, set()))

    def total_counted(self, slot: TimeSlot) -> int:
        """Sum of per-class sample tallies over the slot's cells."""
        if slot not in self._slots:
            raise UnknownSlot(slot.label())
        return sum(stats.total_samples for stats in self._slots[slot].values())

    def fuse(
        self,
        slot: TimeSlot,
        config: GridConfig,
        weights: FusionWeights,
        table: BreakpointTable,
    ) -> list[MaqiRecord]:
        """Re-integrate the slot with the same grid and fusion routine the edges use."""
        deep = self.stats_for(slot)
        grid = aggregate_grid(deep, config, slot)
        return build_maqi_records(grid, weights, table)

    def fuse_at_depth(
        self,
        slot: TimeSlot,
        depth: int,
        config: GridConfig,
        weights: FusionWeights,
        table: BreakpointTable,
    ) -> list[MaqiRecord]:
        """Fused records on a uniform depth-``depth`` grid (for routing queries)."""
        if depth < 0 or depth > config.max_depth:
            raise ValidationError(f"depth must lie in [0, {config.max_depth}]")
        deep = self.stats_for(slot)
        coarse: dict[str, CellStats] = {}
        for quadkey in sorted(deep):
            coarse.setdefault(quadkey[:depth], CellStats()).merge_in(deep[quadkey])
        grid = Grid(bbox=config.bbox, config=config, cells=coarse, slot=slot)
        return build_maqi_records(grid, weights, table)
