"""HTTP service tying ingestion, fusion, physio storage and guidance together.

One process hosts every simulated edge node plus the remote store; samples
route to their owning edge by location.  Read endpoints fuse on demand
from the current store snapshot, so identical snapshots produce identical
responses.  Record lists travel as JSON lines (``application/x-ndjson``).
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException, Query, Request, Response

from . import records as wire
from .aqi import BreakpointTable, load_breakpoint_table
from .edge import EdgeBatch, EdgeNode, RemoteStore
from .errors import NoRoute, OutOfBoundingBox, SlotStillOpen, UnknownSlot, ValidationError
from .grid import BoundingBox, GridConfig, WUHAN_BBOX, cell_bounds, quadkey_for
from .guidance import (
    ProfileKind,
    RouteQuery,
    UserProfile,
    advisory_for,
    load_message_catalog,
    plan_route,
)
from .model import (
    FusionWeights,
    GeoPoint,
    MaqiRecord,
    PhysioRecord,
    TimeSlot,
    parse_timestamp,
)

CONFIG_ENV_VAR = "URBANAQ_CONFIG"
NDJSON = "application/x-ndjson"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8040
    bbox: BoundingBox = WUHAN_BBOX
    slot_duration: timedelta = timedelta(hours=1)
    weights: FusionWeights = FusionWeights(0.2, 0.5, 0.3)
    split_threshold: int = 64
    max_depth: int = 16
    min_cell_deg: float = 0.005
    route_depth: int = 8
    n_edges: int = 1
    breakpoint_table: str | None = None
    message_catalog: str | None = None
    spool_dir: str | None = None

    def __post_init__(self) -> None:
        if self.n_edges < 1:
            raise ValidationError("n_edges must be >= 1")
        for name in ("breakpoint_table", "message_catalog"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ValidationError(f"{name} not readable: {path}")

    def grid_config(self) -> GridConfig:
        return GridConfig(
            bbox=self.bbox,
            split_threshold=self.split_threshold,
            max_depth=self.max_depth,
            min_cell_deg=self.min_cell_deg,
        )

    def table(self) -> BreakpointTable:
        if self.breakpoint_table:
            return load_breakpoint_table(self.breakpoint_table)
        return BreakpointTable.default()

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: Mapping[str, object]) -> "ServiceConfig":
        kwargs: dict = {}
        if "bbox" in raw:
            west, south, east, north = raw["bbox"]  # type: ignore[misc]
            kwargs["bbox"] = BoundingBox(west=west, south=south, east=east, north=north)
        if "weights" in raw:
            w1, w2, w3 = raw["weights"]  # type: ignore[misc]
            kwargs["weights"] = FusionWeights(w1, w2, w3)
        if "slot_duration_s" in raw:
            kwargs["slot_duration"] = timedelta(seconds=int(raw["slot_duration_s"]))  # type: ignore[arg-type]
        for key in (
            "host",
            "port",
            "split_threshold",
            "max_depth",
            "min_cell_deg",
            "route_depth",
            "n_edges",
            "breakpoint_table",
            "message_catalog",
            "spool_dir",
        ):
            if key in raw:
                kwargs[key] = raw[key]
        return cls(**kwargs)

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        path = os.environ.get(CONFIG_ENV_VAR)
        return cls.from_file(path) if path else cls()

    def with_overrides(self, **kwargs) -> "ServiceConfig":
        return replace(self, **kwargs)


@dataclass
class ServiceState:
    config: ServiceConfig
    edges: list[EdgeNode] = field(default_factory=list)
    store: RemoteStore = field(default_factory=RemoteStore)
    physio: list[tuple[str | None, PhysioRecord]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self) -> None:
        grid_config = self.config.grid_config()
        self.edges = [
            EdgeNode(f"edge-{i}", grid_config, self.config.slot_duration)
            for i in range(self.config.n_edges)
        ]
        self.table = self.config.table()
        self.catalog = load_message_catalog(self.config.message_catalog)
        if self.config.spool_dir:
            Path(self.config.spool_dir).mkdir(parents=True, exist_ok=True)

    def owning_edge(self, location: GeoPoint) -> EdgeNode:
        if len(self.edges) == 1:
            return self.edges[0]
        quadrant = quadkey_for(location, self.config.bbox, 1)
        return self.edges[int(quadrant, 4) % len(self.edges)]

    def spool(self, name: str, text: str) -> None:
        if not self.config.spool_dir:
            return
        with open(Path(self.config.spool_dir) / name, "a", encoding="utf-8") as fh:
            fh.write(text)

    def sync_slot(self, slot: TimeSlot, now: datetime | None = None) -> None:
        """Flush every edge's statistics for the slot into the remote store."""
        for edge in self.edges:
            batch = edge.flush(slot, now=now)
            if batch.stats or slot in self.store.known_slots():
                self.store.merge(batch)

    def fused(self, slot: TimeSlot) -> list[MaqiRecord]:
        self.sync_slot(slot)
        if slot not in self.store.known_slots() or self.store.sample_count(slot) == 0:
            raise UnknownSlot(slot.label())
        return self.store.fuse(slot, self.config.grid_config(), self.config.weights, self.table)

    def fused_at_depth(self, slot: TimeSlot, depth: int) -> list[MaqiRecord]:
        self.sync_slot(slot)
        if slot not in self.store.known_slots() or self.store.sample_count(slot) == 0:
            raise UnknownSlot(slot.label())
        return self.store.fuse_at_depth(
            slot, depth, self.config.grid_config(), self.config.weights, self.table
        )


def _parse_slot_param(state: ServiceState, text: str) -> TimeSlot:
    try:
        return wire.parse_slot(text, state.config.slot_duration)
    except ValidationError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    state = ServiceState(config or ServiceConfig.from_env())
    app = FastAPI(title="urbanaq", version="0.1.0")
    app.state.service = state

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "edges": len(state.edges),
            "slots": [slot.iso() for slot in state.store.known_slots()],
        }

    @app.post("/samples")
    async def post_samples(request: Request) -> dict:
        body = (await request.body()).decode("utf-8", errors="strict")
        if not body.strip():
            raise HTTPException(status_code=400, detail="empty body")
        results = []
        spooled = []
        accepted = duplicates = rejected = 0
        with state.lock:
            for index, obj in _iter_body(body):
                if isinstance(obj, str):
                    results.append({"index": index, "status": "rejected", "error": obj})
                    rejected += 1
                    continue
                try:
                    sample = wire.sample_from_obj(obj)
                    fresh = state.owning_edge(sample.location).ingest(sample)
                except (ValidationError, OutOfBoundingBox) as exc:
                    results.append(
                        {"index": index, "status": "rejected", "error": type(exc).__name__}
                    )
                    rejected += 1
                    continue
                if fresh:
                    accepted += 1
                    spooled.append(wire.sample_to_obj(sample))
                    results.append({"index": index, "status": "accepted"})
                else:
                    duplicates += 1
                    results.append({"index": index, "status": "duplicate"})
            if spooled:
                state.spool("samples.ndjson", wire.encode_ndjson(spooled))
        return {
            "accepted": accepted,
            "duplicates": duplicates,
            "rejected": rejected,
            "results": results,
        }

    @app.post("/physio")
    async def post_physio(request: Request) -> dict:
        body = (await request.body()).decode("utf-8", errors="strict")
        if not body.strip():
            raise HTTPException(status_code=400, detail="empty body")
        results = []
        spooled = []
        accepted = rejected = 0
        with state.lock:
            for index, obj in _iter_body(body):
                if isinstance(obj, str):
                    results.append({"index": index, "status": "rejected", "error": obj})
                    rejected += 1
                    continue
                try:
                    resident, record = wire.physio_from_obj(obj)
                except ValidationError as exc:
                    results.append(
                        {"index": index, "status": "rejected", "error": type(exc).__name__}
                    )
                    rejected += 1
                    continue
                state.physio.append((resident, record))
                spooled.append(wire.physio_to_obj(record, resident))
                accepted += 1
                results.append({"index": index, "status": "accepted"})
            if spooled:
                state.spool("physio.ndjson", wire.encode_ndjson(spooled))
        return {"accepted": accepted, "rejected": rejected, "results": results}

    @app.post("/batches")
    async def post_batches(request: Request) -> dict:
        body = (await request.body()).decode("utf-8", errors="strict")
        try:
            batch = EdgeBatch.from_lines(body)
        except (ValidationError, KeyError, json.JSONDecodeError) as exc:
            raise HTTPException(status_code=400, detail=f"bad batch: {exc}") from None
        with state.lock:
            applied = state.store.merge(batch)
            state.spool("batches.ndjson", batch.to_lines())
        return {"batch_id": batch.batch_id, "applied": applied}

    @app.get("/maqi")
    def get_maqi(
        slot: str,
        west: float | None = None,
        south: float | None = None,
        east: float | None = None,
        north: float | None = None,
    ) -> Response:
        timeslot = _parse_slot_param(state, slot)
        with state.lock:
            records = _fused_or_404(state, timeslot)
        if None not in (west, south, east, north):
            try:
                window = BoundingBox(west=west, south=south, east=east, north=north)
            except ValidationError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
            records = [
                r for r in records if cell_bounds(r.cell, state.config.bbox).intersects(window)
            ]
        payload = wire.encode_ndjson(wire.maqi_to_obj(r) for r in records)
        return Response(content=payload, media_type=NDJSON)

    @app.get("/aqi")
    def get_aqi(lon: float, lat: float, slot: str) -> dict:
        timeslot = _parse_slot_param(state, slot)
        with state.lock:
            records = _fused_or_404(state, timeslot)
        record = _record_at(state, records, lon, lat)
        if record is None:
            return {"aqi": 0, "cell": None, "slot": timeslot.iso(), "primary_pollutant": None}
        return {
            "aqi": record.aqi,
            "cell": record.cell,
            "slot": timeslot.iso(),
            "primary_pollutant": record.primary_pollutant.value if record.primary_pollutant else None,
        }

    @app.get("/advisory")
    def get_advisory(lon: float, lat: float, slot: str, profile: str = "general") -> dict:
        timeslot = _parse_slot_param(state, slot)
        try:
            kind = ProfileKind.parse(profile)
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        with state.lock:
            records = _fused_or_404(state, timeslot)
        record = _record_at(state, records, lon, lat)
        aqi = record.aqi if record is not None else 0
        advisory = advisory_for(aqi, UserProfile(kind=kind), cell=record.cell if record else None, slot=timeslot)
        return {
            "level": int(advisory.level),
            "band": advisory.level.name.lower(),
            "message_key": advisory.message_key,
            "message": state.catalog.get(advisory.message_key, ""),
            "aqi": advisory.aqi,
            "cell": advisory.cell,
            "slot": timeslot.iso(),
            "profile": kind.value,
        }

    @app.get("/route")
    def get_route(
        start_lon: float,
        start_lat: float,
        goal_lon: float,
        goal_lat: float,
        slot: str,
        alpha: float = 0.0,
        depth: int | None = Query(default=None, ge=0, le=16),
        avoid: str = "",
    ) -> dict:
        timeslot = _parse_slot_param(state, slot)
        route_depth = depth if depth is not None else state.config.route_depth
        with state.lock:
            try:
                records = state.fused_at_depth(timeslot, route_depth)
            except UnknownSlot as exc:
                raise HTTPException(status_code=404, detail=f"UnknownSlot: {exc}") from None
            except SlotStillOpen as exc:
                raise HTTPException(status_code=409, detail=f"SlotStillOpen: {exc}") from None
        avoid_cells = frozenset(c for c in avoid.split(",") if c)
        try:
            query = RouteQuery(
                start=GeoPoint(start_lon, start_lat),
                goal=GeoPoint(goal_lon, goal_lat),
                slot=timeslot,
                alpha=alpha,
                avoid=avoid_cells,
            )
            route = plan_route(records, query, state.config.bbox, depth=route_depth)
        except NoRoute:
            raise HTTPException(status_code=404, detail="NoRoute") from None
        except (ValidationError, OutOfBoundingBox) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {
            "cells": list(route.cells),
            "distance_m": route.distance_m,
            "exposure": route.exposure,
            "slot": timeslot.iso(),
        }

    @app.get("/physio")
    def get_physio(resident: str, start: str | None = None, end: str | None = None) -> Response:
        lo = parse_timestamp(start) if start else None
        hi = parse_timestamp(end) if end else None
        rows = []
        with state.lock:
            entries = list(state.physio)
        for resident_id, record in entries:
            if resident_id != resident:
                continue
            if lo is not None and record.timestamp < lo:
                continue
            if hi is not None and record.timestamp >= hi:
                continue
            rows.append(wire.physio_to_obj(record, resident_id))
        rows.sort(key=lambda r: r["time"])
        return Response(content=wire.encode_ndjson(rows), media_type=NDJSON)

    return app


def _iter_body(body: str):
    """Per-line parse results: (index, dict) or (index, error_name)."""
    for index, line in enumerate(body.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            yield index, "UnparseableRecord"
            continue
        if not isinstance(obj, dict):
            yield index, "UnparseableRecord"
            continue
        yield index, obj


def _fused_or_404(state: ServiceState, slot: TimeSlot) -> list[MaqiRecord]:
    try:
        return state.fused(slot)
    except UnknownSlot as exc:
        raise HTTPException(status_code=404, detail=f"UnknownSlot: {exc}") from None
    except SlotStillOpen as exc:
        raise HTTPException(status_code=409, detail=f"SlotStillOpen: {exc}") from None


def _record_at(state: ServiceState, records: list[MaqiRecord], lon: float, lat: float) -> MaqiRecord | None:
    try:
        point = GeoPoint(lon, lat)
    except ValidationError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    if not state.config.bbox.contains(point):
        raise HTTPException(status_code=400, detail="point outside the covered bounding box")
    deepest = quadkey_for(point, state.config.bbox, state.config.max_depth)
    by_cell = {record.cell: record for record in records}
    for depth in range(state.config.max_depth + 1):
        record = by_cell.get(deepest[:depth])
        if record is not None:
            return record
    return None


def run(config: ServiceConfig | None = None) -> None:  # pragma: no cover - thin wrapper
    import uvicorn

    cfg = config or ServiceConfig.from_env()
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port)
