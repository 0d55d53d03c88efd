"""Command-line interface: ingest, fuse, serve, simulate, evaluate, assign-tasks.

Output is deterministic tabular or line-delimited text on stdout; any
error exits non-zero (2 for usage errors, 1 for runtime failures).
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import timedelta
from pathlib import Path
from typing import Sequence

from . import records as wire
from .errors import UrbanAqError, ValidationError
from .fusion import build_maqi_records
from .grid import BoundingBox, GridConfig, build_adaptive_grid
from .model import FusionWeights, GeoPoint, PollutantKind, SourceClass
from .service import CONFIG_ENV_VAR, ServiceConfig
from .sim import (
    GaussianPlume,
    MobilityConfig,
    NoiseModel,
    SyntheticField,
    evaluate_fusion,
    generate_samples,
    generate_traces,
)
from .tasking import CellScheme, assign_tasks, build_association_matrix, extract_mobility_features


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urbanaq", description=__doc__)
    parser.add_argument("--config", help=f"service config file (or ${CONFIG_ENV_VAR})")
    parser.add_argument("--spool", help="override the spool directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="validate sample files and append them to the spool")
    p_ingest.add_argument("files", nargs="+")

    p_fuse = sub.add_parser("fuse", help="fuse one slot from the spooled samples")
    p_fuse.add_argument("slot", help="slot start, e.g. 2017-05-15T12:00:00Z")
    p_fuse.add_argument("--samples", help="read this sample file instead of the spool")

    sub.add_parser("serve", help="run the HTTP service")

    p_sim = sub.add_parser("simulate", help="generate synthetic samples and traces")
    p_sim.add_argument("scenario", help="scenario config file (JSON)")
    p_sim.add_argument("--out", default=".", help="output directory")

    p_eval = sub.add_parser("evaluate", help="run seeded scenarios and print an RMSE table")
    p_eval.add_argument("scenario", help="scenario config file (JSON)")

    p_tasks = sub.add_parser("assign-tasks", help="assign sensing tasks from mobility traces")
    p_tasks.add_argument("slot")
    p_tasks.add_argument("--traces", required=True, help="trace CSV file")
    p_tasks.add_argument("--points", required=True, help="comma-separated sensing-point quadkeys")
    p_tasks.add_argument("--k", type=int, default=1, help="residents per point")
    p_tasks.add_argument("--q", type=int, default=1, help="max tasks per resident")
    p_tasks.add_argument("--window", type=int, default=1, help="trailing slots in the matrix")
    p_tasks.add_argument("--depth", type=int, default=8, help="cell depth of the sensing points")
    return parser


def _load_config(args: argparse.Namespace) -> ServiceConfig:
    config = ServiceConfig.from_file(args.config) if args.config else ServiceConfig.from_env()
    if args.spool:
        config = config.with_overrides(spool_dir=args.spool)
    return config


def _cmd_ingest(args: argparse.Namespace, config: ServiceConfig) -> int:
    spool_dir = config.spool_dir or "."
    Path(spool_dir).mkdir(parents=True, exist_ok=True)
    spool_path = Path(spool_dir) / "samples.ndjson"
    total_ok = total_bad = 0
    with open(spool_path, "a", encoding="utf-8") as spool:
        for name in args.files:
            ok = bad = 0
            text = Path(name).read_text(encoding="utf-8")
            for index, obj in wire.iter_ndjson(text):
                try:
                    sample = wire.sample_from_obj(obj)
                except ValidationError as exc:
                    print(f"{name}:{index}: rejected {type(exc).__name__}")
                    bad += 1
                    continue
                spool.write(wire.encode_ndjson([wire.sample_to_obj(sample)]))
                ok += 1
            print(f"{name}: accepted {ok} rejected {bad}")
            total_ok += ok
            total_bad += bad
    print(f"total: accepted {total_ok} rejected {total_bad}")
    return 0 if total_bad == 0 else 1


_FUSE_COLUMNS = ["cell", "lon", "lat", "slot", "aqi", "primary"] + [k.value for k in PollutantKind]


def _cmd_fuse(args: argparse.Namespace, config: ServiceConfig) -> int:
    source = args.samples or (Path(config.spool_dir or ".") / "samples.ndjson")
    path = Path(source)
    if not path.is_file():
        print(f"no sample file at {path}", file=sys.stderr)
        return 1
    slot = wire.parse_slot(args.slot, config.slot_duration)
    samples = []
    seen: set[str] = set()
    for _, obj in wire.iter_ndjson(path.read_text(encoding="utf-8")):
        sample = wire.sample_from_obj(obj)
        if sample.sample_id in seen:
            continue
        seen.add(sample.sample_id)
        if slot.contains(sample.timestamp):
            samples.append(sample)
    grid = build_adaptive_grid(samples, config.grid_config(), slot)
    records = build_maqi_records(grid, config.weights, config.table())
    print("\t".join(_FUSE_COLUMNS))
    for record in records:
        row = [
            record.cell,
            f"{record.centroid.longitude:.4f}",
            f"{record.centroid.latitude:.4f}",
            record.slot.label(),
            str(record.aqi),
            record.primary_pollutant.value if record.primary_pollutant else "-",
        ]
        for kind in PollutantKind:
            value = record.values.get(kind)
            row.append("-" if value is None else f"{value:g}")
        print("\t".join(row))
    return 0


def _scenario_from_file(path: str) -> dict:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "bbox" in raw:
        west, south, east, north = raw["bbox"]
        bbox = BoundingBox(west=west, south=south, east=east, north=north)
    else:
        bbox = BoundingBox(west=113.7, south=29.9, east=115.1, north=31.4)
    field_spec = raw.get("field", {})
    background = {
        PollutantKind(k): float(v) for k, v in field_spec.get("background", {}).items()
    }
    plumes = tuple(
        GaussianPlume(
            center=GeoPoint(*p["center"]),
            amplitude={PollutantKind(k): float(v) for k, v in p["amplitude"].items()},
            sigma_deg=float(p["sigma_deg"]),
        )
        for p in field_spec.get("plumes", [])
    )
    field = SyntheticField(plumes=plumes, background=background)
    noise_spec = raw.get("noise", {})
    noise_kwargs = {}
    if "sigma" in noise_spec:
        noise_kwargs["sigma"] = {SourceClass.parse(k): float(v) for k, v in noise_spec["sigma"].items()}
    if "dropout" in noise_spec:
        noise_kwargs["dropout"] = {
            SourceClass.parse(k): float(v) for k, v in noise_spec["dropout"].items()
        }
    noise = NoiseModel(**noise_kwargs)
    counts = {SourceClass.parse(k): int(v) for k, v in raw.get("counts", {}).items()}
    weights = {
        name: FusionWeights(*w) for name, w in raw.get("weights", {"default": [0.2, 0.5, 0.3]}).items()
    }
    return {
        "bbox": bbox,
        "field": field,
        "noise": noise,
        "counts": counts,
        "weights": weights,
        "seeds": [int(s) for s in raw.get("seeds", [0])],
        "slot": wire.parse_slot(raw.get("slot", "2017-05-15T12:00:00Z")),
        "residents": int(raw.get("residents", 0)),
    }


def _cmd_simulate(args: argparse.Namespace, config: ServiceConfig) -> int:
    scenario = _scenario_from_file(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = scenario["seeds"][0]
    samples = generate_samples(
        scenario["field"], scenario["noise"], scenario["counts"], scenario["slot"], seed,
        bbox=scenario["bbox"],
    )
    (out / "samples.ndjson").write_text(
        wire.encode_ndjson(wire.sample_to_obj(s) for s in samples), encoding="utf-8"
    )
    print(f"samples.ndjson: {len(samples)} samples (seed {seed})")
    if scenario["residents"] > 0:
        traces = generate_traces(
            scenario["residents"], MobilityConfig(bbox=scenario["bbox"]), seed
        )
        (out / "traces.csv").write_text(wire.write_traces(traces), encoding="utf-8")
        print(f"traces.csv: {len(traces)} residents")
    return 0


def _cmd_evaluate(args: argparse.Namespace, config: ServiceConfig) -> int:
    scenario = _scenario_from_file(args.scenario)
    grid_config = GridConfig(
        bbox=scenario["bbox"],
        split_threshold=config.split_threshold,
        max_depth=config.max_depth,
        min_cell_deg=config.min_cell_deg,
    )
    table = config.table()
    print("seed,weights,pollutant,rmse,coverage,cells")
    means: dict[tuple[str, PollutantKind], list[float]] = {}
    for seed in scenario["seeds"]:
        samples = generate_samples(
            scenario["field"], scenario["noise"], scenario["counts"], scenario["slot"], seed,
            bbox=scenario["bbox"],
        )
        grid = build_adaptive_grid(samples, grid_config, scenario["slot"])
        for name, weights in sorted(scenario["weights"].items()):
            records = build_maqi_records(grid, weights, table)
            metrics = evaluate_fusion(records, scenario["field"], total_cells=len(grid.cells))
            for kind in sorted(metrics.rmse, key=lambda k: k.value):
                rmse = metrics.rmse[kind]
                means.setdefault((name, kind), []).append(rmse)
                print(
                    f"{seed},{name},{kind.value},{rmse:.6f},{metrics.coverage:.4f},{metrics.cells}"
                )
    for (name, kind), values in sorted(means.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        print(f"mean,{name},{kind.value},{sum(values) / len(values):.6f},,")
    return 0


def _cmd_assign_tasks(args: argparse.Namespace, config: ServiceConfig) -> int:
    text = Path(args.traces).read_text(encoding="utf-8")
    traces = wire.read_traces(text)
    if not traces:
        print("no traces found", file=sys.stderr)
        return 1
    slot = wire.parse_slot(args.slot, config.slot_duration)
    scheme = CellScheme(bbox=config.bbox, depth=args.depth, slot_duration=config.slot_duration)
    features = [extract_mobility_features(trace, scheme) for trace in traces]
    points = [p for p in args.points.split(",") if p]
    matrix = build_association_matrix(features, points, window=args.window)
    assignment = assign_tasks(matrix, credits={}, k=args.k, q=args.q, slot=slot)
    print("point\tresidents")
    for point in sorted(assignment.assignments):
        chosen = assignment.assignments[point]
        print(f"{point}\t{','.join(chosen) if chosen else '-'}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "ingest":
            return _cmd_ingest(args, config)
        if args.command == "fuse":
            return _cmd_fuse(args, config)
        if args.command == "serve":
            from .service import run

            run(config)
            return 0
        if args.command == "simulate":
            return _cmd_simulate(args, config)
        if args.command == "evaluate":
            return _cmd_evaluate(args, config)
        if args.command == "assign-tasks":
            return _cmd_assign_tasks(args, config)
    except (UrbanAqError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable: argparse enforces the subcommand set")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
