"""Synthetic field sampling, trace generation, and fusion evaluation."""

import math
import statistics

import pytest

from urbanaq.aqi import BreakpointTable
from urbanaq.errors import ValidationError
from urbanaq.fusion import build_maqi_records
from urbanaq.grid import BoundingBox, GridConfig, assign_time_slot, build_adaptive_grid, cell_bounds
from urbanaq.model import FusionWeights, GeoPoint, PollutantKind, SourceClass, parse_timestamp
from urbanaq.records import write_traces
from urbanaq.sim import (
    GaussianPlume,
    MobilityConfig,
    NoiseModel,
    SyntheticField,
    evaluate_fusion,
    generate_samples,
    generate_traces,
)

BBOX = BoundingBox(west=113.7, south=29.9, east=115.1, north=31.4)
SLOT = assign_time_slot(parse_timestamp("2017-05-15 12:30:01"))
TABLE = BreakpointTable.default()


def demo_field():
    return SyntheticField(
        plumes=(
            GaussianPlume(GeoPoint(114.15, 30.4), {PollutantKind.PM25: 120.0}, 0.22),
            GaussianPlume(GeoPoint(114.7, 31.0), {PollutantKind.PM25: 90.0}, 0.30),
            GaussianPlume(GeoPoint(114.45, 30.7), {PollutantKind.PM25: 60.0}, 0.18),
        ),
        background={PollutantKind.PM25: 30.0},
    )


class TestGenerateSamples:
    def test_zero_noise_reproduces_field(self):
        field = demo_field()
        quiet = NoiseModel(sigma={cls: 0.0 for cls in SourceClass})
        samples = generate_samples(field, quiet, {SourceClass.IOT_SENSING: 50}, SLOT, seed=1, bbox=BBOX)
        assert len(samples) == 50
        for sample in samples:
            truth = field.value_at(sample.location)[PollutantKind.PM25]
            assert sample.values.get(PollutantKind.PM25) == pytest.approx(truth, rel=1e-12)
            assert SLOT.contains(sample.timestamp)

    def test_zero_counts_empty(self):
        assert generate_samples(demo_field(), NoiseModel(), {}, SLOT, seed=1, bbox=BBOX) == []

    def test_seeded_determinism(self):
        kwargs = dict(
            fieldspec=demo_field(),
            noise=NoiseModel(),
            counts={cls: 30 for cls in SourceClass},
            slot=SLOT,
            seed=77,
            bbox=BBOX,
        )
        assert generate_samples(**kwargs) == generate_samples(**kwargs)

    def test_values_clamped_non_negative(self):
        loud = NoiseModel(sigma={cls: 5.0 for cls in SourceClass})
        samples = generate_samples(
            demo_field(), loud, {SourceClass.CROWDSOURCED: 200}, SLOT, seed=3, bbox=BBOX
        )
        assert all(s.values.get(PollutantKind.PM25) >= 0 for s in samples)

    def test_dropout_nulls_pollutants(self):
        field = SyntheticField(background={PollutantKind.PM25: 30.0, PollutantKind.O3: 80.0})
        noise = NoiseModel(dropout={SourceClass.CROWDSOURCED: 0.5})
        samples = generate_samples(
            field, noise, {SourceClass.CROWDSOURCED: 200}, SLOT, seed=5, bbox=BBOX
        )
        assert any(s.values.get(PollutantKind.O3) is None for s in samples)
        assert all(s.values.present for s in samples)

    def test_full_dropout_rejected(self):
        noise = NoiseModel(dropout={SourceClass.CROWDSOURCED: 1.0})
        with pytest.raises(ValidationError):
            generate_samples(
                demo_field(), noise, {SourceClass.CROWDSOURCED: 1}, SLOT, seed=1, bbox=BBOX
            )


class TestEvaluateFusion:
    def test_zero_noise_rmse_below_intra_cell_variation(self):
        field = demo_field()
        quiet = NoiseModel(sigma={cls: 0.0 for cls in SourceClass})
        samples = generate_samples(
            field, quiet, {cls: 150 for cls in SourceClass}, SLOT, seed=11, bbox=BBOX
        )
        config = GridConfig(bbox=BBOX)
        grid = build_adaptive_grid(samples, config, SLOT)
        records = build_maqi_records(grid, FusionWeights(0.2, 0.5, 0.3), TABLE)
        metrics = evaluate_fusion(records, field, total_cells=len(grid.cells))
        # Dense-grid oracle: the worst |field - field(centroid)| over any cell
        # bounds the error of any convex combination of in-cell samples.
        worst = 0.0
        for record in records:
            rect = cell_bounds(record.cell, BBOX)
            truth_centroid = field.value_at(record.centroid)[PollutantKind.PM25]
            for i in range(11):
                for j in range(11):
                    p = GeoPoint(
                        rect.west + (rect.east - rect.west) * i / 10,
                        rect.south + (rect.north - rect.south) * j / 10,
                    )
                    deviation = abs(field.value_at(p)[PollutantKind.PM25] - truth_centroid)
                    worst = max(worst, deviation)
        assert metrics.rmse[PollutantKind.PM25] <= worst
        assert metrics.coverage == 1.0

    def test_empty_records_zero_coverage(self):
        metrics = evaluate_fusion([], demo_field())
        assert metrics.coverage == 0.0
        assert metrics.rmse == {}

    def test_noise_ordering_over_seeds(self):
        field = demo_field()
        noise = NoiseModel()
        counts = {cls: 200 for cls in SourceClass}
        config = GridConfig(bbox=BBOX)
        weights = {
            "calibrated": FusionWeights(0.2, 0.5, 0.3),
            "met": FusionWeights(0, 1, 0),
            "crowd": FusionWeights(1, 0, 0),
        }
        rmse = {name: [] for name in weights}
        for seed in range(20):
            samples = generate_samples(field, noise, counts, SLOT, seed, bbox=BBOX)
            grid = build_adaptive_grid(samples, config, SLOT)
            for name, w in weights.items():
                records = build_maqi_records(grid, w, TABLE)
                metrics = evaluate_fusion(records, field, total_cells=len(grid.cells))
                rmse[name].append(metrics.rmse[PollutantKind.PM25])
        mean = {name: statistics.mean(vals) for name, vals in rmse.items()}
        assert mean["calibrated"] <= 1.05 * mean["met"]
        assert mean["met"] <= mean["crowd"]

    def test_coverage_monotone_in_crowd_count(self):
        field = demo_field()
        noise = NoiseModel()
        config = GridConfig(bbox=BBOX)
        means = []
        for n_crowd in (0, 40, 400):
            coverages = []
            for seed in range(5):
                samples = generate_samples(
                    field, noise, {SourceClass.CROWDSOURCED: n_crowd}, SLOT, seed, bbox=BBOX
                )
                grid = build_adaptive_grid(samples, config, SLOT)
                records = build_maqi_records(grid, FusionWeights(0.2, 0.5, 0.3), TABLE)
                metrics = evaluate_fusion(records, field, total_cells=len(grid.cells))
                coverages.append(metrics.coverage)
            means.append(statistics.mean(coverages))
        assert means == sorted(means)


class TestGenerateTraces:
    def test_zero_residents(self):
        assert generate_traces(0, MobilityConfig(bbox=BBOX), seed=1) == []

    def test_fixed_speed_range(self):
        config = MobilityConfig(bbox=BBOX, speed_min=1.0, speed_max=1.0, n_points=30)
        traces = generate_traces(3, config, seed=2)
        for trace in traces:
            assert all(p.speed == 1.0 for p in trace.points)

    def test_seeded_traces_byte_identical(self):
        config = MobilityConfig(bbox=BBOX, n_points=40)
        a = write_traces(generate_traces(4, config, seed=9))
        b = write_traces(generate_traces(4, config, seed=9))
        assert a == b

    def test_points_stay_in_bbox(self):
        config = MobilityConfig(bbox=BBOX, speed_max=30.0, n_points=200)
        for trace in generate_traces(3, config, seed=5):
            for p in trace.points:
                assert BBOX.contains(p.location)

    def test_timestamps_strictly_increase(self):
        config = MobilityConfig(bbox=BBOX, n_points=20)
        for trace in generate_traces(2, config, seed=6):
            times = [p.timestamp for p in trace.points]
            assert times == sorted(set(times))
