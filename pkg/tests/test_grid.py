"""Quadkey addressing, time slots, and the density-adaptive quadtree.

The tiling and ownership oracles re-derive cell rectangles from quadkey
digits and apply the west/south-edge ownership convention directly, so
they do not share code with Grid.leaf_for.
"""

import random
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbanaq.errors import OutOfBoundingBox
from urbanaq.grid import (
    BoundingBox,
    GridConfig,
    assign_time_slot,
    build_adaptive_grid,
    cell_bounds,
    cell_center,
    deep_stats_for,
    partition_by_slot,
    quadkey_for,
)
from urbanaq.model import GeoPoint, PollutantVector, SensorSample, SourceClass, parse_timestamp

BBOX = BoundingBox(west=113.7, south=29.9, east=115.1, north=31.4)
SLOT_TS = parse_timestamp("2017-05-15 12:30:01")


def make_sample(i, lon, lat, source=SourceClass.CROWDSOURCED, ts=SLOT_TS, pm25=10.0):
    return SensorSample(
        sample_id=f"s-{i:05d}",
        location=GeoPoint(lon, lat),
        timestamp=ts,
        source=source,
        values=PollutantVector(pm25=pm25),
    )


def random_samples(rng, n, bbox=BBOX):
    return [
        make_sample(
            i,
            rng.uniform(bbox.west, bbox.east),
            rng.uniform(bbox.south, bbox.north),
            source=rng.choice(list(SourceClass)),
            pm25=rng.uniform(0, 200),
        )
        for i in range(n)
    ]


def owns(quadkey: str, bbox: BoundingBox, point: GeoPoint) -> bool:
    """Ownership oracle: recompute the rect and apply the edge convention."""
    rect = cell_bounds(quadkey, bbox)
    lon_ok = rect.west <= point.longitude < rect.east or (
        rect.east == bbox.east and point.longitude == rect.east
    )
    lat_ok = rect.south <= point.latitude < rect.north or (
        rect.north == bbox.north and point.latitude == rect.north
    )
    return lon_ok and lat_ok


class TestTimeSlots:
    def test_interior_point(self):
        slot = assign_time_slot(parse_timestamp("2017-05-15 12:30:01"))
        assert slot.label() == "2017-05-15(12:00-13:00)"

    def test_boundary_belongs_to_new_slot(self):
        slot = assign_time_slot(parse_timestamp("2017-05-15 12:00:00"))
        assert slot.label() == "2017-05-15(12:00-13:00)"

    def test_last_second(self):
        slot = assign_time_slot(parse_timestamp("2017-05-15 00:59:59"))
        assert slot.label() == "2017-05-15(00:00-01:00)"

    @given(st.integers(min_value=0, max_value=2**31 - 1), st.sampled_from([900, 3600, 7200]))
    def test_slot_always_contains_its_timestamp(self, epoch, dur):
        ts = datetime.fromtimestamp(epoch, tz=timezone.utc)
        slot = assign_time_slot(ts, timedelta(seconds=dur))
        assert slot.contains(ts)
        assert int(slot.start.timestamp()) % dur == 0

    def test_partition_by_slot_groups_and_orders(self):
        samples = [
            make_sample(0, 114.0, 30.0, ts=parse_timestamp("2017-05-15 13:10:00")),
            make_sample(1, 114.0, 30.0, ts=parse_timestamp("2017-05-15 12:10:00")),
            make_sample(2, 114.0, 30.0, ts=parse_timestamp("2017-05-15 12:50:00")),
        ]
        groups = partition_by_slot(samples)
        labels = [slot.label() for slot in groups]
        assert labels == ["2017-05-15(12:00-13:00)", "2017-05-15(13:00-14:00)"]
        assert len(groups[list(groups)[0]]) == 2


class TestQuadkeys:
    def test_root_is_empty_string(self):
        assert quadkey_for(GeoPoint(114.0, 30.5), BBOX, 0) == ""

    def test_quadrant_digits(self):
        # NW, NE, SW, SE around the bbox center (114.4, 30.65).
        assert quadkey_for(GeoPoint(114.0, 31.0), BBOX, 1) == "0"
        assert quadkey_for(GeoPoint(115.0, 31.0), BBOX, 1) == "1"
        assert quadkey_for(GeoPoint(114.0, 30.0), BBOX, 1) == "2"
        assert quadkey_for(GeoPoint(115.0, 30.0), BBOX, 1) == "3"

    def test_out_of_box(self):
        with pytest.raises(OutOfBoundingBox):
            quadkey_for(GeoPoint(100.0, 30.0), BBOX, 5)

    @given(
        lon=st.floats(min_value=113.7, max_value=115.1, allow_nan=False),
        lat=st.floats(min_value=29.9, max_value=31.4, allow_nan=False),
        depth=st.integers(min_value=1, max_value=16),
    )
    def test_point_owned_by_its_cell(self, lon, lat, depth):
        point = GeoPoint(lon, lat)
        quadkey = quadkey_for(point, BBOX, depth)
        assert len(quadkey) == depth
        assert owns(quadkey, BBOX, point)

    def test_center_round_trips(self):
        for quadkey in ("", "0", "31", "203", "0123"):
            center = cell_center(quadkey, BBOX)
            assert quadkey_for(center, BBOX, len(quadkey)) == quadkey


class TestAdaptiveGrid:
    def test_few_samples_single_root(self):
        rng = random.Random(1)
        config = GridConfig(bbox=BBOX, split_threshold=64)
        grid = build_adaptive_grid(random_samples(rng, 10), config)
        assert list(grid.cells) == [""]
        assert grid.cells[""].total_samples == 10

    def test_empty_input_empty_grid(self):
        grid = build_adaptive_grid([], GridConfig(bbox=BBOX))
        assert grid.is_empty
        assert grid.leaf_for(GeoPoint(114.0, 30.0)) is None

    def test_clustered_quadrant_refines_deeper(self):
        # 200 samples packed into a small blob inside the NW quadrant.
        rng = random.Random(7)
        samples = [
            make_sample(i, rng.uniform(113.8, 113.85), rng.uniform(31.1, 31.15)) for i in range(200)
        ]
        config = GridConfig(bbox=BBOX, split_threshold=64)
        grid = build_adaptive_grid(samples, config)
        # Brute-force split-rule oracle: counts per candidate cell.
        def oracle_depth(prefix):
            inside = [
                s for s in samples if owns(prefix, BBOX, s.location)
            ] if prefix else samples
            if (
                len(inside) <= config.split_threshold
                or len(prefix) >= config.max_depth
                or config.cell_side(len(prefix)) <= config.min_cell_deg
            ):
                return {prefix}
            leaves = set()
            for digit in "0123":
                leaves |= oracle_depth(prefix + digit)
            return leaves

        assert set(grid.cells) == oracle_depth("")
        empty_quadrants = [q for q in ("1", "2", "3") if q in grid.cells]
        hot_leaves = [q for q, s in grid.cells.items() if s.total_samples > 0]
        assert empty_quadrants, "expected untouched quadrants to stay at depth 1"
        assert min(len(q) for q in hot_leaves) >= 3

    def test_tiling_and_unique_ownership(self):
        rng = random.Random(42)
        config = GridConfig(bbox=BBOX, split_threshold=16)
        for _ in range(20):
            samples = random_samples(rng, rng.randrange(0, 120))
            grid = build_adaptive_grid(samples, config)
            if not samples:
                assert grid.is_empty
                continue
            area = sum(
                cell_bounds(q, BBOX).width * cell_bounds(q, BBOX).height for q in grid.cells
            )
            assert area == pytest.approx(BBOX.width * BBOX.height, rel=1e-9)
            for sample in samples:
                owners = [q for q in grid.cells if owns(q, BBOX, sample.location)]
                assert len(owners) == 1
                assert grid.leaf_for(sample.location) == owners[0]

    def test_permutation_invariance_bitwise(self):
        rng = random.Random(9)
        samples = random_samples(rng, 150)
        config = GridConfig(bbox=BBOX, split_threshold=16)
        grid_a = build_adaptive_grid(samples, config)
        shuffled = samples[:]
        rng.shuffle(shuffled)
        grid_b = build_adaptive_grid(shuffled, config)
        assert set(grid_a.cells) == set(grid_b.cells)
        for quadkey in grid_a.cells:
            assert grid_a.cells[quadkey] == grid_b.cells[quadkey]

    def test_density_monotonicity(self):
        # Adding samples never makes the leaf containing them coarser.
        rng = random.Random(3)
        config = GridConfig(bbox=BBOX, split_threshold=32)
        base = random_samples(rng, 80)
        probe = GeoPoint(113.95, 31.05)
        extra = [
            make_sample(1000 + i, rng.uniform(113.9, 114.0), rng.uniform(31.0, 31.1))
            for i in range(120)
        ]
        before = build_adaptive_grid(base, config).leaf_for(probe)
        after = build_adaptive_grid(base + extra, config).leaf_for(probe)
        assert len(after) >= len(before)

    def test_counts_conserved(self):
        rng = random.Random(11)
        samples = random_samples(rng, 200)
        grid = build_adaptive_grid(samples, GridConfig(bbox=BBOX, split_threshold=16))
        assert sum(s.total_samples for s in grid.cells.values()) == len(samples)

    def test_deep_stats_depth(self):
        config = GridConfig(bbox=BBOX, split_threshold=16, max_depth=10)
        deep = deep_stats_for([make_sample(0, 114.0, 30.5)], config)
        (quadkey,) = deep
        assert len(quadkey) == 10
