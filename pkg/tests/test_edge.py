"""Edge ingestion, batch idempotence, and edge/remote fusion equivalence.

The equivalence oracle is direct fusion over the union of raw samples;
the edge path must reproduce it exactly for AQI and within 1e-9 for
concentrations regardless of how samples are partitioned across edges.
"""

import random
from datetime import timedelta

import pytest

from urbanaq.aqi import BreakpointTable
from urbanaq.edge import EdgeBatch, EdgeNode, RemoteStore
from urbanaq.errors import OutOfBoundingBox, SlotStillOpen, UnknownSlot
from urbanaq.fusion import build_maqi_records
from urbanaq.grid import BoundingBox, GridConfig, assign_time_slot, build_adaptive_grid
from urbanaq.model import (
    FusionWeights,
    GeoPoint,
    PollutantKind,
    PollutantVector,
    SensorSample,
    SourceClass,
    parse_timestamp,
)

BBOX = BoundingBox(west=113.7, south=29.9, east=115.1, north=31.4)
CONFIG = GridConfig(bbox=BBOX, split_threshold=16)
WEIGHTS = FusionWeights(0.2, 0.5, 0.3)
TABLE = BreakpointTable.default()
TS = parse_timestamp("2017-05-15 12:30:01")
SLOT = assign_time_slot(TS)
AFTER = SLOT.end + timedelta(minutes=5)


def make_sample(i, lon=114.0, lat=30.5, cls=SourceClass.CROWDSOURCED, pm25=10.0, ts=TS):
    return SensorSample(
        sample_id=f"e-{i:05d}",
        location=GeoPoint(lon, lat),
        timestamp=ts,
        source=cls,
        values=PollutantVector(pm25=pm25),
    )


def random_samples(rng, n):
    return [
        SensorSample(
            sample_id=f"r-{i:05d}",
            location=GeoPoint(rng.uniform(BBOX.west, BBOX.east), rng.uniform(BBOX.south, BBOX.north)),
            timestamp=TS,
            source=rng.choice(list(SourceClass)),
            values=PollutantVector(
                pm25=rng.uniform(0, 300),
                o3=rng.uniform(0, 300) if rng.random() < 0.7 else None,
            ),
        )
        for i in range(n)
    ]


class TestEdgeIngest:
    def test_first_sample_counts_once(self):
        edge = EdgeNode("edge-0", CONFIG)
        assert edge.ingest(make_sample(1))
        batch = edge.flush(SLOT, now=AFTER)
        assert sum(s.total_samples for s in batch.stats.values()) == 1

    def test_duplicate_id_ignored(self):
        edge = EdgeNode("edge-0", CONFIG)
        sample = make_sample(1)
        assert edge.ingest(sample)
        assert not edge.ingest(sample)
        batch = edge.flush(SLOT, now=AFTER)
        assert sum(s.total_samples for s in batch.stats.values()) == 1

    def test_same_cell_sums_componentwise(self):
        edge = EdgeNode("edge-0", CONFIG)
        edge.ingest(make_sample(1, pm25=10.0))
        edge.ingest(make_sample(2, pm25=30.0))
        batch = edge.flush(SLOT, now=AFTER)
        (stats,) = batch.stats.values()
        assert stats.sums[SourceClass.CROWDSOURCED][PollutantKind.PM25] == 40.0
        assert stats.counts[SourceClass.CROWDSOURCED][PollutantKind.PM25] == 2

    def test_out_of_bbox(self):
        edge = EdgeNode("edge-0", CONFIG)
        with pytest.raises(OutOfBoundingBox):
            edge.ingest(make_sample(1, lon=100.0))


class TestEdgeFlush:
    def test_empty_slot_is_empty_batch(self):
        edge = EdgeNode("edge-0", CONFIG)
        batch = edge.flush(SLOT, now=AFTER)
        assert batch.stats == {}
        assert batch.sample_ids == frozenset()

    def test_open_slot_rejected(self):
        edge = EdgeNode("edge-0", CONFIG)
        with pytest.raises(SlotStillOpen):
            edge.flush(SLOT, now=SLOT.start + timedelta(minutes=30))

    def test_counts_sum_to_ingested(self):
        edge = EdgeNode("edge-0", CONFIG)
        rng = random.Random(4)
        for sample in random_samples(rng, 40):
            edge.ingest(sample)
        batch = edge.flush(SLOT, now=AFTER)
        assert sum(s.total_samples for s in batch.stats.values()) == 40
        assert len(batch.sample_ids) == 40

    def test_reflush_is_identical(self):
        edge = EdgeNode("edge-0", CONFIG)
        for sample in random_samples(random.Random(5), 10):
            edge.ingest(sample)
        first = edge.flush(SLOT, now=AFTER)
        second = edge.flush(SLOT, now=AFTER)
        assert first.batch_id == second.batch_id
        assert first.to_lines() == second.to_lines()

    def test_acknowledge_drops_state(self):
        edge = EdgeNode("edge-0", CONFIG)
        edge.ingest(make_sample(1))
        batch = edge.flush(SLOT, now=AFTER)
        edge.acknowledge(batch)
        assert edge.flush(SLOT, now=AFTER).stats == {}


class TestBatchWireFormat:
    def test_round_trip(self):
        edge = EdgeNode("edge-0", CONFIG)
        for sample in random_samples(random.Random(6), 25):
            edge.ingest(sample)
        batch = edge.flush(SLOT, now=AFTER)
        again = EdgeBatch.from_lines(batch.to_lines())
        assert again.batch_id == batch.batch_id
        assert again.edge_id == batch.edge_id
        assert again.slot == batch.slot
        assert again.sample_ids == batch.sample_ids
        assert set(again.stats) == set(batch.stats)
        for quadkey in batch.stats:
            assert again.stats[quadkey] == batch.stats[quadkey]


class TestRemoteMerge:
    def test_disjoint_union(self):
        store = RemoteStore()
        e0, e1 = EdgeNode("e0", CONFIG), EdgeNode("e1", CONFIG)
        e0.ingest(make_sample(1, lon=113.8, lat=31.3))
        e1.ingest(make_sample(2, lon=115.0, lat=30.0))
        store.merge(e0.flush(SLOT, now=AFTER))
        store.merge(e1.flush(SLOT, now=AFTER))
        assert len(store.stats_for(SLOT)) == 2
        assert store.total_counted(SLOT) == 2

    def test_same_cell_adds(self):
        store = RemoteStore()
        e0, e1 = EdgeNode("e0", CONFIG), EdgeNode("e1", CONFIG)
        e0.ingest(make_sample(1, pm25=10.0))
        e1.ingest(make_sample(2, pm25=30.0))
        store.merge(e0.flush(SLOT, now=AFTER))
        store.merge(e1.flush(SLOT, now=AFTER))
        (stats,) = store.stats_for(SLOT).values()
        assert stats.sums[SourceClass.CROWDSOURCED][PollutantKind.PM25] == 40.0
        assert stats.sample_counts[SourceClass.CROWDSOURCED] == 2

    def test_redelivery_noop(self):
        store = RemoteStore()
        edge = EdgeNode("e0", CONFIG)
        edge.ingest(make_sample(1))
        batch = edge.flush(SLOT, now=AFTER)
        assert store.merge(batch)
        snapshot = store.stats_for(SLOT)
        assert not store.merge(batch)
        assert store.stats_for(SLOT) == snapshot
        assert store.total_counted(SLOT) == 1

    def test_permutation_of_batches_identical_store(self):
        rng = random.Random(7)
        samples = random_samples(rng, 60)
        batches = []
        for i in range(4):
            edge = EdgeNode(f"e{i}", CONFIG)
            for sample in samples[i::4]:
                edge.ingest(sample)
            batches.append(edge.flush(SLOT, now=AFTER))
        reference = None
        for _ in range(6):
            order = batches[:]
            rng.shuffle(order)
            store = RemoteStore()
            for batch in order:
                store.merge(batch)
            snapshot = {
                quadkey: stats.to_obj() for quadkey, stats in store.stats_for(SLOT).items()
            }
            if reference is None:
                reference = snapshot
            else:
                assert snapshot == reference

    def test_count_conservation(self):
        rng = random.Random(8)
        samples = random_samples(rng, 90)
        store = RemoteStore()
        for i in range(3):
            edge = EdgeNode(f"e{i}", CONFIG)
            for sample in samples[i::3]:
                edge.ingest(sample)
            batch = edge.flush(SLOT, now=AFTER)
            store.merge(batch)
            store.merge(batch)  # re-delivery must not inflate counts
        assert store.total_counted(SLOT) == len(samples) == store.sample_count(SLOT)


class TestRemoteFuse:
    def test_unknown_slot(self):
        store = RemoteStore()
        with pytest.raises(UnknownSlot):
            store.fuse(SLOT, CONFIG, WEIGHTS, TABLE)

    @pytest.mark.parametrize("n_edges", [1, 3])
    def test_equivalent_to_direct_fusion(self, n_edges):
        rng = random.Random(100 + n_edges)
        samples = random_samples(rng, 120)
        direct = build_maqi_records(build_adaptive_grid(samples, CONFIG, SLOT), WEIGHTS, TABLE)
        store = RemoteStore()
        for i in range(n_edges):
            edge = EdgeNode(f"e{i}", CONFIG)
            for sample in samples[i::n_edges]:
                edge.ingest(sample)
            store.merge(edge.flush(SLOT, now=AFTER))
        merged = store.fuse(SLOT, CONFIG, WEIGHTS, TABLE)
        assert [r.cell for r in merged] == [r.cell for r in direct]
        for a, b in zip(merged, direct):
            assert a.aqi == b.aqi
            assert a.primary_pollutant == b.primary_pollutant
            assert a.sample_counts == b.sample_counts
            for kind in PollutantKind:
                va, vb = a.values.get(kind), b.values.get(kind)
                if va is None or vb is None:
                    assert va == vb
                else:
                    assert va == pytest.approx(vb, abs=1e-9)

    def test_fuse_at_depth_uniform_cells(self):
        rng = random.Random(77)
        store = RemoteStore()
        edge = EdgeNode("e0", CONFIG)
        for sample in random_samples(rng, 50):
            edge.ingest(sample)
        store.merge(edge.flush(SLOT, now=AFTER))
        records = store.fuse_at_depth(SLOT, 3, CONFIG, WEIGHTS, TABLE)
        assert records
        assert all(len(r.cell) == 3 for r in records)
        total = sum(sum(r.sample_counts.values()) for r in records)
        assert total == 50
