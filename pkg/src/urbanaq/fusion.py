"""Weighted multi-source fusion of per-cell statistics into fused records.

Every pollutant is fused independently: the per-class means are combined
with the configured class weights, renormalized over the classes that
actually reported that pollutant in the cell.  Renormalization keeps a
constant field invariant (a pollutant read identically by all sources
fuses to that same value) and degrades gracefully when a class is absent.
"""

from __future__ import annotations

from .aqi import BreakpointTable, compute_aqi
from .errors import NoData, ValidationError
from .grid import CellStats, Grid, cell_center
from .model import FusionWeights, MaqiRecord, PollutantKind, PollutantVector, SourceClass


def fuse_cell(stats: CellStats, weights: FusionWeights) -> PollutantVector:
    """Fuse one cell's statistics into a single pollutant vector.

    Per pollutant: the weighted average of the class means, with weights
    renormalized over the classes whose count is positive for that
    pollutant.  If every present class carries zero weight, the classes
    are averaged with equal weight instead of dividing by zero.
    Pollutants nobody reported are absent from the result.
    """
    if stats.total_samples == 0:
        raise NoData("cell has no samples")
    fused: dict[PollutantKind, float] = {}
    for kind in PollutantKind:
        means: list[float] = []
        class_weights: list[float] = []
        for cls in SourceClass:
            if stats.count(cls, kind) > 0:
                means.append(stats.mean(cls, kind))
                class_weights.append(weights.for_class(cls))
        if not means:
            continue
        total_weight = sum(class_weights)
        if total_weight > 0:
            fused[kind] = sum(w * m for w, m in zip(class_weights, means)) / total_weight
        else:
            fused[kind] = sum(means) / len(means)
    if not fused:
        raise NoData("cell has samples but no pollutant readings")
    return PollutantVector.from_mapping(fused)


def build_maqi_records(
    grid: Grid,
    weights: FusionWeights,
    table: BreakpointTable,
) -> list[MaqiRecord]:
    """One fused record per non-empty leaf cell, ordered by quadkey.

    Empty leaves are skipped; an empty grid yields an empty list.
    """
    if not grid.is_empty and grid.slot is None:
        raise ValidationError("grid must carry a time slot to emit records")
    records: list[MaqiRecord] = []
    for quadkey, stats in grid.sorted_items():
        if stats.total_samples == 0:
            continue
        values = fuse_cell(stats, weights)
        result = compute_aqi(values, table)
        records.append(
            MaqiRecord(
                cell=quadkey,
                centroid=cell_center(quadkey, grid.bbox),
                slot=grid.slot,  # type: ignore[arg-type]
                aqi=result.aqi,
                primary_pollutant=result.primary_pollutant,
                values=values,
                sample_counts=dict(stats.sample_counts),
            )
        )
    return records
