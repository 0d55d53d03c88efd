"""Multi-source urban air-quality fusion, crowdsensing, and health guidance.

The pipeline: validated sensor samples are partitioned into hourly slots,
gridded on a density-adaptive quadtree, fused per cell with per-source
weights, and converted to AQI records; edge nodes ship mergeable
statistics to a remote store that re-integrates them with the same
routine.  On top sit crowdsensing task assignment, physiological record
handling, health advisories and pollution-aware route planning.
"""

from .aqi import AqiResult, BreakpointTable, compute_aqi, load_breakpoint_table, pollutant_subindex
from .edge import EdgeBatch, EdgeNode, RemoteStore
from .fusion import build_maqi_records, fuse_cell
from .grid import (
    BoundingBox,
    CellStats,
    Grid,
    GridConfig,
    WUHAN_BBOX,
    assign_time_slot,
    build_adaptive_grid,
    cell_bounds,
    cell_center,
    haversine_m,
    partition_by_slot,
    quadkey_for,
)
from .guidance import (
    Advisory,
    AdvisoryLevel,
    ProfileKind,
    Route,
    RouteQuery,
    UserProfile,
    advisory_for,
    plan_route,
    sleep_advisory,
    sleep_correlation_report,
)
from .model import (
    DEFAULT_WEIGHTS,
    EcgSegment,
    FusionWeights,
    GeoPoint,
    MaqiRecord,
    PhysioRecord,
    PollutantKind,
    PollutantVector,
    SensorSample,
    SourceClass,
    TimeSlot,
    validate_sample,
)
from .physio import heart_rate_from_ecg, validate_physio
from .sim import (
    GaussianPlume,
    MobilityConfig,
    NoiseModel,
    SyntheticField,
    evaluate_fusion,
    generate_samples,
    generate_traces,
)
from .tasking import (
    AssociationMatrix,
    CellScheme,
    CreditScore,
    MobilityTrace,
    SampleFeedback,
    TaskAssignment,
    TracePoint,
    assign_tasks,
    build_association_matrix,
    extract_mobility_features,
    update_credit,
)

__version__ = "0.1.0"
