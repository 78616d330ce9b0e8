"""Planner and simulator for serving ML task graphs on partitioned GPUs."""

from .errors import (
    ConfigError,
    GeometryError,
    GraphError,
    ProfileError,
    SliceServeError,
)
from .model import (
    AppSpec,
    ModelVariant,
    Task,
    TaskGraph,
    app_from_dict,
    enumerate_paths,
    load_app,
    max_system_accuracy,
    path_accuracy,
    propagate_demand,
    system_accuracy,
)
from .profiles import (
    BATCH_SIZES,
    MIG_SLICE_COST,
    MPS_LEVELS,
    ProfileEntry,
    ProfileTable,
    SegmentType,
    SynthKnobs,
    all_segments,
    load_knobs,
    load_profile,
    save_profile,
    synth_profile,
)

from .placement import (
    DEFAULT_GEOMETRY,
    DeploymentPlan,
    MigGeometry,
    Placement,
    load_geometry,
    min_gpus,
    pack,
    render_plan,
)
from .planner import (
    ALL_SPACES,
    Configuration,
    MaxDemandResult,
    PlannerOptions,
    PlanRequest,
    PlanResult,
    SearchSpace,
    derive_configuration,
    max_demand,
    plan,
    plan_result_to_dict,
    validate_configuration,
)
from .simulator import (
    SimOptions,
    SimReport,
    TraceBin,
    instance_segments,
    should_early_drop,
    simulate,
)
from .workload import (
    BinResult,
    DayOptions,
    DemandTrace,
    TraceShape,
    gen_trace,
    load_trace,
    predict,
    run_day,
    save_day_report,
    save_trace,
)

__version__ = "0.1.0"
