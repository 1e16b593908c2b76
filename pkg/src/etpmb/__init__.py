"""Extended-target tracking with Poisson multi-Bernoulli filters.

The package implements a gamma-Gaussian-inverse-Wishart (GGIW) target model
for extended objects, a PMB filter over clustered measurement scans, four
strategies for reducing multi-Bernoulli mixtures back to a single PMB
density, set metrics for evaluation, and a scenario simulator plus benchmark
CLI to compare the strategies.
"""

from .association import (
    AssociationHypothesis,
    InfeasibleAssignmentError,
    UpdateTables,
    all_partitions,
    association_log_likelihood,
    build_hypotheses,
    dbscan_partition,
    enumerate_associations,
    hungarian,
    murty_k_best,
    partition_sweep,
)
from .cli import RunConfig, birth_intensity, filter_config
from .filtering import (
    FilterConfig,
    PMBFilter,
    StepDiagnostics,
    TargetEstimate,
    extract,
    predict,
    step,
    step_detailed,
    update,
)
from .ggiw import (
    CellUpdate,
    GammaParams,
    GaussianKinematics,
    GGIWDensity,
    InverseWishartExtent,
    MotionConfig,
    SensorConfig,
    effective_miss_prob,
    ggiw_cell_update,
    ggiw_cross_entropy,
    ggiw_expected_value,
    ggiw_kl,
    ggiw_miss_update,
    ggiw_predict,
    ggiw_mixture_merge,
    position_matrix,
)
from .merging import (
    MergeReport,
    STRATEGIES,
    TransportPlan,
    bernoulli_cross_entropy,
    bernoulli_kl,
    bernoulli_skl,
    merge_existing_TO,
    merge_new_TO,
    merge_new_greedy,
    merge_to_pmb,
    ub_cross_entropy,
    vmb_eafs,
    vmb_mla,
)
from .metrics import GospaResult, gospa, gwd, ospa
from .rfs import (
    BernoulliComponent,
    GlobalHypothesis,
    LocalHypothesis,
    PMBState,
    PoissonComponent,
    PoissonIntensity,
    WeightedBernoulli,
    bernoulli_mixture_reduce,
    parse_state,
    prune_state,
    recycle,
    serialize_state,
)
from .sim import (
    PRESETS,
    ScenarioConfig,
    ScenarioTruth,
    TargetSpec,
    Trajectory,
    generate_measurements,
    generate_truth,
    measurement_records,
    scenario_from_json,
    sensor_config,
    truth_records,
)
from .special import (
    digamma,
    log_multivariate_gamma,
    solve_gamma_shape,
    solve_iw_dof,
    spd_sqrt,
)
from .transport import transport_plan

__version__ = "0.1.0"

__all__ = [
    "AssociationHypothesis",
    "BernoulliComponent",
    "CellUpdate",
    "FilterConfig",
    "GGIWDensity",
    "GammaParams",
    "GaussianKinematics",
    "GlobalHypothesis",
    "GospaResult",
    "InfeasibleAssignmentError",
    "InverseWishartExtent",
    "LocalHypothesis",
    "MergeReport",
    "MotionConfig",
    "PMBFilter",
    "PMBState",
    "PRESETS",
    "PoissonComponent",
    "PoissonIntensity",
    "STRATEGIES",
    "ScenarioConfig",
    "ScenarioTruth",
    "SensorConfig",
    "StepDiagnostics",
    "TargetEstimate",
    "TargetSpec",
    "Trajectory",
    "TransportPlan",
    "UpdateTables",
    "WeightedBernoulli",
    "RunConfig",
    "all_partitions",
    "association_log_likelihood",
    "bernoulli_cross_entropy",
    "bernoulli_kl",
    "bernoulli_mixture_reduce",
    "bernoulli_skl",
    "birth_intensity",
    "build_hypotheses",
    "dbscan_partition",
    "digamma",
    "effective_miss_prob",
    "enumerate_associations",
    "extract",
    "filter_config",
    "generate_measurements",
    "generate_truth",
    "ggiw_cell_update",
    "ggiw_cross_entropy",
    "ggiw_expected_value",
    "ggiw_kl",
    "ggiw_miss_update",
    "ggiw_predict",
    "gospa",
    "gwd",
    "hungarian",
    "log_multivariate_gamma",
    "measurement_records",
    "merge_existing_TO",
    "ggiw_mixture_merge",
    "merge_new_TO",
    "merge_new_greedy",
    "merge_to_pmb",
    "murty_k_best",
    "ospa",
    "parse_state",
    "partition_sweep",
    "position_matrix",
    "predict",
    "prune_state",
    "recycle",
    "scenario_from_json",
    "sensor_config",
    "serialize_state",
    "solve_gamma_shape",
    "solve_iw_dof",
    "spd_sqrt",
    "step",
    "step_detailed",
    "transport_plan",
    "truth_records",
    "ub_cross_entropy",
    "update",
    "vmb_eafs",
    "vmb_mla",
]
