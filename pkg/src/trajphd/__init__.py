"""Gaussian-mixture filters over sets of trajectories, with baselines.

The package implements trajectory PHD and trajectory CPHD filters for
linear-Gaussian multi-target models, tagged PHD/CPHD baselines, a scenario
simulator, set and trajectory metrics, and a Monte Carlo benchmark harness
(`trajphd run <config.json>`).
"""

__version__ = "0.1.0"

from .cardesf import (
    CardinalityPmf,
    EsfTable,
    esf,
    log_esf,
    predict_cardinality,
    psi_factor,
    update_cardinality,
)
from .errors import (
    ConfigError,
    DegenerateMixtureError,
    ImpossibleMeasurementError,
    InvalidComponentError,
    MetricIntractableError,
    SingularInnovationError,
    TrajPhdError,
)
from .filters import (
    BirthModel,
    ClutterModel,
    Rectangle,
    ReductionConfig,
    TaggedState,
    TcphdState,
    TphdState,
    estimate_tcphd,
    estimate_tphd,
    reduce_mixture,
    tagged_cphd_step,
    tagged_phd_step,
    tcphd_predict,
    tcphd_step,
    tcphd_update,
    tphd_predict,
    tphd_step,
    tphd_update,
)
from .metrics import (
    MetricBreakdown,
    MetricConfig,
    gospa,
    ospa,
    rms_over_runs,
    rms_over_time,
    trajectory_metric,
)
from .scenario import (
    ScenarioConfig,
    ScriptedTrajectory,
    benchmark_scenario,
    cv_models,
    generate_measurement_sequence,
    generate_measurements,
    generate_truth,
    sample_iid_cluster,
    substream,
)
from .trajgauss import (
    GmTrajectoryPhd,
    LinearModels,
    Trajectory,
    TrajectoryComponent,
    TrajectorySet,
    expected_count,
    expected_count_in,
    gaussian_logpdf,
    lscan_truncate,
    predict_component,
    update_component,
)

__all__ = [
    "__version__",
    # errors
    "TrajPhdError",
    "InvalidComponentError",
    "SingularInnovationError",
    "DegenerateMixtureError",
    "ImpossibleMeasurementError",
    "ConfigError",
    "MetricIntractableError",
    # trajectory Gaussians
    "LinearModels",
    "TrajectoryComponent",
    "GmTrajectoryPhd",
    "Trajectory",
    "TrajectorySet",
    "gaussian_logpdf",
    "predict_component",
    "update_component",
    "lscan_truncate",
    "expected_count",
    "expected_count_in",
    # cardinality / ESF
    "CardinalityPmf",
    "EsfTable",
    "esf",
    "log_esf",
    "predict_cardinality",
    "psi_factor",
    "update_cardinality",
    # filters
    "Rectangle",
    "BirthModel",
    "ClutterModel",
    "ReductionConfig",
    "TphdState",
    "TcphdState",
    "TaggedState",
    "tphd_predict",
    "tphd_update",
    "tphd_step",
    "tcphd_predict",
    "tcphd_update",
    "tcphd_step",
    "reduce_mixture",
    "estimate_tphd",
    "estimate_tcphd",
    "tagged_phd_step",
    "tagged_cphd_step",
    # scenario
    "ScenarioConfig",
    "ScriptedTrajectory",
    "substream",
    "cv_models",
    "generate_truth",
    "generate_measurements",
    "generate_measurement_sequence",
    "sample_iid_cluster",
    "benchmark_scenario",
    # metrics
    "MetricConfig",
    "MetricBreakdown",
    "gospa",
    "ospa",
    "trajectory_metric",
    "rms_over_runs",
    "rms_over_time",
]
