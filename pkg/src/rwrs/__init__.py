"""Random walks in random scenery: simulation, limit objects, and inference."""

from .empirical import (
    EmpiricalSheet,
    Norming,
    OccupationStats,
    cross_intersection,
    empirical_sheet,
    norming_value,
    occupation_stats,
)
from .harness import ExperimentConfig, run_experiment
from .inference import (
    Kernel,
    TestReport,
    changepoint_statistic,
    changepoint_test,
    degenerate_ustat,
    ustat_empirical_identity,
)
from .limits import (
    GaussianSheet,
    LimitConstant,
    PillowQuantiles,
    estimate_A,
    limit_constant,
    pillow_from_km,
    pillow_sup_quantiles,
    sample_kiefer_muller,
)
from .scenery import QuantileTransform, Scenery, evaluate_along, scenery_at, transform
from .walk import (
    HeavyTailLaw,
    IncrementLaw,
    Path,
    WalkModel,
    build_model,
    check_aperiodicity,
    green_sum,
    return_probability,
    sample_path,
)

__version__ = "0.1.0"

__all__ = [
    "EmpiricalSheet",
    "ExperimentConfig",
    "GaussianSheet",
    "HeavyTailLaw",
    "IncrementLaw",
    "Kernel",
    "LimitConstant",
    "Norming",
    "OccupationStats",
    "Path",
    "PillowQuantiles",
    "QuantileTransform",
    "Scenery",
    "TestReport",
    "WalkModel",
    "build_model",
    "changepoint_statistic",
    "changepoint_test",
    "check_aperiodicity",
    "cross_intersection",
    "degenerate_ustat",
    "empirical_sheet",
    "estimate_A",
    "evaluate_along",
    "green_sum",
    "limit_constant",
    "norming_value",
    "occupation_stats",
    "pillow_from_km",
    "pillow_sup_quantiles",
    "return_probability",
    "run_experiment",
    "sample_kiefer_muller",
    "sample_path",
    "scenery_at",
    "transform",
    "ustat_empirical_identity",
]
