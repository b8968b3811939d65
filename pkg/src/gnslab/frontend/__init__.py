"""Frontend plan/job APIs for gnslab."""

from ._job import Job, JobResult, ProgressCallback
from .datagen_api import DataGenJob, DataGenOptions, DataGenPlan, plan_data_generation
from .eval_api import (
    EvalJob,
    EvalOptions,
    EvalPlan,
    GeneralizeJob,
    GeneralizeOptions,
    GeneralizePlan,
    NeighborJob,
    NeighborOptions,
    NeighborPlan,
    plan_evaluation,
    plan_generalization,
    plan_neighbor_analysis,
)
from .train_api import TrainJob, TrainOptions, TrainPlan, plan_training

__all__ = [
    "Job",
    "JobResult",
    "ProgressCallback",
    "DataGenOptions",
    "DataGenPlan",
    "DataGenJob",
    "plan_data_generation",
    "TrainOptions",
    "TrainPlan",
    "TrainJob",
    "plan_training",
    "EvalOptions",
    "EvalPlan",
    "EvalJob",
    "plan_evaluation",
    "GeneralizeOptions",
    "GeneralizePlan",
    "GeneralizeJob",
    "plan_generalization",
    "NeighborOptions",
    "NeighborPlan",
    "NeighborJob",
    "plan_neighbor_analysis",
]
