"""gnslab: FLIP data generation, graph network simulators and their evaluation."""

from ._errors import (
    ConfigError,
    ContractError,
    DataError,
    DivergenceError,
    GnsLabError,
    HeaderError,
    ShapeError,
)
from .backend.checkpoint import Checkpoint, inspect_checkpoint, load_checkpoint, save_checkpoint
from .backend.dataset import Trajectory, add_boundary_particles, scale_positions, unscale_positions
from .backend.evaluation import (
    GnsModel,
    GroundTruthModel,
    MetricReport,
    RolloutResult,
    emd,
    evaluate,
    mse_20,
    mse_400,
    mse_acc_1,
    neighbor_stats,
    rollout,
    select_checkpoint,
)
from .backend.gns import GnsConfig, GnsParams, init_gns, predict_step
from .backend.scenes import SceneSpec, generate_scene, simulate_trajectory
from .backend.settings import RunConfig, load_run_config, save_run_config
from .backend.training import TrainConfig, TrainVariant, train
from .backend.trajectory_io import inspect_trajectory, read_trajectory, write_trajectory
from .frontend.datagen_api import DataGenJob, DataGenOptions, DataGenPlan
from .frontend.eval_api import EvalJob, EvalOptions, GeneralizeJob, NeighborJob
from .frontend.train_api import TrainJob, TrainOptions, TrainPlan

__all__: list[str] = [
    "GnsLabError",
    "ShapeError",
    "ContractError",
    "ConfigError",
    "DataError",
    "HeaderError",
    "DivergenceError",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "inspect_checkpoint",
    "Trajectory",
    "scale_positions",
    "unscale_positions",
    "add_boundary_particles",
    "read_trajectory",
    "write_trajectory",
    "inspect_trajectory",
    "SceneSpec",
    "generate_scene",
    "simulate_trajectory",
    "GnsConfig",
    "GnsParams",
    "init_gns",
    "predict_step",
    "TrainVariant",
    "TrainConfig",
    "train",
    "GnsModel",
    "GroundTruthModel",
    "RolloutResult",
    "MetricReport",
    "rollout",
    "emd",
    "mse_acc_1",
    "mse_20",
    "mse_400",
    "evaluate",
    "neighbor_stats",
    "select_checkpoint",
    "RunConfig",
    "load_run_config",
    "save_run_config",
    "DataGenOptions",
    "DataGenPlan",
    "DataGenJob",
    "TrainOptions",
    "TrainPlan",
    "TrainJob",
    "EvalOptions",
    "EvalJob",
    "GeneralizeJob",
    "NeighborJob",
]
