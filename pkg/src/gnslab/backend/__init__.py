"""gnslab numerical backend"""

from .checkpoint import Checkpoint, inspect_checkpoint, load_checkpoint, save_checkpoint
from .evaluation import emd, mse_20, mse_400, mse_acc_1, rollout
from .flip import MacGrid, SimConfig, flip_step, pressure_project
from .gns import GnsConfig, GnsParams, gns_forward, predict_step
from .graph import ParticleGraph, build_graph
from .scenes import SceneSpec, generate_scene, simulate_trajectory
from .training import TrainVariant, multi_step_loss, one_step_loss, train

__all__: list[str] = [
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "inspect_checkpoint",
    "MacGrid",
    "SimConfig",
    "pressure_project",
    "flip_step",
    "SceneSpec",
    "generate_scene",
    "simulate_trajectory",
    "ParticleGraph",
    "build_graph",
    "GnsConfig",
    "GnsParams",
    "gns_forward",
    "predict_step",
    "TrainVariant",
    "one_step_loss",
    "multi_step_loss",
    "train",
    "rollout",
    "emd",
    "mse_acc_1",
    "mse_20",
    "mse_400",
]
