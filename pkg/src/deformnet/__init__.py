"""deformnet: point-cloud autoencoding by progressive sphere deformation."""

from .autodiff import Graph, Tensor, backward, grad_check
from .config import TrainConfig
from .errors import (
    CheckpointError,
    DegenerateMeshError,
    NonFiniteError,
    ParseError,
    ShapeMismatchError,
    SizeLimitError,
    TrainingDivergedError,
)
from .estimator import DeformationAutoencoder, check_point_set, check_point_set_list
from .geometry import (
    NeighborhoodMap,
    PointCloud,
    TriangleMesh,
    icosphere,
    knn,
    point_triangle_distance,
    sample_mesh_surface,
    sample_sphere,
)
from .loss import LossWeights, chamfer, deform_loss, total_loss
from .metrics import EvalReport, count_self_intersections, coverage, d2f, evaluate
from .model import LatentCode, ModelConfig, ModelParams, deform, encode, init_params, reconstruct
from .training import OptimizerState, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "Graph", "Tensor", "backward", "grad_check",
    "TrainConfig",
    "CheckpointError", "DegenerateMeshError", "NonFiniteError", "ParseError",
    "ShapeMismatchError", "SizeLimitError", "TrainingDivergedError",
    "DeformationAutoencoder", "check_point_set", "check_point_set_list",
    "NeighborhoodMap", "PointCloud", "TriangleMesh", "icosphere", "knn",
    "point_triangle_distance", "sample_mesh_surface", "sample_sphere",
    "LossWeights", "chamfer", "deform_loss", "total_loss",
    "EvalReport", "count_self_intersections", "coverage", "d2f", "evaluate",
    "LatentCode", "ModelConfig", "ModelParams", "deform", "encode", "init_params", "reconstruct",
    "OptimizerState", "adam_step", "train",
    "__version__",
]
