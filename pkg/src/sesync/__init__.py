"""Certifiably correct pose-graph optimization on SE(d).

The estimator solves a semidefinite relaxation of maximum-likelihood pose-graph
SLAM by low-rank Riemannian optimization, rounds the result to a feasible
estimate, and checks a dual certificate of global optimality.
"""

from .data_matrices import DataMatrices, apply_Pi, apply_Q, build, evaluate_objective
from .g2o import G2OParseError, parse_g2o, write_g2o
from .graph import (
    ConnectivityError,
    GraphError,
    MeasurementGraph,
    Pose,
    RelativePoseMeasurement,
    incidence_matrix,
    reduced_incidence_matrix,
    rotation_2d,
    weight_graph_laplacian,
)
from .langevin import LangevinParams, angular_std, kappa_from_angular_std, sample_langevin, sample_von_mises
from .metrics import angular_rms_error, orbit_distance_O, orbit_distance_S
from .rtr import RtrConfig, RtrResult
from .solution import (
    Certificate,
    CertifiedSolution,
    SeSyncConfig,
    certify,
    nearest_rotation,
    recover_translations,
    round_solution,
    se_sync,
)
from .staircase import StaircaseConfig, numerical_rank, riemannian_staircase
from .stiefel import StaircasePoint
from .synthetic import CubeConfig, generate_cube

__all__ = [
    "Certificate",
    "CertifiedSolution",
    "ConnectivityError",
    "CubeConfig",
    "DataMatrices",
    "G2OParseError",
    "GraphError",
    "LangevinParams",
    "MeasurementGraph",
    "Pose",
    "RelativePoseMeasurement",
    "RtrConfig",
    "RtrResult",
    "SeSyncConfig",
    "StaircaseConfig",
    "StaircasePoint",
    "angular_rms_error",
    "angular_std",
    "apply_Pi",
    "apply_Q",
    "build",
    "certify",
    "evaluate_objective",
    "generate_cube",
    "incidence_matrix",
    "kappa_from_angular_std",
    "nearest_rotation",
    "numerical_rank",
    "orbit_distance_O",
    "orbit_distance_S",
    "parse_g2o",
    "recover_translations",
    "reduced_incidence_matrix",
    "riemannian_staircase",
    "rotation_2d",
    "round_solution",
    "sample_langevin",
    "sample_von_mises",
    "se_sync",
    "weight_graph_laplacian",
    "write_g2o",
]

__version__ = "0.1.0"
