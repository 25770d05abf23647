"""Quality metrics for SLAM point-cloud maps.

Compares an estimated map against a reference: classic point-level
metrics (accuracy, completeness, chamfer distance, mean map entropy),
plus voxelized-Gaussian metrics (average transport distance, spatial
consistency, error CDF and a 3-sigma error bound) that stay meaningful
under noise and partial overlap. Ships point-to-plane ICP alignment, a
degradation harness for controlled experiments, and a CLI.
"""

from .cloud import (
    CloudFormatError,
    NonFinitePointsWarning,
    PointCloud,
    export_error_map,
    read_cloud,
    write_cloud,
)
from .figures import (
    render_cdf,
    render_error_histogram,
    render_runtimes,
    save_figure,
)
from .geometry import (
    Gaussian3,
    RigidTransform,
    apply_transform,
    gaussian_entropy,
    so3_exp,
    spd_sqrt,
    wasserstein_gaussian,
    wasserstein_gaussian_batch,
)
from .metrics import (
    MmeResult,
    accuracy,
    chamfer_distance,
    completeness,
    mean_map_entropy,
)
from .perturb import (
    PerturbSpec,
    SceneSpec,
    add_gaussian_noise,
    apply_perturbation,
    inject_outliers,
    synth_scene,
)
from .pipeline import EvaluationConfig, EvaluationResult, benchmark_stages, evaluate_maps
from .registration import (
    CorrespondenceSet,
    DegenerateGeometryError,
    IcpError,
    IcpParams,
    IcpResult,
    build_correspondences,
    icp_point_to_plane,
)
from .report import (
    EvaluationReport,
    MetricValues,
    ReportConfig,
    StageRuntimes,
    read_report,
    write_report,
)
from .spatial import NormalCloud, SpatialIndex, build_index, estimate_normals
from .voxel import (
    EmpiricalCDF,
    GaussianVoxel,
    MixtureBound,
    ScsResult,
    VoxelErrorField,
    VoxelGrid,
    awd,
    empirical_cdf,
    mixture_bound,
    scs,
    voxel_wasserstein_field,
    voxelize,
)

__version__ = "0.1.0"

__all__ = [
    "CloudFormatError",
    "CorrespondenceSet",
    "DegenerateGeometryError",
    "EmpiricalCDF",
    "EvaluationConfig",
    "EvaluationReport",
    "EvaluationResult",
    "Gaussian3",
    "GaussianVoxel",
    "IcpError",
    "IcpParams",
    "IcpResult",
    "MetricValues",
    "MixtureBound",
    "MmeResult",
    "NonFinitePointsWarning",
    "NormalCloud",
    "PerturbSpec",
    "PointCloud",
    "ReportConfig",
    "RigidTransform",
    "SceneSpec",
    "ScsResult",
    "SpatialIndex",
    "StageRuntimes",
    "VoxelErrorField",
    "VoxelGrid",
    "accuracy",
    "add_gaussian_noise",
    "apply_perturbation",
    "apply_transform",
    "awd",
    "benchmark_stages",
    "build_correspondences",
    "build_index",
    "chamfer_distance",
    "completeness",
    "empirical_cdf",
    "estimate_normals",
    "evaluate_maps",
    "export_error_map",
    "gaussian_entropy",
    "icp_point_to_plane",
    "inject_outliers",
    "mean_map_entropy",
    "mixture_bound",
    "read_cloud",
    "read_report",
    "render_cdf",
    "render_error_histogram",
    "render_runtimes",
    "save_figure",
    "scs",
    "so3_exp",
    "spd_sqrt",
    "synth_scene",
    "voxel_wasserstein_field",
    "voxelize",
    "wasserstein_gaussian",
    "wasserstein_gaussian_batch",
    "write_cloud",
    "write_report",
    "__version__",
]
