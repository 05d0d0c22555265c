"""Curvature-regularized estimation of thin structures.

Per measurement site the model keeps a tangent line and a binary indicator;
an energy couples neighboring tangents through a discrete curvature penalty
and is optimized by mean-field variational inference interleaved with a
Levenberg-Marquardt trust region over the line parameters.
"""

from .bcd import run_bcd, x_step
from .energy import (
    ProblemSpec,
    SiteSet,
    expected_energy,
    potential_tables,
    total_energy,
)
from .errors import (
    ConfigurationError,
    DataFormatError,
    NumericalError,
    ThinStructError,
)
from .geometry import (
    CurvatureTerm,
    TangentLine,
    curvature_pair,
    misalignment,
    point_line_distance,
    project_onto_line,
    truncated_distance,
)
from .graph import NeighborGraph, build_grid_2d, build_grid_3d, build_knn
from .inference import (
    InferenceState,
    free_energy,
    init_marginals,
    mean_field_sweep,
    run_inference,
    run_mean_field,
)
from .io import (
    read_container,
    read_mask_pgm,
    read_pgm,
    read_points_csv,
    read_report,
    read_vfield,
    read_vmask,
    write_container,
    write_mask_pgm,
    write_pgm,
    write_points_csv,
    write_report,
    write_tangents_csv_2d,
    write_tangents_csv_3d,
    write_vfield,
    write_vmask,
)
from .pipelines import (
    GradientField,
    SubpixelMask,
    VesselField,
    detect_edges_2d,
    detect_vessels_3d,
    edge_likelihoods,
    fit_point_cloud,
    fit_tangents_fixed_q,
    init_edge_tangents,
    sobel_gradients,
    subpixel_mask,
)
from .solver import (
    TrustRegionConfig,
    abs_curvature_weights,
    build_residuals,
    lm_solve,
    minimize_expected_energy,
)

__all__ = [
    "ConfigurationError",
    "DataFormatError",
    "NumericalError",
    "ThinStructError",
    "CurvatureTerm",
    "TangentLine",
    "curvature_pair",
    "misalignment",
    "point_line_distance",
    "project_onto_line",
    "truncated_distance",
    "NeighborGraph",
    "build_grid_2d",
    "build_grid_3d",
    "build_knn",
    "ProblemSpec",
    "SiteSet",
    "expected_energy",
    "potential_tables",
    "total_energy",
    "InferenceState",
    "free_energy",
    "init_marginals",
    "mean_field_sweep",
    "run_inference",
    "run_mean_field",
    "run_bcd",
    "x_step",
    "read_container",
    "read_mask_pgm",
    "read_pgm",
    "read_points_csv",
    "read_report",
    "read_vfield",
    "read_vmask",
    "write_container",
    "write_mask_pgm",
    "write_pgm",
    "write_points_csv",
    "write_report",
    "write_tangents_csv_2d",
    "write_tangents_csv_3d",
    "write_vfield",
    "write_vmask",
    "TrustRegionConfig",
    "abs_curvature_weights",
    "build_residuals",
    "lm_solve",
    "minimize_expected_energy",
    "GradientField",
    "SubpixelMask",
    "VesselField",
    "detect_edges_2d",
    "detect_vessels_3d",
    "edge_likelihoods",
    "fit_point_cloud",
    "fit_tangents_fixed_q",
    "init_edge_tangents",
    "sobel_gradients",
    "subpixel_mask",
]

__version__ = "0.1.0"
