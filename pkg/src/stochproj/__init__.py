"""Wasserstein projections of discrete probability measures onto
stochastic-order cones (convex, subharmonic, trivial), with duality
certificates, transform identities, and structural checks of the optimal
maps."""

from .characterize import (
    InverseRelationReport,
    MapSample,
    VolumeExpansionReport,
    check_convex_contraction,
    check_convex_expansion,
    check_inverse_relation,
    check_laplacian_contraction,
    check_laplacian_expansion,
    check_volume_expansion,
    extract_map,
    map_potential_on_grid,
    monotone_intercepts,
)
from .demo import GeodesicDemo, run_geodesic_demo
from .duality import (
    CrosscheckReport,
    DualCertificate,
    PotentialPropertyReport,
    crosscheck_dual_equivalence,
    duality_gap,
    interpolate,
    solve_dual_backward,
    solve_dual_forward,
    verify_potential_property,
)
from .json_io import SchemaError, dumps, load_grid_function, load_measure, measure_digest
from .lp import LinearProgram, LPSolution, SimplexError, SimplexSolver
from .measures import (
    Coupling,
    DiscreteMeasure,
    Grid,
    convex_hull_contains,
    make_measure,
    mean,
    moment,
    w2_squared,
)
from .orders import (
    ConvexSeparator,
    OrderCertificate,
    OrderSpec,
    check_convex_order,
    check_subharmonic_order,
    check_trivial_order,
    laplacian_adjoint_matrix,
)
from .projection import (
    ConeEmptyError,
    PlanePotential,
    ProjectionProblem,
    ProjectionResult,
    UniquenessReport,
    default_forward_grid,
    project_backward_convex,
    project_backward_convex_lp,
    project_backward_subharmonic,
    project_forward_convex,
    project_forward_subharmonic,
    solve_problem,
    uniqueness_probe,
)
from .transforms import (
    EnvelopeError,
    GridFunction,
    SampledConvexFunction,
    legendre,
    q2,
    q2bar,
    q2e,
    subharmonic_envelope,
)

__version__ = "0.1.0"

__all__ = [
    "ConeEmptyError",
    "ConvexSeparator",
    "Coupling",
    "CrosscheckReport",
    "DiscreteMeasure",
    "DualCertificate",
    "EnvelopeError",
    "GeodesicDemo",
    "Grid",
    "GridFunction",
    "InverseRelationReport",
    "LPSolution",
    "LinearProgram",
    "MapSample",
    "OrderCertificate",
    "OrderSpec",
    "PlanePotential",
    "PotentialPropertyReport",
    "ProjectionProblem",
    "ProjectionResult",
    "SampledConvexFunction",
    "SchemaError",
    "SimplexError",
    "SimplexSolver",
    "UniquenessReport",
    "VolumeExpansionReport",
    "check_convex_contraction",
    "check_convex_expansion",
    "check_convex_order",
    "check_inverse_relation",
    "check_laplacian_contraction",
    "check_laplacian_expansion",
    "check_subharmonic_order",
    "check_trivial_order",
    "check_volume_expansion",
    "convex_hull_contains",
    "crosscheck_dual_equivalence",
    "default_forward_grid",
    "duality_gap",
    "dumps",
    "extract_map",
    "interpolate",
    "laplacian_adjoint_matrix",
    "legendre",
    "load_grid_function",
    "load_measure",
    "make_measure",
    "map_potential_on_grid",
    "mean",
    "measure_digest",
    "moment",
    "monotone_intercepts",
    "project_backward_convex",
    "project_backward_convex_lp",
    "project_backward_subharmonic",
    "project_forward_convex",
    "project_forward_subharmonic",
    "q2",
    "q2bar",
    "q2e",
    "run_geodesic_demo",
    "solve_dual_backward",
    "solve_dual_forward",
    "solve_problem",
    "subharmonic_envelope",
    "uniqueness_probe",
    "verify_potential_property",
    "w2_squared",
    "__version__",
]
