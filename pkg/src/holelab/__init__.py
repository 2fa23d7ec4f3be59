"""Boundary-integral solvers and an eps-analyticity laboratory for the
Dirichlet Laplace problem in a domain with a small, possibly reflected hole."""

from .annulus import (
    InadmissibleEpsError,
    LimitSolution,
    ModalSolution,
    SphereProblem,
    ZonalDataFamily,
    boundary_residuals,
    closed_form_annulus,
    coupling_sign,
    eval_solution,
    solve_densities,
    solve_limit_system,
    solve_modes,
)
from .bem import (
    AssembledSystem,
    CartesianDataFamily,
    DensityPair,
    assemble,
    direct_solve,
    eval_field,
    solve,
)
from .continuation import (
    BREAKS,
    CONTINUES,
    INCONCLUSIVE,
    ContinuationReport,
    PowerSeriesFit,
    SweepResult,
    TargetSet,
    axis_targets,
    default_grid,
    fit_series,
    make_grid,
    microscopic_limit_check,
    sweep,
    test_continuation,
    test_symmetry,
    zonal_symmetry_hypothesis,
)
from .kernels import (
    QuadratureError,
    fundamental_solution,
    gegenbauer,
    sphere_single_layer_eigenvalue,
    surface_measure_unit_sphere,
    zonal,
)
from .mesh import (
    GeometryPair,
    TriMesh,
    ellipsoid,
    icosphere,
    load_off,
    save_off,
    scale_signed,
)

__version__ = "0.1.0"
