"""lasskit: Laplacian-regularized soft assignment of items to categories."""

from .core import (
    KktReport,
    Problem,
    Solution,
    SolverConfig,
    SolverState,
    admm_iterate,
    closed_form_lambda0,
    init_state,
    kkt_residuals,
    lp_lambda_inf,
    objective,
    objective_gradient,
    recover_multipliers,
    rho_star,
    solve,
    uniqueness_certificate,
)
from .graph import (
    ComponentSplit,
    GraphLaplacian,
    SparseSimilarity,
    build_knn_graph,
    connected_components,
    extreme_eigenvalues,
    laplacian,
)
from .linsolve import CgConfig, FactorizationError, ShiftedFactor, cg_solve, factorize
from .oos import OosPrediction, OosQuery, TrainedModel, ZbarCache, lambda_path, oos_predict, whatif
from .simplex import project_rows, project_simplex
from .ssl import (
    LabeledSplit,
    UnlabeledComponentError,
    class_mass_normalize,
    harmonic_solve,
    labels_from_affinities,
    lass_with_labels,
    ssl2_solve,
    ssl_oos,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
