"""Semismooth predictor-corrector tracking of parameterized KKT points."""
from .errors import *  # noqa: F401,F403
from .genjac import GammaVector, JacobianP, JacobianX, gamma_select, jac_p, jac_x
from .kkt import (
    KktResidual,
    ParameterizedNLP,
    PrimalDual,
    is_kkt_point,
    kkt_residual,
    ncp_min,
    with_fd_derivatives,
)
from .solver import (
    SolverConfig,
    StepReport,
    corrector,
    grid_points,
    grid_size,
    linear_solve,
    predictor,
    schur_reduced_solve,
    track,
)

__version__ = "0.1.0"
