"""Proximal methods for penalties of the form w(Bx).

The prox of ``w o B`` is computed from the prox of ``w`` by an averaged
fixed-point iteration; the outer solvers are the plain and accelerated
proximal gradient loops on ``0.5 ||Ax - y||^2 + r w(Bx)``.
"""
from .builders import (
    Graph,
    GroupSystem,
    fused_difference_operator,
    group_selection_operator,
    incidence_operator,
    tree_group_system,
)
from .errors import (
    CompProxError,
    ConvergenceError,
    DimensionError,
    InadmissibleStepError,
    InvalidGroupsError,
    ManifestError,
    NonFiniteError,
    UnsupportedPenaltyError,
)
from .fixed_point import (
    FixedPointState,
    SpdOperator,
    composite_residual,
    picard_opial,
    prox_composite,
    quad_min_composite,
)
from .kernels import BACKEND
from .linalg import LinearOperator, SpectralInterval, lipschitz_square_loss, power_iteration_extremes
from .prox import (
    ProxPenalty,
    project_l1_ball,
    prox_group_l2,
    prox_l1,
    prox_l2,
    prox_linf,
    prox_lp_norm,
    prox_lp_power,
    prox_oi_norm,
    subgrad_residual,
)
from .solvers import (
    CompositeProblem,
    SolverConfig,
    SolverTrace,
    SquareLoss,
    solve,
    solve_accelerated,
    solve_proximal,
    theta_rho_sequence,
)

__version__ = "0.1.0"
