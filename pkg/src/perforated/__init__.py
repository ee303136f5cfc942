"""Finite-difference experiments for the Dirichlet problem in periodically perforated domains."""

from .correctors import ChiResult, PsiResult, build_psi, psi_closed_form_2d, psi_gradient_scaling, solve_chi
from .errors import (
    CellOutOfDomain,
    ConfigError,
    DisconnectedFluid,
    EmptyAnnulus,
    EmptyRegion,
    EtaTooLarge,
    IncompatibleRHS,
    InsufficientSamples,
    InvalidGeometry,
    NoFluidNodes,
    NonPositiveValue,
    NotConverged,
    PerforatedError,
    ResolutionTooCoarse,
    ShiftOutOfRange,
    TruncationTooSmall,
    UnsupportedQuantity,
)
from .exterior import ExteriorResult, extrapolate_cstar, fit_cstar, solve_phi_star
from .fitting import ExponentFit, LinearFit, fit_exponent, fit_linear
from .geometry import (
    Ball,
    Cube,
    DomainSpec,
    NodeClass,
    NodeMask,
    OuterBC,
    build_mask,
    is_in_hole,
    validate_geometry,
)
from .grid import (
    GridFunction,
    LatticeFunction,
    VectorGridFunction,
    cell_average,
    divergence,
    energy,
    forward_difference,
    gradient,
    load_grid_function,
    lp_norm,
    s_operator,
    save_grid_function,
)
from .linsolve import SolveReport, SparseOperator, assemble, cg_solve, smallest_eigenvalue, solve_dirichlet
from .probes import ProbeReport, Quantity, ScalingSample, phi_p_rate, predicted_exponent

__version__ = "0.1.0"
