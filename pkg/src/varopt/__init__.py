"""Variational integrators for forced mechanical systems and the matching
discrete adjoint machinery for optimal control.

Subpackages are deliberately flat: plain functions over numpy arrays, with
dataclasses only where a bundle of settings or results warrants one.
"""

from varopt.numerics import (
    NewtonSettings,
    NonConvergence,
    SingularJacobian,
    GridMismatch,
    DegenerateFit,
    newton_solve,
    fd_gradient,
    fd_jacobian,
    infinity_error,
    ErrorTable,
    estimate_order,
)
from varopt.discrete import (
    DiscreteSystem,
    Trajectory,
    midpoint_discretize,
    del_residual,
    legendre_minus,
    legendre_plus,
    first_step,
    step,
    integrate,
)
from varopt.adjoint import (
    OcpObjective,
    objective,
    adjoint_boundary,
    adjoint_step,
    backward_sweep,
    control_gradient,
)
from varopt.optimizer import (
    ShootingSettings,
    OptimizationResult,
    bb_step,
    shoot,
    momentum_homotopy,
)

__all__ = [
    "NewtonSettings",
    "NonConvergence",
    "SingularJacobian",
    "GridMismatch",
    "DegenerateFit",
    "newton_solve",
    "fd_gradient",
    "fd_jacobian",
    "infinity_error",
    "ErrorTable",
    "estimate_order",
    "DiscreteSystem",
    "Trajectory",
    "midpoint_discretize",
    "del_residual",
    "legendre_minus",
    "legendre_plus",
    "first_step",
    "step",
    "integrate",
    "OcpObjective",
    "objective",
    "adjoint_boundary",
    "adjoint_step",
    "backward_sweep",
    "control_gradient",
    "ShootingSettings",
    "OptimizationResult",
    "bb_step",
    "shoot",
    "momentum_homotopy",
]
