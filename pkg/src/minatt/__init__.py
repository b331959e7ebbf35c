"""Minimum-attention control law solver.

Computes feedback/feedforward schedules u(x, t) = K(t) x + v(t) for
nonlinear systems by gradient descent on a density-transport optimality
system, with a two-link planar arm as the reference application.
"""

from .adjoint import AdjointSchedule, DensityMismatchTarget, EndpointTarget, lambda_schedule, terminal_lambda
from .config import SolverConfig, apply_fidelity, load_preset, parse_config, resolve_config, write_config
from .cost import CostBreakdown, attention_running_cost, terminal_cost_density, terminal_cost_endpoint
from .density import (
    DensityField,
    PhaseBox,
    SmoothedDelta,
    density_at,
    estimate_density,
    smoothed_delta,
    terminal_mismatch,
)
from .dynamics import ArmParams, System, TwoLinkArm, finite_difference_jacobians
from .errors import (
    ConfigError,
    DegenerateGainError,
    DivergenceError,
    MinattError,
    OutOfHorizonError,
    RiccatiBlowUpError,
    SingularMassError,
    SupportOverflowError,
    UnreachableTargetError,
)
from .gradient_step import UpdateDirection, apply, compute_direction, ellipticity_constants
from .lqr_init import Reference, RiccatiSolution, initial_law, initialize, make_reference, solve_riccati_backward
from .optimizer import SolveResult, line_search, solve
from .rollout import Trajectory, integrate_closed_loop, propagate_sensitivity, stable_substeps
from .schedules import ControlLaw, TimeGrid, eval_control, time_derivatives

__version__ = "0.1.0"
