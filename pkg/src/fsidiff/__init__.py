"""Differentiable 2D fluid-structure interaction on a staggered grid.

The fluid is advanced with Crank-Nicolson in time; each step solves the
momentum, continuity and no-slip equations together by Newton's method, with
the body enforced through immersed-boundary forces. Sensitivities of the flow
with respect to body parameters reuse each step's factorization.
"""

from .bodies import (AngleTrajectory, CubicProfile, CylinderBody, CylinderParams, GaitParams, TailBody,
                     cylinder_boundary, tail_forward_kinematics)
from .errors import (BodyTooLargeForDomain, ConfigError, FsiError, GridTooSmall, LineSearchFailure,
                     NoOscillationDetected, NodeOutsideDomain, NonConvergence, SingularSystem,
                     StaleFactorization, ZeroReferenceVelocity)
from .fsi import FsiStepResult, Trajectory, fsi_step, simulate
from .grid import (DomainBoundaryConditions, EdgeCondition, FluidOperators, FluidState, GridSpec,
                   build_operators, vorticity_field)
from .immersed import ROMA, BoundaryMesh, DeltaKernel, boundary_forces, interpolation_matrix, net_force
from .navier_stokes import FluidConfig, ns_step
from .sensitivity import (ObjectiveSpec, RolloutProblem, SensitivityState, finite_difference_check, ift_step,
                          objective_gradient, objective_thrust)

__version__ = "0.1.0"
