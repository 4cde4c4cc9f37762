"""Steer a probability density through x(k+1) = a(k) x(k) + u(k) by its power moments."""

from .density import DensityComponent, DensitySpec, closed_form_moments, evaluate, quadrature_moments
from .errors import (
    ConfigError, ControlOutsideCone, IterationLimit, LinesearchStall, NoFeasibleWait,
    NotInLPlus, RealizationError, SteeringError,
)
from .hankel import in_cone, is_positive_definite, to_hankel
from .moment_system import ScalarSystem, build_A, invert_for_control, propagate, uncontrolled_state
from .montecarlo import SimulationReport, empirical_density, simulate
from .realize import Prior, RealizedDensity, kl_diagnostic, realize, solve
from .steering import SteeringPlan, SteeringProblem, find_k0, make_weights, plan, verify_plan

__version__ = "0.1.0"
