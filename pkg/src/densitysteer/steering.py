"""Open-loop moment steering: wait k0 uncontrolled steps, then move the state
moments along a convex path to the target and read off the control moments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .density import DensitySpec
from .errors import ControlOutsideCone, NoFeasibleWait
from .hankel import PD_TOLERANCE, as_moments, cone_margin, in_cone
from .moment_system import ScalarSystem, invert_for_control, propagate, uncontrolled_state

SCHEDULES = ("uniform", "front_loaded", "back_loaded")
# Tried in order after the requested schedule fails.
FALLBACK_LADDER = (
    ("front_loaded", 1.5), ("front_loaded", 2.0), ("front_loaded", 3.0),
    ("back_loaded", 1.5), ("back_loaded", 2.0), ("back_loaded", 3.0),
)


@dataclass(frozen=True)
class SteeringProblem:
    system: ScalarSystem
    initial_moments: np.ndarray
    target_moments: np.ndarray
    initial_density: DensitySpec | None = None

    def __post_init__(self):
        x0 = as_moments(self.initial_moments)
        sigma = as_moments(self.target_moments)
        if x0.size != sigma.size:
            raise ValueError(f"initial order {x0.size} differs from target order {sigma.size}")
        if not in_cone(x0):
            raise ValueError("initial moments are not in the PD Hankel cone")
        if not in_cone(sigma):
            raise ValueError("target moments are not in the PD Hankel cone")
        object.__setattr__(self, "initial_moments", x0)
        object.__setattr__(self, "target_moments", sigma)

    @property
    def order(self) -> int:
        return self.initial_moments.size

    @property
    def horizon(self) -> int:
        return self.system.horizon


@dataclass
class SteeringPlan:
    k0: int
    weights: np.ndarray
    states: list[np.ndarray]
    controls: list[np.ndarray]
    errors: list[np.ndarray]
    coefficients: tuple[float, ...]
    schedule: tuple[str, float] = ("uniform", 1.0)
    noop: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.controls)

    def is_controlled(self, k: int) -> bool:
        return not self.noop and k >= self.k0


def find_k0(problem: SteeringProblem, tolerance: float = PD_TOLERANCE) -> int:
    """Smallest wait step at which target minus the uncontrolled state has a PD Hankel.

    The Hankel of the difference keeps 1 in its leading slot.
    """
    for k0 in range(problem.horizon):
        drift = uncontrolled_state(problem.initial_moments, problem.system, k0)
        if in_cone(problem.target_moments - drift, tolerance):
            return k0
    raise NoFeasibleWait(
        f"no wait step k0 <= {problem.horizon - 1} gives a PD moment error; "
        "lengthen the horizon or relax the target"
    )


def make_weights(count: int, schedule: str = "uniform", alpha: float = 2.0) -> np.ndarray:
    """Positive weights summing to one over the `count` controlled steps."""
    if count < 1:
        raise ValueError("need at least one controlled step")
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown weight schedule {schedule!r}")
    if schedule == "uniform" or count == 1:
        return np.full(count, 1.0 / count)
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    base = 1.0 / (alpha + count - 1)
    w = np.full(count, base)
    w[0 if schedule == "front_loaded" else -1] = alpha * base
    return w


def _trajectory(problem: SteeringProblem, k0: int, weights: np.ndarray):
    x0, system = problem.initial_moments, problem.system
    states = [uncontrolled_state(x0, system, k) for k in range(k0 + 1)]
    start = states[-1]
    error = problem.target_moments - start
    cumulative = np.cumsum(weights)
    for k in range(k0 + 1, problem.horizon):
        states.append(start + cumulative[k - k0 - 1] * error)
    # Land exactly on the target; cumulative[-1] may differ from 1 by an ulp.
    states.append(problem.target_moments.copy())
    return states, error


def _zero_plan(problem: SteeringProblem) -> SteeringPlan:
    K = problem.horizon
    zero = np.zeros(problem.order)
    states = [uncontrolled_state(problem.initial_moments, problem.system, k) for k in range(K + 1)]
    return SteeringPlan(
        k0=K, weights=np.zeros(0), states=states, controls=[zero.copy() for _ in range(K)],
        errors=[problem.target_moments - s for s in states], coefficients=problem.system.coefficients,
        schedule=("none", 1.0), noop=True,
        notes=["target equals the uncontrolled terminal moments; all controls are zero"],
    )


def plan(problem: SteeringProblem, schedule: str = "uniform", alpha: float = 2.0,
         tolerance: float = PD_TOLERANCE) -> SteeringPlan:
    """Build the state and control moment sequences.

    Raises NoFeasibleWait when no wait step works inside the horizon, and
    ControlOutsideCone when no weight schedule keeps every control in the cone.
    """
    K = problem.horizon
    drift_K = uncontrolled_state(problem.initial_moments, problem.system, K)
    scale = max(1.0, float(np.abs(problem.target_moments).max()))
    if np.abs(problem.target_moments - drift_K).max() <= 1e-12 * scale:
        return _zero_plan(problem)

    k0 = find_k0(problem, tolerance)
    count = K - k0
    first = ("uniform", 1.0) if schedule == "uniform" else (schedule, float(alpha))
    attempts = [first] + [s for s in FALLBACK_LADDER if s != first]
    if count == 1:
        # Every schedule degenerates to the single weight 1.
        attempts = [("uniform", 1.0)]

    failures = []
    for name, a in attempts:
        weights = make_weights(count, name, a)
        states, error = _trajectory(problem, k0, weights)
        controls = [np.zeros(problem.order) for _ in range(k0)]
        for k in range(k0, K):
            controls.append(invert_for_control(states[k], states[k + 1], problem.system.coefficients[k]))
        bad = [k for k in range(k0, K) if not in_cone(controls[k], tolerance)]
        if not bad:
            notes = [] if not failures else [f"fell back to {name}({a}) after {', '.join(failures)}"]
            return SteeringPlan(
                k0=k0, weights=weights, states=states, controls=controls,
                errors=[problem.target_moments - s for s in states],
                coefficients=problem.system.coefficients, schedule=(name, float(a)), notes=notes,
            )
        failures.append(f"{name}({a}) left steps {bad} outside the cone")
    raise ControlOutsideCone("; ".join(failures))


@dataclass
class PlanDiagnostics:
    max_state_deviation: float
    terminal_deviation: float
    state_margins: list[float]
    control_margins: list[float | None]

    def ok(self, tolerance: float = 1e-10, pd_tolerance: float = PD_TOLERANCE) -> bool:
        return (
            self.max_state_deviation < tolerance
            and self.terminal_deviation < tolerance
            and all(m is None or m > pd_tolerance for m in self.control_margins)
        )


def verify_plan(plan: SteeringPlan, problem: SteeringProblem) -> PlanDiagnostics:
    """Re-propagate the initial moments through the plan's controls and report drift."""
    x = problem.initial_moments
    worst = 0.0
    for k, (a, u) in enumerate(zip(problem.system.coefficients, plan.controls)):
        x = propagate(x, u, a)
        worst = max(worst, float(np.abs(x - plan.states[k + 1]).max()))
    terminal = float(np.abs(x - problem.target_moments).max())
    state_margins = [cone_margin(s) for s in plan.states]
    control_margins = [cone_margin(u) if plan.is_controlled(k) else None
                       for k, u in enumerate(plan.controls)]
    return PlanDiagnostics(worst, terminal, state_margins, control_margins)
