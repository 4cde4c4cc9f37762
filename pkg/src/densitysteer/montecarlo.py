"""Particle simulation of the scalar system under i.i.d. realized controls."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .density import sample as sample_density
from .realize import RealizedDensity
from .steering import SteeringPlan, SteeringProblem

CHUNK_SIZE = 1 << 18
Z_THRESHOLD = 5.0


class _PowerSums:
    """Running sums of x^l for l = 0..2*order, enough for moments and their standard errors."""

    def __init__(self, order: int):
        self.order = order
        self.sums = np.zeros(2 * order + 1)

    def add(self, x: np.ndarray):
        p = np.ones_like(x)
        for l in range(2 * self.order + 1):
            self.sums[l] += p.sum()
            p = p * x

    def moments_and_errors(self):
        N = self.sums[0]
        mean = self.sums / N
        m = mean[1 : self.order + 1]
        var = mean[2 : 2 * self.order + 1 : 2] - m**2
        return m, np.sqrt(np.maximum(var, 0.0) / N)


@dataclass
class SimulationReport:
    particle_count: int
    empirical_moments: np.ndarray
    standard_errors: np.ndarray
    target: np.ndarray
    z_scores: np.ndarray
    passed: bool
    threshold: float = Z_THRESHOLD
    step_moments: list[np.ndarray] = field(default_factory=list)
    step_standard_errors: list[np.ndarray] = field(default_factory=list)
    step_z_scores: list[np.ndarray] = field(default_factory=list)
    correlations: list[float | None] = field(default_factory=list)

    def tracking_ok(self) -> bool:
        return all(np.all(np.abs(z) < self.threshold) for z in self.step_z_scores)

    def independence_ok(self) -> bool:
        bound = 5.0 / np.sqrt(self.particle_count)
        return all(r is None or abs(r) < bound for r in self.correlations)

    def to_dict(self) -> dict:
        as_list = lambda a: [float(v) for v in a]
        return {
            "particle_count": self.particle_count,
            "empirical_moments": as_list(self.empirical_moments),
            "standard_errors": as_list(self.standard_errors),
            "target": as_list(self.target),
            "z_scores": as_list(self.z_scores),
            "pass": self.passed,
            "threshold": self.threshold,
            "step_moments": [as_list(m) for m in self.step_moments],
            "step_standard_errors": [as_list(s) for s in self.step_standard_errors],
            "step_z_scores": [as_list(z) for z in self.step_z_scores],
            "state_control_correlations": [None if r is None else float(r) for r in self.correlations],
        }


def simulate(problem: SteeringProblem, plan: SteeringPlan,
             realized: dict[int, RealizedDensity] | list, count: int, seed: int = 0,
             threshold: float = Z_THRESHOLD, chunk_size: int = CHUNK_SIZE) -> SimulationReport:
    """Push `count` particles from the initial density through the plan.

    `realized` maps each controlled step to its density (a list indexed by
    step, with None for zero-control steps, is also accepted). Particles are
    processed in fixed-size chunks, each with its own generator spawned from
    `seed`, so results depend only on (seed, chunk_size).
    """
    if count < 1:
        raise ValueError("particle count must be at least 1")
    if problem.initial_density is None:
        raise ValueError("simulation needs the initial density, not just its moments")
    if not isinstance(realized, dict):
        realized = {k: d for k, d in enumerate(realized) if d is not None}
    K, order = problem.horizon, problem.order
    controlled = [plan.is_controlled(k) for k in range(K)]
    missing = [k for k in range(K) if controlled[k] and k not in realized]
    if missing:
        raise ValueError(f"no realized control density for steps {missing}")

    states = [_PowerSums(order) for _ in range(K + 1)]
    cross = np.zeros((K, 5))  # sums of x, u, x^2, u^2, x*u
    n_chunks = -(-count // chunk_size)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        rng = np.random.default_rng(child)
        size = min(chunk_size, count - i * chunk_size)
        x = sample_density(problem.initial_density, size, rng=rng)
        states[0].add(x)
        for k, a in enumerate(problem.system.coefficients):
            if controlled[k]:
                u = realized[k].sample(size, rng=rng)
                cross[k] += (x.sum(), u.sum(), (x * x).sum(), (u * u).sum(), (x * u).sum())
                x = a * x + u
            else:
                x = a * x
            states[k + 1].add(x)

    step_m, step_se, step_z = [], [], []
    for k, acc in enumerate(states):
        m, se = acc.moments_and_errors()
        step_m.append(m)
        step_se.append(se)
        step_z.append((m - plan.states[k]) / se)

    corr = []
    for k in range(K):
        if not controlled[k]:
            corr.append(None)
            continue
        sx, su, sxx, suu, sxu = cross[k] / count
        corr.append(float((sxu - sx * su) / np.sqrt((sxx - sx**2) * (suu - su**2))))

    m, se = step_m[-1], step_se[-1]
    z = (m - problem.target_moments) / se
    return SimulationReport(
        particle_count=count, empirical_moments=m, standard_errors=se,
        target=problem.target_moments.copy(), z_scores=z, passed=bool(np.all(np.abs(z) < threshold)),
        threshold=threshold, step_moments=step_m, step_standard_errors=step_se,
        step_z_scores=step_z, correlations=corr,
    )


def empirical_density(samples, bin_count: int = 100, range: tuple[float, float] | None = None):
    """Normalized histogram; returns (edges, density) with sum(density * widths) == 1."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no samples")
    if bin_count < 2:
        raise ValueError("bin_count must be at least 2")
    density, edges = np.histogram(samples, bins=bin_count, range=range, density=True)
    return edges, density
