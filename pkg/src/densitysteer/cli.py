"""Command-line runner: ``steer run``, ``steer moments``, ``steer realize``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import density as dens
from .errors import ConfigError, RealizationError, SimulationFailed, SteeringError
from .hankel import as_moments, in_cone
from .moment_system import ScalarSystem
from .montecarlo import Z_THRESHOLD, simulate
from .realize import DEFAULT_VARIANCE_FACTOR, Prior, RealizedDensity, default_prior, kl_diagnostic, realize
from .steering import SCHEDULES, SteeringProblem, plan, verify_plan

log = logging.getLogger("densitysteer")

SCHEMA_VERSION = 1
BUNDLED = ("example1", "example2")


@dataclass
class RunConfig:
    initial_density: dens.DensitySpec
    terminal: dens.DensitySpec | np.ndarray
    order: int
    horizon: int
    coefficients: list[float] | dict
    schedule: str = "uniform"
    alpha: float = 2.0
    prior: dict | None = None
    particles: int = 1_000_000
    output_dir: str = "steer-output"
    seed: int = 0
    threshold: float = Z_THRESHOLD

    @property
    def target_moments(self) -> np.ndarray:
        if isinstance(self.terminal, dens.DensitySpec):
            return dens.closed_form_moments(self.terminal, self.order)
        return self.terminal

    def resolved_coefficients(self) -> list[float]:
        if isinstance(self.coefficients, list):
            return self.coefficients
        lo, hi = self.coefficients["uniform_range"]
        rng = np.random.default_rng(self.coefficients.get("seed", 0))
        return [float(a) for a in rng.uniform(lo, hi, self.horizon)]


def _require(data: dict, key: str):
    if key not in data:
        raise ConfigError(f"config is missing required key {key!r}")
    return data[key]


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded JSON config. Raises ConfigError with a readable message."""
    try:
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        order = int(_require(data, "order"))
        if order < 2 or order % 2:
            raise ConfigError(f"order must be even and >= 2, got {order}")
        horizon = int(_require(data, "horizon"))
        if horizon < 1:
            raise ConfigError(f"horizon must be at least 1, got {horizon}")
        initial = dens.DensitySpec.from_dict(_require(data, "initial_density"))
        raw_terminal = _require(data, "terminal")
        if isinstance(raw_terminal, list):
            terminal = as_moments(raw_terminal)
            if terminal.size != order:
                raise ConfigError(f"terminal moments have length {terminal.size}, order is {order}")
        else:
            terminal = dens.DensitySpec.from_dict(raw_terminal)

        coeffs = _require(data, "coefficients")
        if isinstance(coeffs, list):
            coeffs = [float(a) for a in coeffs]
            if len(coeffs) != horizon:
                raise ConfigError(f"{len(coeffs)} coefficients given for horizon {horizon}")
            if not all(0 < a < 1 for a in coeffs):
                raise ConfigError("every coefficient must lie in (0, 1)")
        else:
            lo, hi = (float(v) for v in _require(coeffs, "uniform_range"))
            if not 0 < lo <= hi < 1:
                raise ConfigError(f"uniform_range must satisfy 0 < lo <= hi < 1, got [{lo}, {hi}]")
            coeffs = {"uniform_range": [lo, hi], "seed": int(coeffs.get("seed", 0))}

        weights = data.get("weights", "uniform")
        if isinstance(weights, str):
            weights = {"schedule": weights}
        schedule = weights.get("schedule", "uniform")
        if schedule not in SCHEDULES:
            raise ConfigError(f"unknown weight schedule {schedule!r}")
        alpha = float(weights.get("alpha", 2.0))

        prior = data.get("prior")
        if prior is not None:
            kind = prior.get("kind", "gaussian")
            if kind not in ("gaussian", "cauchy"):
                raise ConfigError(f"unknown prior kind {kind!r}")
            if ("location" in prior) != ("scale" in prior):
                raise ConfigError("prior needs both location and scale, or neither")

        particles = int(data.get("particles", 1_000_000))
        if particles < 1:
            raise ConfigError("particles must be at least 1")
        return RunConfig(
            initial_density=initial, terminal=terminal, order=order, horizon=horizon,
            coefficients=coeffs, schedule=schedule, alpha=alpha, prior=prior,
            particles=particles, output_dir=str(data.get("output_dir", "steer-output")),
            seed=int(data.get("seed", 0)), threshold=float(data.get("pass_threshold", Z_THRESHOLD)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path: str) -> RunConfig:
    """Read a config file, or one of the bundled names ``example1`` / ``example2``."""
    p = Path(path)
    try:
        if not p.exists() and path in BUNDLED:
            text = resources.files("densitysteer.configs").joinpath(f"{path}.json").read_text()
        else:
            text = p.read_text()
        data = json.loads(text)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data)


def _prior_for(moments, spec: dict | None) -> Prior:
    if spec is None:
        return default_prior(moments)
    kind = spec.get("kind", "gaussian")
    if "location" in spec:
        return Prior(kind, float(spec["location"]), float(spec["scale"]))
    return default_prior(moments, kind, float(spec.get("variance_factor", DEFAULT_VARIANCE_FACTOR)))


@dataclass
class RunReport:
    config: RunConfig
    coefficients: list[float]
    problem: SteeringProblem
    plan: object
    diagnostics: object
    realized: dict[int, RealizedDensity]
    realization_stats: dict[int, dict]
    simulation: object
    seed: int = 0
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.diagnostics.ok(tolerance=1e-9) and self.simulation.passed

    def to_dict(self) -> dict:
        """Serializable summary. Timings are left out so reruns are byte-identical."""
        p = self.plan
        fl = lambda a: [float(v) for v in a]
        d = self.diagnostics
        return {
            "schema_version": SCHEMA_VERSION,
            "order": self.problem.order,
            "horizon": self.problem.horizon,
            "coefficients": fl(self.coefficients),
            "initial_moments": fl(self.problem.initial_moments),
            "target_moments": fl(self.problem.target_moments),
            "seed": self.seed,
            "plan": {
                "k0": p.k0,
                "noop": p.noop,
                "schedule": {"name": p.schedule[0], "alpha": p.schedule[1]},
                "weights": fl(p.weights),
                "states": [fl(s) for s in p.states],
                "controls": [fl(u) for u in p.controls],
                "notes": list(p.notes),
            },
            "verification": {
                "max_state_deviation": d.max_state_deviation,
                "terminal_deviation": d.terminal_deviation,
                "state_margins": d.state_margins,
                "control_margins": d.control_margins,
            },
            "realizations": {str(k): v for k, v in sorted(self.realization_stats.items())},
            "simulation": self.simulation.to_dict(),
            "pass": self.ok,
        }


def run(config: RunConfig, particles: int | None = None, seed: int | None = None) -> RunReport:
    """plan -> realize each controlled step -> simulate. Raises SteeringError subclasses."""
    timings = {}
    t0 = time.perf_counter()
    coefficients = config.resolved_coefficients()
    problem = SteeringProblem(
        ScalarSystem(coefficients),
        dens.closed_form_moments(config.initial_density, config.order),
        config.target_moments, config.initial_density,
    )
    steering_plan = plan(problem, config.schedule, config.alpha)
    diagnostics = verify_plan(steering_plan, problem)
    if not diagnostics.ok(tolerance=1e-9):
        raise SteeringError(f"plan failed re-verification: {diagnostics}")
    timings["plan"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    realized, stats = {}, {}
    for k, u in enumerate(steering_plan.controls):
        if not steering_plan.is_controlled(k):
            continue
        prior = _prior_for(u, config.prior)
        step_start = time.perf_counter()
        try:
            density = realize(u, prior)
        except RealizationError as exc:
            raise type(exc)(f"step {k}: {exc}") from exc
        timings[f"realize_{k}"] = time.perf_counter() - step_start
        realized[k] = density
        achieved = density.moments()
        stats[k] = {
            "prior": prior.to_dict(),
            "iterations": density.iterations,
            "gradient_norm": density.gradient_norm,
            "kl": kl_diagnostic(density),
            "lambda": [[float(v) for v in row] for row in density.lam],
            "moment_error": float(np.abs(achieved[1:] - u).max()),
            "mass": float(achieved[0]),
        }
    timings["realize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    count = config.particles if particles is None else particles
    seed = config.seed if seed is None else seed
    report = simulate(problem, steering_plan, realized, count, seed, config.threshold)
    timings["simulate"] = time.perf_counter() - t0
    return RunReport(config, coefficients, problem, steering_plan, diagnostics,
                     realized, stats, report, seed, timings)


def _write_csv(path: Path, header: list[str], rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (int, str)) else repr(float(v)) for v in row])
    path.write_text(buf.getvalue())


def emit_outputs(report: RunReport, directory) -> list[Path]:
    """Write trajectory tables, realized-density curves and report.json into `directory`."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    order = report.problem.order
    cols = ["k"] + [f"m{l}" for l in range(1, order + 1)]
    written = []

    path = out / "state_moments.csv"
    _write_csv(path, cols, ([k, *s] for k, s in enumerate(report.plan.states)))
    written.append(path)
    path = out / "control_moments.csv"
    _write_csv(path, cols, ([k, *u] for k, u in enumerate(report.plan.controls)))
    written.append(path)

    sim = report.simulation
    path = out / "simulated_moments.csv"
    _write_csv(path, cols + [f"se{l}" for l in range(1, order + 1)],
               ([k, *m, *se] for k, (m, se) in enumerate(zip(sim.step_moments, sim.step_standard_errors))))
    written.append(path)

    for k, density in sorted(report.realized.items()):
        u, p = density.curve()
        path = out / f"realized_density_k{k}.csv"
        _write_csv(path, ["u", "density"], zip(u, p))
        written.append(path)

    path = out / "report.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written


# -- subcommands --------------------------------------------------------------

def _cmd_run(args) -> int:
    config = load_config(args.config)
    outdir = args.out or config.output_dir
    report = run(config, particles=args.particles, seed=args.seed)
    emit_outputs(report, outdir)
    sim = report.simulation
    print(f"k0={report.plan.k0} schedule={report.plan.schedule[0]} "
          f"terminal deviation={report.diagnostics.terminal_deviation:.2e}")
    for k, s in sorted(report.realization_stats.items()):
        print(f"  step {k}: {s['iterations']} iterations, gradient {s['gradient_norm']:.1e}, "
              f"KL {s['kl']:.4f}")
    print("  terminal z-scores: " + " ".join(f"{z:+.2f}" for z in sim.z_scores))
    print("  timings: " + " ".join(f"{k}={v:.3f}s" for k, v in report.timings.items()
                                   if not k.startswith("realize_")))
    print(f"outputs written to {outdir}")
    if not report.ok:
        raise SimulationFailed("simulated terminal moments are outside the z-score threshold")
    return 0


def _cmd_moments(args) -> int:
    path = Path(args.density)
    try:
        data = json.loads(path.read_text())
        spec = dens.DensitySpec.from_dict(data.get("components", data) if isinstance(data, dict) else data)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read density {path}: {exc}") from exc
    closed = dens.closed_form_moments(spec, args.order)
    quad = dens.quadrature_moments(spec, args.order, 1e-9)
    print(json.dumps({
        "order": args.order,
        "moments": [float(v) for v in closed],
        "quadrature_moments": [float(v) for v in quad],
        "max_abs_difference": float(np.abs(closed - quad).max()),
    }, indent=2))
    return 0


def _parse_moments(text: str) -> np.ndarray:
    p = Path(text)
    try:
        if p.exists():
            values = json.loads(p.read_text())
            if isinstance(values, dict):
                values = values["moments"]
        else:
            values = [float(v) for v in text.replace(",", " ").split()]
        return as_moments(values)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse moments {text!r}: {exc}") from exc


def _cmd_realize(args) -> int:
    m = _parse_moments(args.moments)
    if not in_cone(m):
        raise ConfigError("moments are not in the PD Hankel cone; no density has them")
    spec = {"kind": args.prior, "variance_factor": args.variance_factor}
    if args.location is not None or args.scale is not None:
        if args.location is None or args.scale is None:
            raise ConfigError("--location and --scale go together")
        spec.update(location=args.location, scale=args.scale)
    prior = _prior_for(m, spec)
    density = realize(m, prior, tolerance=args.tolerance, max_iterations=args.max_iterations)
    achieved = density.moments()
    print(json.dumps({
        "moments": [float(v) for v in m],
        "prior": prior.to_dict(),
        "lambda": [[float(v) for v in row] for row in density.lam],
        "iterations": density.iterations,
        "gradient_norm": density.gradient_norm,
        "kl": kl_diagnostic(density),
        "realized_moments": [float(v) for v in achieved[1:]],
        "mass": float(achieved[0]),
    }, indent=2))
    if args.out:
        u, p = density.curve()
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        _write_csv(Path(args.out), ["u", "density"], zip(u, p))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steer", description="Density steering by power moments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="plan, realize and simulate a steering problem")
    p.add_argument("config", help="JSON config path, or a bundled name: " + ", ".join(BUNDLED))
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed for the particle simulation")
    p.add_argument("--particles", type=int, help="number of simulated particles")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("moments", help="power moments of a mixture density")
    p.add_argument("density", help="JSON file with a 'components' list")
    p.add_argument("--order", type=int, required=True, help="even moment order 2n")
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("realize", help="realize a moment vector as an analytic density")
    p.add_argument("moments", help="comma-separated m1..m2n, or a JSON file")
    p.add_argument("--prior", choices=("gaussian", "cauchy"), default="gaussian")
    p.add_argument("--location", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--variance-factor", type=float, default=DEFAULT_VARIANCE_FACTOR,
                   help="prior variance as a multiple of the target variance (default %(default)s)")
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--out", help="CSV path for the (u, density) curve")
    p.set_defaults(func=_cmd_realize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SteeringError as exc:
        print(f"steer: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # Invalid problem data that got past config parsing (e.g. moments outside the cone).
        print(f"steer: invalid input: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
