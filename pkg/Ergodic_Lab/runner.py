"""Experiment dispatch and result persistence for the management commands.

Each experiment handler returns ``(tables, summary)``; ``run`` writes every
table as ``<out>/<name>.csv`` and the summary as ``<out>/<experiment>.json``.
Both carry the sha256 of the rendered config and the master seed.
"""

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from django.utils import timezone

from .engine import MonteCarloEngine, parse_observable, scheme_params
from .errors import ConfigError, NotGradientProblem, SlopeUndetermined
from .experiments import (
    analytic_cost,
    contraction_test,
    cost_end_to_end,
    cost_schedule,
    divergence_demo,
    ergodic_decay_rate,
    ergodic_error_curve,
    flatness_ratio,
    moment_growth_sweep,
    plateau_level,
    steps_for,
    weak_error_rows,
    weak_error_slope,
)
from .forms import render_config
from .model import (
    LinearDrift,
    build_problem,
    check_one_sided,
    check_poly_growth,
    polynomial_problem,
)
from .noise import MasterSeed, make_stream
from .oracle import (
    QuadratureGrid,
    invariant_reference,
    ou_finite_time_moment,
    reference_finite_time,
    rejection_sample,
)
from .scheme import StepKind, modified_drift_slope_sup, modified_problem, simulate_path

logger = logging.getLogger(__name__)

DUAL_ORACLE_SAMPLES = 200_000
WEAK_ORDER_RANGE = (0.7, 1.3)
CONTRACTION_LIMIT = 1.05
MAX_TRAJECTORY_ROWS = 1000


@dataclass
class RunOutcome:
    experiment: str
    config_hash: str
    summary: dict
    artifacts: list = field(default_factory=list)
    status: int = 0


# ==========================================
# 1. CONFIG -> OBJECTS
# ==========================================

def problem_from_config(config):
    if config.problem == "polynomial":
        return polynomial_problem(config.drift_coeff, config.gamma, config.growth_degree,
                                  sigma=1.0 if config.sigma is None else config.sigma)
    return build_problem(config.problem, gamma=config.gamma, sigma=config.sigma, dim=config.dim,
                         rotation=config.rotation)


def initial_state(config, problem, key="x0"):
    values = getattr(config, key)
    if not values:
        return np.zeros(problem.dim)
    if len(values) != problem.dim:
        raise ConfigError([("InvalidValue", key, f"needs {problem.dim} entries, got {len(values)}")])
    return np.asarray(values, dtype=float)


def engine_from_config(config):
    defaults = settings.TAMED_ERGO
    return MonteCarloEngine(workers=config.workers, batch_size=defaults["BATCH_SIZE"],
                            overflow_threshold=defaults["OVERFLOW_THRESHOLD"])


def config_hash(config):
    return hashlib.sha256(render_config(config).encode("utf-8")).hexdigest()


def _grid_from_config(config):
    if config.lower is None or config.upper is None:
        return None
    return QuadratureGrid(config.lower, config.upper, config.nodes, config.rule)


def _closed_form_finite_time(problem, obs, x0, T):
    """E[X(T)^2] for 1D OU with obs = x^2, else None."""
    scale = problem.noise.isotropic_scale()
    if not isinstance(problem.drift, LinearDrift) or problem.dim != 1 or scale is None:
        return None
    if obs.label not in ("moment:2", "coord:0:2"):
        return None
    return ou_finite_time_moment(problem.drift.rate, scale, float(x0[0]), T)


# ==========================================
# 2. PERSISTENCE
# ==========================================

def _format(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (tuple, list)):
        return " ".join(_format(v) for v in value)
    return str(value)


def output_path(out_dir, name):
    """``out_dir / name``, refusing anything that resolves outside ``out_dir``."""
    root = Path(out_dir).resolve()
    target = (root / name).resolve()
    if target != root and root not in target.parents:
        raise ValueError(f"output {name!r} escapes the output directory {root}")
    return target


def header_lines(config, problem=None):
    lines = [("config_hash", config_hash(config)), ("seed", config.seed), ("problem", config.problem)]
    lines += [(key, value) for key, value in config.as_dict().items() if key not in ("seed", "problem")]
    if problem is not None:
        lines += [
            ("problem_dim", problem.dim),
            ("problem_gamma", problem.gamma),
            ("problem_growth_degree", problem.growth_degree),
            ("problem_noise_scale", problem.noise.isotropic_scale()),
        ]
    return lines


def write_table(path, config, columns, rows, problem=None):
    """CSV with ``# key = value`` headers, one header row, then the data rows."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in header_lines(config, problem):
            f.write(f"# {key} = {_format(value)}\n")
        f.write(f"# timestamp = {timezone.now().isoformat()}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row.get(column)) for column in columns])
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_summary(path, config, summary, wall_clock):
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "experiment": config.experiment,
        "config_hash": config_hash(config),
        "seed": config.seed,
        **_jsonable(summary),
        "wall_clock_seconds": wall_clock,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
        f.write("\n")
    return path


# ==========================================
# 3. EXPERIMENT HANDLERS
# ==========================================
# Each returns (tables, summary); tables maps a file stem to (columns, rows).

ESTIMATE_COLUMNS = ["mean", "variance", "n_samples", "stderr", "ci95_halfwidth", "n_exploded"]
SWEEP_COLUMNS = ["parameter", *ESTIMATE_COLUMNS, "reference", "abs_error", "error_stderr", "normalized",
                 "transient_bound"]


def _trajectory_checkpoints(config):
    if config.checkpoints:
        return list(config.checkpoints)
    stride = max(1, config.steps // MAX_TRAJECTORY_ROWS)
    return sorted(set(range(0, config.steps + 1, stride)) | {config.steps})


def run_simulate(config, problem, master):
    params = scheme_params(config.dt, config.steps, alpha=config.alpha, dt_cap=config.dt_cap)
    x0 = initial_state(config, problem)
    result = simulate_path(problem, params, StepKind(config.scheme), x0, make_stream(master, 0),
                           checkpoints=_trajectory_checkpoints(config), zero_noise=config.zero_noise)
    columns = ["step", "time", *(f"x{i}" for i in range(problem.dim)), "norm"]
    rows = [
        {"step": step, "time": step * config.dt, **{f"x{i}": float(state[i]) for i in range(problem.dim)},
         "norm": float(np.linalg.norm(state))}
        for step, state in result.recorded_states
    ]
    summary = {
        "final_state": result.final_state,
        "sup_norm": result.sup_norm,
        "exploded_at": result.exploded_at,
        "max_displacement": result.max_displacement,
    }
    return {"simulate": (columns, rows)}, summary


def run_estimate(config, problem, master):
    params = scheme_params(config.dt, config.steps, alpha=config.alpha, dt_cap=config.dt_cap)
    obs = parse_observable(config.observable)
    estimate = engine_from_config(config).estimate_observable(
        problem, params, StepKind(config.scheme), initial_state(config, problem), obs, config.paths, master,
        zero_noise=config.zero_noise,
    )
    row = {"observable": obs.label, "horizon": params.horizon, **estimate.as_dict()}
    return {"estimate": (["observable", "horizon", *ESTIMATE_COLUMNS], [row])}, {"estimate": estimate.as_dict()}


def run_oracle(config, problem, master):
    obs = parse_observable(config.observable)
    try:
        oracle = invariant_reference(problem, obs, grid=_grid_from_config(config))
    except NotGradientProblem:
        if config.dt_ref is None or config.horizon is None:
            raise
        estimate = reference_finite_time(problem, obs, initial_state(config, problem), config.horizon,
                                         config.dt_ref, config.paths, master, engine=engine_from_config(config),
                                         alpha=config.alpha, dt_cap=config.dt_cap)
        row = {"observable": obs.label, "value": estimate.mean, "provenance": "fine-step", "stderr": estimate.stderr}
        summary = {"value": estimate.mean, "provenance": "fine-step", "estimate": estimate.as_dict(),
                   "dt_ref": config.dt_ref, "horizon": config.horizon}
        return {"oracle": (["observable", "value", "provenance", "stderr"], [row])}, summary

    summary = {"observable": obs.label, **oracle.as_dict()}
    row = {"observable": obs.label, "value": oracle.value, "provenance": oracle.provenance, "stderr": 0.0}
    if problem.dim == 1 and problem.potential is not None:
        samples = rejection_sample(problem, problem.noise.isotropic_scale(), DUAL_ORACLE_SAMPLES, config.seed)
        values = obs(samples[:, None])
        dual_mean = float(np.mean(values))
        dual_stderr = float(np.std(values, ddof=1) / math.sqrt(values.size))
        summary["dual_mean"] = dual_mean
        summary["dual_stderr"] = dual_stderr
        summary["dual_agrees"] = abs(dual_mean - oracle.value) <= 4 * dual_stderr
        if not summary["dual_agrees"]:
            logger.warning("rejection sampler disagrees with the %s oracle: %.6g vs %.6g",
                           oracle.provenance, dual_mean, oracle.value)
    return {"oracle": (["observable", "value", "provenance", "stderr"], [row])}, summary


def run_moment_growth(config, problem, master):
    rows = moment_growth_sweep(problem, initial_state(config, problem), config.order, config.dt, config.times,
                               config.paths, master, engine=engine_from_config(config), alpha=config.alpha,
                               dt_cap=config.dt_cap)
    summary = {"order": config.order, "flatness_ratio": flatness_ratio(rows), "flat": flatness_ratio(rows) <= 2.0}
    return {"moment_growth": (SWEEP_COLUMNS, [row.as_dict() for row in rows])}, summary


def run_weak_error(config, problem, master):
    obs = parse_observable(config.observable)
    x0 = initial_state(config, problem)
    reference = None if config.dt_ref is not None else _closed_form_finite_time(problem, obs, x0, config.horizon)
    rows = weak_error_rows(problem, obs, x0, config.horizon, config.dt_list, config.paths, master,
                           reference=reference, dt_ref=config.dt_ref, engine=engine_from_config(config),
                           kind=StepKind(config.scheme), alpha=config.alpha, dt_cap=config.dt_cap)
    summary = {"reference": "closed-form" if reference is not None else "fine-step"}
    tables = {"weak_error": (SWEEP_COLUMNS, [row.as_dict() for row in rows])}
    try:
        slope = weak_error_slope(rows)
    except SlopeUndetermined as exc:
        summary.update(slope=None, order_in_range=False, note=str(exc))
        raise _Partial(tables, summary, exc) from exc
    low, high = WEAK_ORDER_RANGE
    summary.update(slope=slope, order_in_range=low <= slope <= high)
    return tables, summary


def run_ergodic_error(config, problem, master):
    obs = parse_observable(config.observable)
    reference = invariant_reference(problem, obs, grid=_grid_from_config(config))
    N_list = [steps_for(T, config.dt) for T in config.horizons]
    rows = ergodic_error_curve(problem, obs, initial_state(config, problem), config.dt, N_list, config.paths,
                               master, reference.value, engine=engine_from_config(config),
                               lipschitz=config.lipschitz, alpha=config.alpha, dt_cap=config.dt_cap)
    tables = {"ergodic_error": (SWEEP_COLUMNS, [row.as_dict() for row in rows])}
    summary = {"reference": reference.as_dict(), "plateau": plateau_level(rows)}
    try:
        summary["decay_rate"] = ergodic_decay_rate(rows)
    except SlopeUndetermined as exc:
        summary.update(decay_rate=None, note=str(exc))
        raise _Partial(tables, summary, exc) from exc
    return tables, summary


def run_cost(config, problem, master):
    epsilons = sorted(config.epsilon, reverse=True)
    schedules = [cost_schedule(eps, config.R, config.c_time, config.c_acc) for eps in epsilons]
    columns = ["epsilon", "R", "c_time", "c_acc", "dt", "n_steps", "horizon", "simulated_horizon", "analytic_cost"]
    rows = [{**s.as_dict(), "analytic_cost": analytic_cost(s.epsilon, s.R)} for s in schedules]
    summary = {
        "step_ratios": [b.n_steps / a.n_steps for a, b in zip(schedules, schedules[1:])],
        "analytic_ratios": [analytic_cost(b.epsilon, b.R) / analytic_cost(a.epsilon, a.R)
                            for a, b in zip(schedules, schedules[1:])],
    }
    tables = {"cost": (columns, rows)}

    if config.end_to_end:
        obs = parse_observable(config.observable)
        reference = invariant_reference(problem, obs, grid=_grid_from_config(config)).value
        x0 = initial_state(config, problem)
        engine = engine_from_config(config)
        e2e_rows = []
        for eps in epsilons:
            row, schedule, path_steps = cost_end_to_end(problem, obs, x0, eps, config.R, config.paths, master,
                                                        reference, c_time=config.c_time, c_acc=config.c_acc,
                                                        engine=engine, alpha=config.alpha, dt_cap=config.dt_cap)
            e2e_rows.append({
                **row.as_dict(),
                "dt": schedule.dt,
                "n_steps": schedule.n_steps,
                "path_steps": path_steps,
                "within_tolerance": row.abs_error <= eps + 3 * row.error_stderr,
            })
        tables["cost_end_to_end"] = (SWEEP_COLUMNS + ["dt", "n_steps", "path_steps", "within_tolerance"], e2e_rows)
        summary["end_to_end_within_tolerance"] = all(r["within_tolerance"] for r in e2e_rows)
    return tables, summary


def run_contraction(config, problem, master):
    x0_a = initial_state(config, problem)
    x0_b = initial_state(config, problem, key="x0_b")
    max_ratio = contraction_test(problem, x0_a, x0_b, config.dt_fine, config.horizon, master,
                                 alpha=config.alpha, dt_cap=config.dt_cap)
    summary = {"max_ratio": max_ratio, "passed": max_ratio <= CONTRACTION_LIMIT, "dt_fine": config.dt_fine}
    row = {"x0_a": list(x0_a), "x0_b": list(x0_b), "horizon": config.horizon, "max_ratio": max_ratio}
    return {"contraction": (["x0_a", "x0_b", "horizon", "max_ratio"], [row])}, summary


def run_diverge(config, problem, master):
    x0 = initial_state(config, problem)
    report = divergence_demo(problem, x0, config.dt, config.steps, master, zero_noise=config.zero_noise,
                             alpha=config.alpha, dt_cap=config.dt_cap)
    sup_bound = float(np.linalg.norm(x0)) + 10 * math.sqrt(config.dt * config.steps)
    summary = {
        **report.as_dict(),
        "displacement_bound": 1 / config.alpha,
        "displacement_ok": report.tamed_max_displacement <= 1 / config.alpha,
        "sup_norm_bound": sup_bound,
        "sup_norm_ok": report.tamed_sup_norm <= sup_bound,
    }
    return {"diverge": (list(summary), [summary])}, summary


def run_check(config, problem, master):
    reports = [
        check_one_sided(problem, config.n_pairs, config.radius, config.seed),
        check_poly_growth(problem, config.n_points, config.radius, config.seed),
    ]
    summary = {}
    if problem.dim == 1:
        modified = modified_problem(problem, config.alpha)
        reports.append(check_one_sided(modified, config.n_pairs, config.radius, config.seed))
        slope_sup, argmax = modified_drift_slope_sup(problem, config.alpha, config.radius)
        summary["modified_drift_slope_sup"] = slope_sup
        summary["modified_drift_slope_argmax"] = argmax
    summary["reports"] = [
        {"problem": name, **report.as_dict()}
        for name, report in zip([problem.name, problem.name, f"{problem.name}_modified"], reports)
    ]
    columns = ["problem", "kind", "samples_tested", "worst_ratio", "passed", "sampling_radius", "seed"]
    return {"check": (columns, summary["reports"])}, summary


HANDLERS = {
    "simulate": run_simulate,
    "estimate": run_estimate,
    "oracle": run_oracle,
    "moment_growth": run_moment_growth,
    "weak_error": run_weak_error,
    "ergodic_error": run_ergodic_error,
    "cost": run_cost,
    "contraction": run_contraction,
    "diverge": run_diverge,
    "check": run_check,
}


class _Partial(Exception):
    """Tables computed before a fit failed; persisted before the failure is re-raised."""

    def __init__(self, tables, summary, error):
        super().__init__(str(error))
        self.tables = tables
        self.summary = summary
        self.error = error


# ==========================================
# 4. RUN
# ==========================================

def _persist(config, problem, tables, summary, wall_clock):
    artifacts = []
    for name, (columns, rows) in tables.items():
        artifacts.append(write_table(output_path(config.out, f"{name}.csv"), config, columns, rows, problem))
    artifacts.append(write_summary(output_path(config.out, f"{config.experiment}.json"), config, summary,
                                   wall_clock))
    return artifacts


def run(config):
    """Execute the configured experiment and persist its tables and summary."""
    started = time.perf_counter()
    problem = problem_from_config(config)
    master = MasterSeed(config.seed)
    handler = HANDLERS[config.experiment]
    logger.info("%s on %s (seed %s, %s worker(s))", config.experiment, problem.name, config.seed, config.workers)

    try:
        tables, summary = handler(config, problem, master)
    except _Partial as partial:
        _persist(config, problem, partial.tables, partial.summary, time.perf_counter() - started)
        raise partial.error from None

    wall_clock = time.perf_counter() - started
    artifacts = _persist(config, problem, tables, summary, wall_clock)
    logger.info("%s finished in %.2fs; wrote %s", config.experiment, wall_clock, ", ".join(str(a) for a in artifacts))
    return RunOutcome(experiment=config.experiment, config_hash=config_hash(config), summary=summary,
                      artifacts=artifacts)
