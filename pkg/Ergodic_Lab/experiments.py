"""Quantitative studies of the tamed scheme.

* moment growth of E|X_n|^m with the horizon T
* weak error versus dt at a fixed horizon, and the fitted order
* ergodic error versus the horizon at a fixed dt: exponential transient
  followed by a dt-level plateau
* step-size / horizon schedule reaching accuracy epsilon, and its cost
* synchronous-coupling contraction and the Euler divergence demonstration
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import DEFAULT_DT_CAP, Estimate, MonteCarloEngine, Observable, scheme_params
from .errors import SlopeUndetermined
from .noise import make_stream
from .oracle import FINE_STEP_RATIO, dyadic_level
from .scheme import StepKind, simulate_block, simulate_path

logger = logging.getLogger(__name__)

NOISE_FLOOR = 3.0
MIN_SLOPE_ROWS = 3
MIN_DECAY_ROWS = 2


@dataclass(frozen=True)
class SweepRow:
    parameter: float
    estimate: Estimate
    reference: Optional[float] = None
    abs_error: Optional[float] = None
    error_stderr: Optional[float] = None
    normalized: Optional[float] = None
    transient_bound: Optional[float] = None

    @classmethod
    def against(cls, parameter, estimate, reference, error_stderr=None, **extra):
        return cls(
            parameter=float(parameter),
            estimate=estimate,
            reference=None if reference is None else float(reference),
            abs_error=None if reference is None else abs(estimate.mean - reference),
            error_stderr=estimate.stderr if error_stderr is None else error_stderr,
            **extra,
        )

    def as_dict(self):
        return {
            "parameter": self.parameter,
            **self.estimate.as_dict(),
            "reference": self.reference,
            "abs_error": self.abs_error,
            "error_stderr": self.error_stderr,
            "normalized": self.normalized,
            "transient_bound": self.transient_bound,
        }


def fit_log_slope(xs, ys):
    """Least-squares slope of log(ys) against log(xs)."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def steps_for(T, dt):
    n = round(T / dt)
    if n < 0 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    return int(n)


# ==========================================
# 1. MOMENT GROWTH
# ==========================================

def moment_growth_sweep(problem, x0, order, dt, T_list, M, master, engine=None, alpha=1.0,
                        dt_cap=DEFAULT_DT_CAP):
    """One row per T: the largest E|X_n|^order over checkpoints n dt <= T.

    Checkpoints are spaced every max(1, T / (100 dt)) steps; a single
    ensemble run up to max(T_list) serves every row.
    """
    engine = engine or MonteCarloEngine()
    grids = {}
    for T in T_list:
        n_T = steps_for(T, dt)
        stride = max(1, round(n_T / 100))
        grids[T] = sorted(set(range(0, n_T + 1, stride)) | {n_T})
    all_steps = sorted(set().union(*grids.values()))
    params = scheme_params(dt, max(all_steps), alpha=alpha, dt_cap=dt_cap)
    obs = Observable.moment(order)
    paths = engine.path_values(problem, params, StepKind.TAMED, x0, [(s, obs) for s in all_steps], M, master)
    estimates = {s: paths.estimate((s, obs)) for s in all_steps}

    rows = []
    for T in T_list:
        best = max(grids[T], key=lambda s: estimates[s].mean)
        estimate = estimates[best]
        row = SweepRow(parameter=float(T), estimate=estimate, error_stderr=estimate.stderr,
                       normalized=estimate.mean ** (1.0 / order) if order > 0 else None)
        logger.info("moment growth T=%g: sup E|X|^%s = %.6g (at t=%g)", T, order, estimate.mean, best * dt)
        rows.append(row)
    return rows


def flatness_ratio(rows):
    means = [row.estimate.mean for row in rows]
    return max(means) / min(means)


# ==========================================
# 2. WEAK ERROR
# ==========================================

def weak_error_rows(problem, obs, x0, T, dt_list, M, master, reference=None, dt_ref=None, engine=None,
                    kind=StepKind.TAMED, alpha=1.0, dt_cap=DEFAULT_DT_CAP):
    """Absolute weak error per dt.

    Without ``reference`` the reference is a tamed run at ``dt_ref`` (by
    default min(dt_list) / 16) driven by the same Brownian paths as every
    row, and each row's error uncertainty is that of the per-path coupled
    difference.  With a closed-form ``reference`` the rows still share
    Brownian paths keyed at min(dt_list).
    """
    dt_list = [float(dt) for dt in dt_list]
    if not dt_list:
        raise ValueError("dt_list must not be empty")
    if any(b >= a for a, b in zip(dt_list, dt_list[1:])):
        raise ValueError("dt_list must be strictly decreasing")
    for dt in dt_list:
        steps_for(T, dt)
    engine = engine or MonteCarloEngine()

    rows = []
    if reference is None:
        dt_ref = dt_list[-1] / FINE_STEP_RATIO if dt_ref is None else float(dt_ref)
        if dt_ref * FINE_STEP_RATIO > dt_list[-1] * (1 + 1e-9):
            raise ValueError(f"dt_ref={dt_ref} must be at least {FINE_STEP_RATIO} times finer than every dt")
        levels = [dyadic_level(dt, dt_ref) for dt in dt_list]
        fine_params = scheme_params(dt_ref, steps_for(T, dt_ref), alpha=alpha, dt_cap=dt_cap)
        fine_key = (fine_params.n_steps, obs)
        fine = engine.path_values(problem, fine_params, StepKind.TAMED, x0, [fine_key], M, master)
        fine_estimate = fine.estimate(fine_key)
        for dt, level in zip(dt_list, levels):
            params = scheme_params(dt, steps_for(T, dt), alpha=alpha, dt_cap=dt_cap)
            key = (params.n_steps, obs)
            coarse = engine.path_values(problem, params, kind, x0, [key], M, master, refine=level)
            difference = coarse.difference(key, fine, fine_key)
            row = SweepRow(
                parameter=dt,
                estimate=coarse.estimate(key),
                reference=fine_estimate.mean,
                abs_error=abs(difference.mean),
                error_stderr=difference.stderr,
            )
            rows.append(row)
            logger.info("weak error dt=%g: %.4g +- %.2g (fine-step reference)", dt, row.abs_error, row.error_stderr)
    else:
        finest = dt_list[-1]
        for dt in dt_list:
            level = dyadic_level(dt, finest)
            params = scheme_params(dt, steps_for(T, dt), alpha=alpha, dt_cap=dt_cap)
            estimate = engine.estimate_observable(problem, params, kind, x0, obs, M, master, refine=level)
            row = SweepRow.against(dt, estimate, reference)
            rows.append(row)
            logger.info("weak error dt=%g: %.4g +- %.2g", dt, row.abs_error, row.error_stderr)
    return rows


def weak_error_slope(rows):
    """log-log slope of abs_error against dt over rows whose error exceeds 3 standard errors."""
    usable = [row for row in rows if row.abs_error > NOISE_FLOOR * row.error_stderr]
    if len(usable) < MIN_SLOPE_ROWS:
        raise SlopeUndetermined(len(usable), MIN_SLOPE_ROWS)
    return fit_log_slope([row.parameter for row in usable], [row.abs_error for row in usable])


def weak_error_sweep(problem, obs, x0, T, dt_list, M, master, reference=None, engine=None,
                     kind=StepKind.TAMED, alpha=1.0, dt_cap=DEFAULT_DT_CAP, dt_ref=None):
    """Rows of weak_error_rows and the fitted weak order."""
    if len(dt_list) < MIN_SLOPE_ROWS:
        raise SlopeUndetermined(len(dt_list), MIN_SLOPE_ROWS)
    rows = weak_error_rows(problem, obs, x0, T, dt_list, M, master, reference=reference, dt_ref=dt_ref,
                           engine=engine, kind=kind, alpha=alpha, dt_cap=dt_cap)
    return rows, weak_error_slope(rows)


# ==========================================
# 3. ERGODIC ERROR
# ==========================================

def ergodic_error_curve(problem, obs, x0, dt, N_list, M, master, invariant_ref, engine=None,
                        lipschitz=None, alpha=1.0, dt_cap=DEFAULT_DT_CAP, refine=0):
    """Error against the invariant average for each horizon N dt, from one shared ensemble."""
    N_list = [int(N) for N in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly increasing")
    engine = engine or MonteCarloEngine()
    params = scheme_params(dt, N_list[-1], alpha=alpha, dt_cap=dt_cap)
    paths = engine.path_values(problem, params, StepKind.TAMED, x0, [(N, obs) for N in N_list], M, master,
                               refine=refine)
    x0_norm = float(np.linalg.norm(x0))

    rows = []
    for N in N_list:
        horizon = N * dt
        bound = None
        if lipschitz is not None:
            bound = math.exp(-problem.gamma * horizon) * lipschitz * (1 + x0_norm)
        row = SweepRow.against(horizon, paths.estimate((N, obs)), invariant_ref, transient_bound=bound)
        logger.info("ergodic error T=%g: %.4g +- %.2g", horizon, row.abs_error, row.error_stderr)
        rows.append(row)
    return rows


def plateau_level(rows, tail=1):
    """Mean absolute error of the last ``tail`` rows."""
    return float(np.mean([row.abs_error for row in rows[-tail:]]))


def ergodic_decay_rate(rows, tail=1):
    """Fitted exponential rate of log(abs_error) against T over the pre-plateau rows.

    A row is pre-plateau when its error exceeds three times the plateau level
    plus three of the plateau's standard errors.
    """
    last = rows[-tail:]
    plateau = plateau_level(rows, tail)
    noise = float(np.mean([row.error_stderr for row in last]))
    threshold = 3.0 * (plateau + NOISE_FLOOR * noise)
    early = [row for row in rows[:-tail] if row.abs_error > threshold and row.parameter > 0]
    if len(early) < MIN_DECAY_ROWS:
        raise SlopeUndetermined(len(early), MIN_DECAY_ROWS)
    horizons = np.array([row.parameter for row in early])
    errors = np.array([row.abs_error for row in early])
    return float(np.polyfit(horizons, np.log(errors), 1)[0])


# ==========================================
# 4. COST SCHEDULE
# ==========================================

@dataclass(frozen=True)
class CostSchedule:
    """Step size and step count reaching accuracy epsilon.

    ``horizon`` is the target c_time |log eps|; the simulated horizon
    n_steps * dt exceeds it by less than one step.
    """

    epsilon: float
    R: int
    c_time: float
    c_acc: float
    dt: float
    n_steps: int
    horizon: float

    @property
    def simulated_horizon(self):
        return self.n_steps * self.dt

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "R": self.R,
            "c_time": self.c_time,
            "c_acc": self.c_acc,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "horizon": self.horizon,
            "simulated_horizon": self.simulated_horizon,
        }


def cost_schedule(epsilon, R, c_time=1.0, c_acc=1.0):
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if R < 0 or int(R) != R:
        raise ValueError("R must be a nonnegative integer")
    if not c_time > 0 or not c_acc > 0:
        raise ValueError("schedule constants must be positive")
    log_eps = abs(math.log(epsilon))
    horizon = c_time * log_eps
    dt = c_acc * epsilon * log_eps ** (-R)
    return CostSchedule(
        epsilon=float(epsilon), R=int(R), c_time=float(c_time), c_acc=float(c_acc),
        dt=dt, n_steps=math.ceil(horizon / dt), horizon=horizon,
    )


def analytic_cost(epsilon, R):
    """epsilon^-1 |log epsilon|^(1 + R), the growth law of the step count."""
    return abs(math.log(epsilon)) ** (1 + R) / epsilon


def cost_end_to_end(problem, obs, x0, epsilon, R, M, master, reference, c_time=1.0, c_acc=1.0,
                    engine=None, alpha=1.0, dt_cap=DEFAULT_DT_CAP):
    """Run the tamed scheme on the schedule for epsilon; returns (row, schedule, path-steps)."""
    schedule = cost_schedule(epsilon, R, c_time, c_acc)
    engine = engine or MonteCarloEngine()
    params = scheme_params(schedule.dt, schedule.n_steps, alpha=alpha, dt_cap=dt_cap)
    estimate = engine.estimate_observable(problem, params, StepKind.TAMED, x0, obs, M, master)
    row = SweepRow.against(epsilon, estimate, reference)
    logger.info("cost eps=%g: dt=%.4g N=%s error=%.4g", epsilon, schedule.dt, schedule.n_steps, row.abs_error)
    return row, schedule, M * schedule.n_steps


# ==========================================
# 5. CONTRACTION AND DIVERGENCE
# ==========================================

def contraction_test(problem, x0_a, x0_b, dt_fine, T, master, path_index=0, alpha=1.0,
                     dt_cap=DEFAULT_DT_CAP):
    """max_t |X_a(t) - X_b(t)| e^(gamma t) / |x0_a - x0_b| under synchronous coupling."""
    if dt_fine > 1e-3:
        raise ValueError("dt_fine must not exceed 1e-3")
    x0_a = np.asarray(x0_a, dtype=float)
    x0_b = np.asarray(x0_b, dtype=float)
    gap = float(np.linalg.norm(x0_a - x0_b))
    if gap == 0.0:
        return 0.0
    params = scheme_params(dt_fine, steps_for(T, dt_fine), alpha=alpha, dt_cap=dt_cap)
    steps = range(params.n_steps + 1)

    # Both copies read the increments of the same path: one stream, two initial states.
    results = [
        simulate_block(problem, params, StepKind.TAMED, x0, make_stream(master, path_index).block(),
                       checkpoints=steps)
        for x0 in (x0_a, x0_b)
    ]
    times = np.arange(params.n_steps + 1) * dt_fine
    gaps = np.array([np.linalg.norm(results[0].recorded[n][0] - results[1].recorded[n][0]) for n in steps])
    ratios = gaps * np.exp(problem.gamma * times) / gap
    max_ratio = float(np.max(ratios))
    logger.info("contraction %s: max ratio %.6f over T=%g", problem.name, max_ratio, T)
    return max_ratio


@dataclass(frozen=True)
class DivergenceReport:
    euler_exploded_at: Optional[int]
    tamed_sup_norm: float
    tamed_max_displacement: float
    tamed_exploded_at: Optional[int]

    def as_dict(self):
        return {
            "euler_exploded_at": self.euler_exploded_at,
            "tamed_sup_norm": self.tamed_sup_norm,
            "tamed_max_displacement": self.tamed_max_displacement,
            "tamed_exploded_at": self.tamed_exploded_at,
        }


def divergence_demo(problem, x0, dt, n_max, master, zero_noise=False, alpha=1.0, dt_cap=DEFAULT_DT_CAP,
                    path_index=0):
    """Euler and tamed paths from the same x0 on the same noise."""
    params = scheme_params(dt, n_max, alpha=alpha, dt_cap=dt_cap)
    euler = simulate_path(problem, params, StepKind.EULER, x0, make_stream(master, path_index),
                          zero_noise=zero_noise)
    tamed = simulate_path(problem, params, StepKind.TAMED, x0, make_stream(master, path_index),
                          zero_noise=zero_noise)
    logger.info("divergence %s: euler exploded at %s, tamed sup norm %.6g",
                problem.name, euler.exploded_at, tamed.sup_norm)
    return DivergenceReport(
        euler_exploded_at=euler.exploded_at,
        tamed_sup_norm=tamed.sup_norm,
        tamed_max_displacement=tamed.max_displacement,
        tamed_exploded_at=tamed.exploded_at,
    )
