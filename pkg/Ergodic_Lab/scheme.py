"""One-step integrators and the path driver.

The tamed explicit Euler-Maruyama update is

    X_{n+1} = X_n + dt f(X_n) / (1 + alpha dt |f(X_n)|) + sigma dB_n

and the plain explicit Euler-Maruyama update drops the denominator.  Step
functions work on a single state of shape (d,) or on a batch (B, d).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .model import Problem, eval_drift
from .noise import PathBlock

logger = logging.getLogger(__name__)

OVERFLOW_THRESHOLD = 1e10


class StepKind(str, Enum):
    TAMED = "tamed"
    EULER = "euler"


@dataclass(frozen=True, kw_only=True)
class SchemeParams:
    dt: float
    dt_cap: float = 1.0
    alpha: float = 1.0
    n_steps: int

    def __post_init__(self):
        if not self.dt_cap > 0:
            raise ValueError("dt_cap must be positive")
        if not 0 < self.dt <= self.dt_cap:
            raise ValueError(f"dt must lie in (0, dt_cap={self.dt_cap}], got {self.dt}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError("n_steps must be a nonnegative integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def horizon(self):
        return self.n_steps * self.dt


@dataclass
class PathResult:
    final_state: np.ndarray
    sup_norm: float
    exploded_at: Optional[int] = None
    recorded_states: list = field(default_factory=list)
    max_displacement: float = 0.0


@dataclass
class BlockResult:
    """Batch counterpart of PathResult; ``exploded_at`` is -1 for surviving paths."""

    final_states: np.ndarray
    sup_norms: np.ndarray
    exploded_at: np.ndarray
    recorded: dict
    max_displacement: np.ndarray

    @property
    def exploded(self):
        return self.exploded_at >= 0


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1, keepdims=True))


# --- 1. STEP FUNCTIONS ---

def tamed_step(x, fx, params, noise_term):
    return x + params.dt * fx / (1.0 + params.alpha * params.dt * _norm(fx)) + noise_term


def euler_step(x, fx, params, noise_term):
    return x + params.dt * fx + noise_term


STEPPERS = {
    StepKind.TAMED: tamed_step,
    StepKind.EULER: euler_step,
}


class TamedDrift:
    """f / (1 + alpha |f|), the drift the tamed scheme integrates with plain Euler steps."""

    def __init__(self, drift, alpha):
        self.drift = drift
        self.alpha = float(alpha)

    def __call__(self, x):
        fx = self.drift(x)
        return fx / (1.0 + self.alpha * _norm(fx))


def modified_drift(problem, x, alpha):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    fx = eval_drift(problem, x)
    return fx / (1.0 + alpha * _norm(fx))


def modified_problem(problem, alpha):
    """The same SDE with f replaced by the modified drift; gamma is kept as declared."""
    return Problem(
        name=f"{problem.name}_modified",
        dim=problem.dim,
        drift=TamedDrift(problem.drift, alpha),
        gamma=problem.gamma,
        growth_degree=0,
        noise=problem.noise,
        description=f"modified drift of {problem.name} with alpha={alpha}",
    )


def modified_drift_slope_sup(problem, alpha, radius, n_points=20001):
    """Sup of the derivative of the 1D modified drift over a grid on [-radius, radius].

    Returns (sup, argmax).  The derivative uses central differences of the
    grid values.
    """
    if problem.dim != 1:
        raise ValueError("the modified-drift slope is only defined for d = 1")
    grid = np.linspace(-radius, radius, n_points)
    values = modified_drift(problem, grid[:, None], alpha)[:, 0]
    slope = np.gradient(values, grid)
    best = int(np.argmax(slope))
    return float(slope[best]), float(grid[best])


# --- 2. PATH DRIVER ---

def _validate_checkpoints(checkpoints, n_steps):
    checkpoints = [int(c) for c in checkpoints]
    if any(b < a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be sorted")
    if checkpoints and (checkpoints[0] < 0 or checkpoints[-1] > n_steps):
        raise ValueError(f"checkpoints must lie in [0, {n_steps}]")
    return sorted(set(checkpoints))


def simulate_block(problem, params, kind, x0, block, checkpoints=(), zero_noise=False,
                   overflow_threshold=OVERFLOW_THRESHOLD, start_step=0):
    """Advance every path of ``block`` by ``params.n_steps`` steps.

    A path explodes at the first step whose state is non-finite, has norm
    above ``overflow_threshold``, or whose drift cannot be evaluated; it is
    frozen from then on.  Recorded states of exploded paths are NaN.
    """
    kind = StepKind(kind)
    step = STEPPERS[kind]
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.dim,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"x0 must be a finite vector of length {problem.dim}")
    checkpoints = _validate_checkpoints(checkpoints, params.n_steps)
    wanted = set(checkpoints)

    n_paths = len(block)
    x = np.tile(x0, (n_paths, 1))
    sup_norms = np.full(n_paths, float(np.linalg.norm(x0)))
    exploded_at = np.full(n_paths, -1, dtype=np.int64)
    max_displacement = np.zeros(n_paths)
    recorded = {}
    if 0 in wanted:
        recorded[0] = x.copy()

    alive = np.ones(n_paths, dtype=bool)
    for n in range(params.n_steps):
        rows = None if alive.all() else np.flatnonzero(alive)
        if rows is not None and rows.size == 0:
            for c in checkpoints:
                recorded.setdefault(c, np.full_like(x, np.nan))
            break
        live = x if rows is None else x[rows]

        with np.errstate(over="ignore", invalid="ignore"):
            fx = problem.drift(live)
            if zero_noise:
                noise_term = 0.0
            else:
                increments = block.increments(start_step + n, params.dt, problem.noise.K, rows=rows)
                noise_term = problem.noise.apply(increments)
            new = step(live, fx, params, noise_term)
            displacement = _norm(new - live - noise_term)[:, 0]
            norms = _norm(new)[:, 0]

        bad = ~(np.isfinite(norms) & np.all(np.isfinite(fx), axis=-1)) | (norms > overflow_threshold)
        if rows is None:
            x = new
            sup_norms = np.fmax(sup_norms, norms)
            max_displacement = np.fmax(max_displacement, displacement)
            if bad.any():
                hit = np.flatnonzero(bad)
                exploded_at[hit] = n + 1
                alive[hit] = False
        else:
            x[rows] = new
            sup_norms[rows] = np.fmax(sup_norms[rows], norms)
            max_displacement[rows] = np.fmax(max_displacement[rows], displacement)
            if bad.any():
                hit = rows[bad]
                exploded_at[hit] = n + 1
                alive[hit] = False

        if n + 1 in wanted:
            snapshot = x.copy()
            snapshot[~alive] = np.nan
            recorded[n + 1] = snapshot

    n_exploded = int((exploded_at >= 0).sum())
    if n_exploded:
        logger.debug("%s/%s paths exploded (%s scheme, dt=%g)", n_exploded, n_paths, kind.value, params.dt)
    return BlockResult(
        final_states=x,
        sup_norms=sup_norms,
        exploded_at=exploded_at,
        recorded=recorded,
        max_displacement=max_displacement,
    )


def simulate_path(problem, params, kind, x0, stream, checkpoints=(), zero_noise=False,
                  overflow_threshold=OVERFLOW_THRESHOLD):
    """Iterate one path from x0, drawing from ``stream`` and advancing its cursor."""
    result = simulate_block(
        problem, params, kind, x0, stream.block(),
        checkpoints=checkpoints, zero_noise=zero_noise,
        overflow_threshold=overflow_threshold, start_step=stream.step_index,
    )
    stream.step_index += params.n_steps
    exploded_at = int(result.exploded_at[0])
    return PathResult(
        final_state=result.final_states[0].copy(),
        sup_norm=float(result.sup_norms[0]),
        exploded_at=exploded_at if exploded_at >= 0 else None,
        recorded_states=[(c, result.recorded[c][0].copy()) for c in sorted(result.recorded)],
        max_displacement=float(result.max_displacement[0]),
    )
