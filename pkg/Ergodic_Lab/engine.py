"""Monte Carlo estimation of E[phi(X_n)] over independent tamed (or Euler) paths.

Paths are identified by their index 0..M-1 and simulated in fixed-size
chunks, so the per-path values never depend on how chunks are spread over
workers.  Aggregation walks the values in ascending path order with
``math.fsum``, which is exactly rounded and therefore also independent of
the reduction schedule.
"""

import logging
import math
import re
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
from joblib import Parallel, delayed
from numpy.polynomial import polynomial as npoly

from .errors import AllPathsExploded, TamedPathExploded, UnknownObservable
from .model import default_catalog
from .noise import PathBlock
from .scheme import OVERFLOW_THRESHOLD, SchemeParams, StepKind, simulate_block

logger = logging.getLogger(__name__)

CI95_FACTOR = 1.96
DEFAULT_DT_CAP = 1.0


# ==========================================
# 1. OBSERVABLES
# ==========================================

class ObservableKind(str, Enum):
    MOMENT = "moment"
    COORDINATE_MOMENT = "coordinate_moment"
    CUSTOM_POLYNOMIAL = "custom_polynomial"


@dataclass(frozen=True)
class Observable:
    kind: ObservableKind
    order: int = 0
    index: int = 0
    coefficients: tuple = ()
    description: str = ""

    @classmethod
    def moment(cls, order):
        return cls(ObservableKind.MOMENT, order=int(order), description=f"|x|^{order}")

    @classmethod
    def coordinate_moment(cls, index, order):
        return cls(ObservableKind.COORDINATE_MOMENT, order=int(order), index=int(index),
                   description=f"x_{index}^{order}")

    @classmethod
    def polynomial(cls, coefficients, index=0):
        coefficients = tuple(float(c) for c in coefficients)
        return cls(ObservableKind.CUSTOM_POLYNOMIAL, index=int(index), coefficients=coefficients,
                   description=f"sum_j c_j x_{index}^j with c={list(coefficients)}")

    def __call__(self, states):
        states = np.asarray(states, dtype=float)
        if self.kind is ObservableKind.MOMENT:
            return np.linalg.norm(states, axis=-1) ** self.order
        coordinate = states[..., self.index]
        if self.kind is ObservableKind.COORDINATE_MOMENT:
            return coordinate ** self.order
        return npoly.polyval(coordinate, np.asarray(self.coefficients))

    @property
    def label(self):
        """Text form accepted by parse_observable."""
        if self.kind is ObservableKind.MOMENT:
            return f"moment:{self.order}"
        if self.kind is ObservableKind.COORDINATE_MOMENT:
            return f"coord:{self.index}:{self.order}"
        return "poly:" + ",".join(repr(c) for c in self.coefficients)


_MOMENT = re.compile(r"^moment:(\d+)$")
_COORD = re.compile(r"^coord:(\d+):(\d+)$")
_POLY = re.compile(r"^poly:(.+)$")


def parse_observable(text):
    text = text.strip()
    if match := _MOMENT.match(text):
        return Observable.moment(int(match.group(1)))
    if match := _COORD.match(text):
        return Observable.coordinate_moment(int(match.group(1)), int(match.group(2)))
    if match := _POLY.match(text):
        try:
            return Observable.polynomial(float(c) for c in match.group(1).split(","))
        except ValueError:
            raise UnknownObservable(text) from None
    raise UnknownObservable(text)


# ==========================================
# 2. ESTIMATES
# ==========================================

@dataclass(frozen=True)
class Estimate:
    mean: float
    variance: float
    n_samples: int
    stderr: float
    ci95_halfwidth: float
    n_exploded: int = 0

    @classmethod
    def from_samples(cls, values, n_exploded=0):
        values = [float(v) for v in np.asarray(values, dtype=float).ravel()]
        n = len(values)
        if n == 0:
            raise AllPathsExploded(n_exploded)
        mean = math.fsum(values) / n
        if n > 1:
            variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
        else:
            variance = 0.0
        stderr = math.sqrt(variance / n)
        return cls(
            mean=mean,
            variance=variance,
            n_samples=n,
            stderr=stderr,
            ci95_halfwidth=CI95_FACTOR * stderr,
            n_exploded=int(n_exploded),
        )

    def as_dict(self):
        return {
            "mean": self.mean,
            "variance": self.variance,
            "n_samples": self.n_samples,
            "stderr": self.stderr,
            "ci95_halfwidth": self.ci95_halfwidth,
            "n_exploded": self.n_exploded,
        }


@dataclass
class PathValues:
    """Per-path readouts, ascending in path index.

    A readout is NaN when its path exploded at or before the readout step.
    """

    values: dict
    exploded: np.ndarray

    def estimate(self, key):
        column = self.values[key]
        keep = np.isfinite(column)
        return Estimate.from_samples(column[keep], n_exploded=int((~keep).sum()))

    def difference(self, key, other, other_key):
        """Estimate of the per-path differences self[key] - other[other_key] (paired by path index)."""
        column = self.values[key] - other.values[other_key]
        keep = np.isfinite(column)
        return Estimate.from_samples(column[keep], n_exploded=int((~keep).sum()))


# ==========================================
# 3. ENGINE
# ==========================================

def _simulate_chunk(problem, params, kind, x0, master, start, stop, readouts, zero_noise, refine,
                    overflow_threshold):
    block = PathBlock(master, np.arange(start, stop, dtype=np.uint64), refine=refine)
    steps = sorted({step for step, _ in readouts})
    result = simulate_block(problem, params, kind, x0, block, checkpoints=steps,
                            zero_noise=zero_noise, overflow_threshold=overflow_threshold)
    with np.errstate(over="ignore", invalid="ignore"):
        values = {(step, obs): obs(result.recorded[step]) for step, obs in readouts}
    return values, result.exploded


class MonteCarloEngine:
    """Runs path ensembles in parallel; results do not depend on ``workers``."""

    def __init__(self, workers=1, batch_size=4096, overflow_threshold=OVERFLOW_THRESHOLD):
        if workers < 1:
            raise ValueError("workers must be at least 1")
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        self.workers = int(workers)
        self.batch_size = int(batch_size)
        self.overflow_threshold = overflow_threshold

    def _chunks(self, M):
        return [(start, min(start + self.batch_size, M)) for start in range(0, M, self.batch_size)]

    def path_values(self, problem, params, kind, x0, readouts, M, master, zero_noise=False, refine=0):
        """Simulate paths 0..M-1 and evaluate each (step, observable) readout on them."""
        if M < 1:
            raise ValueError("M must be at least 1")
        readouts = list(readouts)
        x0 = np.asarray(x0, dtype=float)
        chunks = self._chunks(M)
        started = time.perf_counter()

        jobs = (
            delayed(_simulate_chunk)(problem, params, StepKind(kind), x0, master, start, stop,
                                     readouts, zero_noise, refine, self.overflow_threshold)
            for start, stop in chunks
        )
        n_jobs = min(self.workers, len(chunks))
        parts = Parallel(n_jobs=n_jobs)(jobs)

        values = {key: np.concatenate([part[0][key] for part in parts]) for key in readouts}
        exploded = np.concatenate([part[1] for part in parts])
        logger.info(
            "%s paths x %s steps (%s, dt=%g) on %s worker(s) in %.2fs",
            M, params.n_steps, StepKind(kind).value, params.dt, n_jobs, time.perf_counter() - started,
        )
        n_exploded = int(exploded.sum())
        if n_exploded and StepKind(kind) is StepKind.TAMED:
            if problem.name in default_catalog().names():
                raise TamedPathExploded(problem.name, n_exploded, M)
            logger.warning("%s of %s tamed paths exploded on %s", n_exploded, M, problem.name)
        return PathValues(values=values, exploded=exploded)

    def estimate_observable(self, problem, params, kind, x0, obs, M, master, zero_noise=False, refine=0):
        if M < 2:
            raise ValueError("M must be at least 2")
        key = (params.n_steps, obs)
        paths = self.path_values(problem, params, kind, x0, [key], M, master,
                                 zero_noise=zero_noise, refine=refine)
        return paths.estimate(key)

    def estimate_moments_at_times(self, problem, params, x0, order, time_checkpoints, M, master, refine=0):
        """E|X_n|^order at each checkpoint time, all read from the same ensemble."""
        if M < 2:
            raise ValueError("M must be at least 2")
        steps = [time_to_step(t, params) for t in time_checkpoints]
        obs = Observable.moment(order)
        paths = self.path_values(problem, params, StepKind.TAMED, x0, [(s, obs) for s in steps], M, master,
                                 refine=refine)
        return [(float(t), paths.estimate((s, obs))) for t, s in zip(time_checkpoints, steps)]


def time_to_step(t, params):
    """Step index n with n * dt = t; t must be a multiple of dt within [0, N dt]."""
    n = round(t / params.dt)
    if n < 0 or abs(n * params.dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not a nonnegative multiple of dt={params.dt}")
    if n > params.n_steps:
        raise ValueError(f"time {t} lies beyond the horizon {params.horizon}")
    return int(n)


def estimate_observable(problem, params, kind, x0, obs, M, master, workers=1, **options):
    return MonteCarloEngine(workers=workers).estimate_observable(problem, params, kind, x0, obs, M, master, **options)


def estimate_moments_at_times(problem, params, x0, order, time_checkpoints, M, master, workers=1):
    return MonteCarloEngine(workers=workers).estimate_moments_at_times(
        problem, params, x0, order, time_checkpoints, M, master
    )


def scheme_params(dt, n_steps, alpha=1.0, dt_cap=DEFAULT_DT_CAP):
    """SchemeParams for dt; raises ValueError unless 0 < dt <= dt_cap."""
    return SchemeParams(dt=dt, n_steps=n_steps, alpha=alpha, dt_cap=dt_cap)
