"""SDE problem definitions and sampling-based checks of the structural assumptions.

A Problem bundles the drift f, the additive noise sigma dB = sum_k sigma_k dbeta^k,
the declared contraction rate gamma of the one-sided condition

    <f(x2) - f(x1), x2 - x1> <= -gamma |x2 - x1|^2

and the declared polynomial growth degree q.  The assumption checks are
falsifiers: they search for counterexamples among random samples and never
prove the conditions globally.
"""

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DriftOverflow, InsufficientSamples, NotGradientProblem, UnknownProblem

logger = logging.getLogger(__name__)

CATALOG_PATH = Path(__file__).resolve().parent / "problems.json"

ONE_SIDED_TOL = 1e-6
DEGENERATE_PAIR = 1e-12
GROWTH_FLAG = 1e3


# ==========================================
# 1. DRIFTS AND POTENTIALS
# ==========================================
# Every map accepts states of shape (..., d) so that a whole batch of paths
# is advanced by a single call.

class LinearDrift:
    """f(x) = -rate * x"""

    def __init__(self, rate):
        self.rate = float(rate)

    def __call__(self, x):
        return -self.rate * x


class PolynomialDrift:
    """One-dimensional f(x) = sum_j c_j x^j."""

    def __init__(self, coefficients):
        self.coefficients = np.asarray(coefficients, dtype=float)

    def __call__(self, x):
        return npoly.polyval(x, self.coefficients)


class RotationDrift:
    """Planar f(x) = -rate * x + epsilon * (-x2, x1)."""

    def __init__(self, rate, epsilon):
        self.rate = float(rate)
        self.epsilon = float(epsilon)

    def __call__(self, x):
        skew = np.stack([-x[..., 1], x[..., 0]], axis=-1)
        return -self.rate * x + self.epsilon * skew


class QuadraticPotential:
    """V(x) = rate * |x|^2 / 2, so that -grad V = LinearDrift(rate)."""

    def __init__(self, rate):
        self.rate = float(rate)

    def __call__(self, x):
        return 0.5 * self.rate * np.sum(x * x, axis=-1)


class PolynomialPotential:
    """V with V' = -f for a one-dimensional polynomial drift."""

    def __init__(self, drift_coefficients):
        self.coefficients = npoly.polyint(-np.asarray(drift_coefficients, dtype=float))

    def __call__(self, x):
        return npoly.polyval(x[..., 0], self.coefficients)


# ==========================================
# 2. DOMAIN TYPES
# ==========================================

@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Additive noise sigma dB(t); column k of ``amplitude`` is sigma_k."""

    amplitude: np.ndarray

    def __post_init__(self):
        amplitude = np.array(self.amplitude, dtype=float, ndmin=2)
        if amplitude.ndim != 2:
            raise ValueError("noise amplitude must be a d x K array")
        if not np.all(np.isfinite(amplitude)):
            raise ValueError("noise amplitude must be finite")
        if not np.any(amplitude):
            raise ValueError("degenerate noise: every column sigma_k is zero")
        amplitude.setflags(write=False)
        object.__setattr__(self, "amplitude", amplitude)

    @classmethod
    def from_columns(cls, columns):
        columns = [np.atleast_1d(np.asarray(c, dtype=float)) for c in columns]
        if not columns:
            raise ValueError("noise needs at least one column")
        dims = {c.shape for c in columns}
        if len(dims) != 1 or columns[0].ndim != 1:
            raise ValueError("every noise column must have the same dimension d")
        return cls(np.stack(columns, axis=1))

    @classmethod
    def isotropic(cls, dim, scale):
        return cls(float(scale) * np.eye(dim))

    @property
    def dim(self):
        return self.amplitude.shape[0]

    @property
    def K(self):
        return self.amplitude.shape[1]

    @property
    def columns(self):
        return [self.amplitude[:, k].copy() for k in range(self.K)]

    def apply(self, increments):
        """Map Wiener increments of shape (..., K) to sigma dB of shape (..., d)."""
        return increments @ self.amplitude.T

    def isotropic_scale(self):
        """Return s if the noise is s * Identity (d = K), else None."""
        if self.dim != self.K:
            return None
        scale = abs(self.amplitude[0, 0])
        if scale == 0 or not np.array_equal(np.abs(self.amplitude), scale * np.eye(self.dim)):
            return None
        return float(scale)


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    gamma: float
    growth_degree: int
    noise: NoiseModel
    potential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    description: str = ""

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be a positive integer")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if int(self.growth_degree) < 0:
            raise ValueError("growth_degree must be a nonnegative integer")
        if self.noise.dim != self.dim:
            raise ValueError(f"noise columns have dimension {self.noise.dim}, expected {self.dim}")
        origin = np.asarray(self.drift(np.zeros(self.dim)), dtype=float)
        if origin.shape != (self.dim,) or not np.all(np.isfinite(origin)):
            raise DriftOverflow(np.zeros(self.dim))

    @property
    def is_gradient(self):
        return self.potential is not None


@dataclass(frozen=True)
class AssumptionReport:
    kind: str
    samples_tested: int
    worst_ratio: float
    passed: bool
    witness: tuple
    sampling_radius: float
    seed: int
    notes: tuple = field(default_factory=tuple)

    def as_dict(self):
        return {
            "kind": self.kind,
            "samples_tested": self.samples_tested,
            "worst_ratio": self.worst_ratio,
            "passed": self.passed,
            "witness": [np.asarray(w).tolist() for w in self.witness],
            "sampling_radius": self.sampling_radius,
            "seed": self.seed,
            "notes": list(self.notes),
        }


# ==========================================
# 3. CATALOG
# ==========================================

class ProblemCatalog:
    """Built-in problems, read from ``problems.json``."""

    def __init__(self, json_path=CATALOG_PATH):
        self.json_path = Path(json_path)
        self.entries = self._load_entries()

    def _load_entries(self):
        with open(self.json_path, "r", encoding="utf-8") as f:
            return {entry["name"]: entry for entry in json.load(f)}

    def names(self):
        return sorted(self.entries)

    def get_entry(self, name):
        try:
            return self.entries[name]
        except KeyError:
            raise UnknownProblem(name) from None

    def build(self, name, gamma=None, sigma=None, dim=None, rotation=None):
        entry = self.get_entry(name)
        gamma = float(entry["gamma"] if gamma is None else gamma)
        sigma = float(entry["sigma"] if sigma is None else sigma)
        family = entry["family"]

        if family == "linear":
            dim = int(entry["dim"] if dim is None else dim)
            return Problem(
                name=name,
                dim=dim,
                drift=LinearDrift(gamma),
                gamma=gamma,
                growth_degree=entry["growth_degree"],
                noise=NoiseModel.isotropic(dim, sigma),
                potential=QuadraticPotential(gamma),
                description=entry["description"],
            )
        if dim is not None and int(dim) != entry["dim"]:
            raise ValueError(f"problem {name!r} has fixed dimension {entry['dim']}")
        if family == "polynomial":
            return polynomial_problem(
                entry["coefficients"], gamma, entry["growth_degree"], sigma,
                name=name, description=entry["description"],
            )
        if family == "rotation":
            epsilon = float(entry["rotation"] if rotation is None else rotation)
            return Problem(
                name=name,
                dim=2,
                drift=RotationDrift(gamma, epsilon),
                gamma=gamma,
                growth_degree=entry["growth_degree"],
                noise=NoiseModel.isotropic(2, sigma),
                description=entry["description"],
            )
        raise ValueError(f"catalog entry {name!r} has unknown family {family!r}")


@lru_cache(maxsize=1)
def default_catalog():
    return ProblemCatalog()


def build_problem(name, **overrides):
    return default_catalog().build(name, **overrides)


def polynomial_problem(coefficients, gamma, growth_degree, sigma=1.0, name="polynomial", description=""):
    """1D problem with drift sum_j c_j x^j; the potential always exists in 1D."""
    coefficients = [float(c) for c in coefficients]
    if not coefficients:
        raise ValueError("polynomial drift needs at least one coefficient")
    return Problem(
        name=name,
        dim=1,
        drift=PolynomialDrift(coefficients),
        gamma=float(gamma),
        growth_degree=int(growth_degree),
        noise=NoiseModel.isotropic(1, sigma),
        potential=PolynomialPotential(coefficients),
        description=description or f"polynomial drift with coefficients {coefficients}",
    )


# ==========================================
# 4. OPERATIONS
# ==========================================

def _as_state(problem, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != problem.dim:
        raise ValueError(f"state must have trailing dimension {problem.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    return x


def eval_drift(problem, x):
    """Return f(x) for a state (or a batch of states along leading axes)."""
    x = _as_state(problem, x)
    with np.errstate(over="ignore", invalid="ignore"):
        fx = np.asarray(problem.drift(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise DriftOverflow(x)
    return fx


def _sample_ball(rng, n, dim, radius):
    directions = rng.standard_normal((n, dim))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / dim)
    return directions * radii[:, None]


def one_sided_ratio(problem, x1, x2):
    """<f(x2) - f(x1), x2 - x1> / |x2 - x1|^2, elementwise over leading axes."""
    diff = np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float)
    df = eval_drift(problem, x2) - eval_drift(problem, x1)
    return np.sum(df * diff, axis=-1) / np.sum(diff * diff, axis=-1)


def check_one_sided(problem, n_pairs, sampling_radius, seed):
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    if not sampling_radius > 0:
        raise ValueError("sampling_radius must be positive")

    rng = np.random.default_rng(seed)
    x1 = _sample_ball(rng, n_pairs, problem.dim, sampling_radius)
    x2 = _sample_ball(rng, n_pairs, problem.dim, sampling_radius)
    keep = np.linalg.norm(x2 - x1, axis=-1) >= DEGENERATE_PAIR
    if not keep.any():
        raise InsufficientSamples(f"all {n_pairs} sampled pairs are closer than {DEGENERATE_PAIR}")
    x1, x2 = x1[keep], x2[keep]

    ratios = one_sided_ratio(problem, x1, x2)
    worst = int(np.argmax(ratios))
    worst_ratio = float(ratios[worst])
    passed = worst_ratio <= -problem.gamma * (1 - ONE_SIDED_TOL)
    if not passed:
        logger.warning(
            "one-sided condition fails for %s: ratio %.6g > -gamma=%.6g at pair (%s, %s)",
            problem.name, worst_ratio, -problem.gamma, x1[worst], x2[worst],
        )
    return AssumptionReport(
        kind="one_sided",
        samples_tested=int(keep.sum()),
        worst_ratio=worst_ratio,
        passed=bool(passed),
        witness=(x1[worst].copy(), x2[worst].copy()),
        sampling_radius=float(sampling_radius),
        seed=seed,
    )


def growth_ratio(problem, x):
    """|f(x)| / (1 + |x|^q), elementwise over leading axes."""
    fx = eval_drift(problem, x)
    norm_x = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return np.linalg.norm(fx, axis=-1) / (1.0 + norm_x ** problem.growth_degree)


def check_poly_growth(problem, n_points, sampling_radius, seed):
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    if not sampling_radius > 0:
        raise ValueError("sampling_radius must be positive")

    rng = np.random.default_rng(seed)
    points = _sample_ball(rng, n_points, problem.dim, sampling_radius)
    ratios = growth_ratio(problem, points)
    worst = int(np.argmax(ratios))
    worst_ratio = float(ratios[worst])

    notes = ()
    if worst_ratio > GROWTH_FLAG:
        notes = (f"growth ratio {worst_ratio:.3g} exceeds {GROWTH_FLAG:g}; "
                 f"declared degree q={problem.growth_degree} is likely too small",)
        logger.warning("%s: %s", problem.name, notes[0])
    return AssumptionReport(
        kind="poly_growth",
        samples_tested=n_points,
        worst_ratio=worst_ratio,
        passed=bool(np.isfinite(worst_ratio)),
        witness=(points[worst].copy(),),
        sampling_radius=float(sampling_radius),
        seed=seed,
        notes=notes,
    )


def gibbs_log_density(problem, x, noise_scale):
    """Unnormalized stationary log-density -2 V(x) / noise_scale^2 of a gradient problem."""
    if problem.potential is None:
        raise NotGradientProblem(f"{problem.name} has no potential")
    if problem.noise.isotropic_scale() is None:
        raise NotGradientProblem(f"{problem.name} has non-isotropic noise")
    if not noise_scale > 0:
        raise ValueError("noise_scale must be positive")
    x = _as_state(problem, x)
    return -2.0 * problem.potential(x) / noise_scale ** 2


def gradient_mismatch(problem, points, h=1e-5):
    """Largest |f(x) + grad V(x)| over ``points``, with a central-difference gradient."""
    if problem.potential is None:
        raise NotGradientProblem(f"{problem.name} has no potential")
    points = _as_state(problem, np.atleast_2d(points))
    grad = np.empty_like(points)
    for i in range(problem.dim):
        step = np.zeros(problem.dim)
        step[i] = h
        grad[:, i] = (problem.potential(points + step) - problem.potential(points - step)) / (2 * h)
    return float(np.max(np.linalg.norm(eval_drift(problem, points) + grad, axis=-1)))
