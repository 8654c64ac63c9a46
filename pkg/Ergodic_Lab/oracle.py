"""Reference values against which scheme output is validated.

Three sources are available, recorded as the provenance of every value:

* closed-form  -- Gaussian moments of the Ornstein-Uhlenbeck stationary law
* quadrature   -- 1D integrals against the Gibbs density exp(-2 V / s^2)
* fine-step    -- tamed runs at a step at least 16 times finer, sharing the
                  Brownian paths of the coarse runs (common random numbers)
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .engine import DEFAULT_DT_CAP, MonteCarloEngine, ObservableKind, scheme_params
from .errors import GridTooNarrow, LowAcceptance, NodesTooFew, NotGradientProblem
from .model import LinearDrift, gibbs_log_density
from .scheme import StepKind

logger = logging.getLogger(__name__)

BOUNDARY_RATIO = 1e-12
RICHARDSON_TOL = 1e-8
FINE_STEP_RATIO = 16
MIN_ACCEPTANCE = 1e-3
PROPOSAL_WIDENING = 1.2


@dataclass(frozen=True)
class OracleValue:
    value: float
    provenance: str
    details: dict = field(default_factory=dict)

    def as_dict(self):
        return {"value": self.value, "provenance": self.provenance, **self.details}


@dataclass(frozen=True)
class QuadratureGrid:
    lower: float
    upper: float
    n_nodes: int = 4001
    rule: str = "simpson"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("grid needs lower < upper")
        if self.rule not in ("trapezoid", "simpson"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.n_nodes < 9:
            raise ValueError("grid needs at least 9 nodes")
        if self.rule == "simpson" and self.n_nodes % 2 == 0:
            raise ValueError("simpson rule needs an odd number of nodes")

    def nodes(self):
        return np.linspace(self.lower, self.upper, self.n_nodes)

    def refined(self):
        return QuadratureGrid(self.lower, self.upper, 2 * self.n_nodes - 1, self.rule)

    def integrate(self, values, nodes):
        if self.rule == "simpson":
            return integrate.simpson(values, x=nodes)
        return integrate.trapezoid(values, x=nodes)


# --- 1. CLOSED FORM ---

def ou_stationary_moment(gamma, sigma, order):
    """E[X^order] under N(0, sigma^2 / (2 gamma)); odd orders vanish."""
    if not gamma > 0 or not sigma > 0:
        raise ValueError("gamma and sigma must be positive")
    if order < 0 or int(order) != order:
        raise ValueError("order must be a nonnegative integer")
    if order % 2:
        return 0.0
    variance = sigma ** 2 / (2 * gamma)
    return variance ** (order // 2) * math.prod(range(order - 1, 0, -2))


def gaussian_abs_moment(variance, order):
    """E|Z|^order for Z ~ N(0, variance)."""
    return (2 * variance) ** (order / 2) * gamma_fn((order + 1) / 2) / math.sqrt(math.pi)


# --- 2. QUADRATURE ---

def _require_1d_gradient(problem):
    if problem.dim != 1 or problem.potential is None:
        raise NotGradientProblem(f"quadrature needs a 1D gradient problem, {problem.name} is not")


def quadrature_invariant_average(problem, obs, noise_scale, grid, check_refinement=True):
    """Integral of obs against the normalized Gibbs density on ``grid``."""
    _require_1d_gradient(problem)

    def average(g):
        nodes = g.nodes()
        log_density = gibbs_log_density(problem, nodes[:, None], noise_scale)
        weights = np.exp(log_density - np.max(log_density))
        boundary = max(weights[0], weights[-1])
        if boundary >= BOUNDARY_RATIO:
            raise GridTooNarrow(float(boundary))
        numerator = g.integrate(obs(nodes[:, None]) * weights, nodes)
        return float(numerator / g.integrate(weights, nodes))

    value = average(grid)
    if check_refinement:
        delta = abs(average(grid.refined()) - value)
        if delta >= RICHARDSON_TOL:
            raise NodesTooFew(delta)
    return value


def default_grid(problem, noise_scale, n_nodes=4001, rule="simpson"):
    """Symmetric grid wide enough for the Gibbs density to fall below the boundary ratio."""
    _require_1d_gradient(problem)
    half_width = 1.0
    for _ in range(60):
        nodes = np.linspace(-half_width, half_width, 801)
        log_density = gibbs_log_density(problem, nodes[:, None], noise_scale)
        if max(log_density[0], log_density[-1]) - np.max(log_density) < math.log(BOUNDARY_RATIO) - 2:
            return QuadratureGrid(-half_width, half_width, n_nodes, rule)
        half_width *= 1.5
    raise GridTooNarrow(1.0)


def invariant_reference(problem, obs, grid=None):
    """Best available value of the invariant average of ``obs``."""
    scale = problem.noise.isotropic_scale()
    if isinstance(problem.drift, LinearDrift) and scale is not None:
        value = _ou_closed_form(problem, obs, scale)
        if value is not None:
            return OracleValue(value, "closed-form", {"gamma": problem.drift.rate, "sigma": scale})
    if problem.dim == 1 and problem.potential is not None and scale is not None:
        grid = grid or default_grid(problem, scale)
        value = quadrature_invariant_average(problem, obs, scale, grid)
        return OracleValue(value, "quadrature", {
            "lower": grid.lower, "upper": grid.upper, "n_nodes": grid.n_nodes, "rule": grid.rule,
        })
    raise NotGradientProblem(f"no invariant-law oracle for {problem.name}; use a fine-step reference")


def _ou_closed_form(problem, obs, scale):
    rate = problem.drift.rate
    variance = scale ** 2 / (2 * rate)
    if obs.kind is ObservableKind.COORDINATE_MOMENT:
        return ou_stationary_moment(rate, scale, obs.order)
    if obs.kind is ObservableKind.CUSTOM_POLYNOMIAL:
        return math.fsum(c * ou_stationary_moment(rate, scale, j) for j, c in enumerate(obs.coefficients))
    if problem.dim == 1:
        if obs.order % 2 == 0:
            return ou_stationary_moment(rate, scale, obs.order)
        return float(gaussian_abs_moment(variance, obs.order))
    return None


def ou_finite_time_moment(gamma, sigma, x0, T):
    """E[X(T)^2] for the 1D OU process started at x0."""
    decay = math.exp(-2 * gamma * T)
    return x0 ** 2 * decay + sigma ** 2 / (2 * gamma) * (1 - decay)


def gibbs_moments(problem, noise_scale, grid):
    """Mean and standard deviation of the 1D Gibbs law, by quadrature on ``grid``."""
    _require_1d_gradient(problem)
    nodes = grid.nodes()
    log_density = gibbs_log_density(problem, nodes[:, None], noise_scale)
    weights = np.exp(log_density - np.max(log_density))
    mass = grid.integrate(weights, nodes)
    mean = grid.integrate(nodes * weights, nodes) / mass
    variance = grid.integrate((nodes - mean) ** 2 * weights, nodes) / mass
    return float(mean), float(math.sqrt(variance))


def rejection_sample(problem, noise_scale, n, seed, proposal_scale=None, grid=None):
    """Independent draws from the 1D Gibbs density by rejection from a Gaussian.

    The proposal is centred on the Gibbs mean; its standard deviation is
    ``proposal_scale``, or 1.2 times the Gibbs standard deviation when omitted.
    The envelope constant is the maximum of the log density ratio over
    ``grid`` and proposals outside the grid are rejected.  Raises
    LowAcceptance when the acceptance rate falls below 1e-3.
    """
    _require_1d_gradient(problem)
    if n < 1:
        raise ValueError("n must be at least 1")
    grid = grid or default_grid(problem, noise_scale)
    centre, spread = gibbs_moments(problem, noise_scale, grid)
    tau = PROPOSAL_WIDENING * spread if proposal_scale is None else float(proposal_scale)
    if not tau > 0:
        raise ValueError("proposal_scale must be positive")

    def log_ratio(x):
        return gibbs_log_density(problem, x[:, None], noise_scale) + (x - centre) ** 2 / (2 * tau * tau)

    bound = float(np.max(log_ratio(grid.nodes())))
    rng = np.random.default_rng(seed)
    accepted = []
    total = proposed = hits = 0
    rate = 0.5
    while total < n:
        size = int(1.2 * (n - total) / rate) + 64
        proposals = centre + tau * rng.standard_normal(size)
        u = rng.random(size)
        inside = (proposals >= grid.lower) & (proposals <= grid.upper)
        keep = np.zeros(size, dtype=bool)
        keep[inside] = np.log(u[inside]) < log_ratio(proposals[inside]) - bound
        proposed += size
        hits += int(keep.sum())
        rate = hits / proposed
        if rate < MIN_ACCEPTANCE:
            raise LowAcceptance(rate)
        chosen = proposals[keep][: n - total]
        accepted.append(chosen)
        total += chosen.size
    logger.debug("rejection sampler on %s: acceptance %.3f", problem.name, rate)
    return np.concatenate(accepted)


# --- 3. FINE-STEP REFERENCE ---

def reference_finite_time(problem, obs, x0, T, dt_ref, M, master, engine=None, alpha=1.0,
                          dt_cap=DEFAULT_DT_CAP):
    """Estimate of E[phi(X(T))] from tamed runs at dt_ref, keyed at the finest resolution."""
    n_steps = round(T / dt_ref)
    if n_steps < 0 or abs(n_steps * dt_ref - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt_ref={dt_ref}")
    engine = engine or MonteCarloEngine()
    params = scheme_params(dt_ref, n_steps, alpha=alpha, dt_cap=dt_cap)
    return engine.estimate_observable(problem, params, StepKind.TAMED, x0, obs, M, master)


@dataclass(frozen=True)
class CoupledDifference:
    coarse: object
    fine: object
    difference: object


def dyadic_level(dt, dt_ref):
    """L with dt = 2**L * dt_ref (to relative precision 1e-9)."""
    ratio = dt / dt_ref
    level = round(math.log2(ratio)) if ratio >= 1 else -1
    if level < 0 or abs(2 ** level * dt_ref - dt) > 1e-9 * dt:
        raise ValueError(f"dt={dt} is not a power-of-two multiple of dt_ref={dt_ref}")
    return level


def coupled_difference(problem, obs, x0, T, dt, dt_ref, M, master, engine=None, kind=StepKind.TAMED,
                       alpha=1.0, dt_cap=DEFAULT_DT_CAP):
    """Coarse run at dt and fine reference at dt_ref on the same Brownian paths.

    Returns estimates of both means and of the per-path difference, whose
    variance is far below the sum of the two individual variances.
    """
    engine = engine or MonteCarloEngine()
    level = dyadic_level(dt, dt_ref)
    coarse_params = scheme_params(dt, round(T / dt), alpha=alpha, dt_cap=dt_cap)
    fine_params = scheme_params(dt_ref, round(T / dt_ref), alpha=alpha, dt_cap=dt_cap)
    coarse_key = (coarse_params.n_steps, obs)
    fine_key = (fine_params.n_steps, obs)
    coarse = engine.path_values(problem, coarse_params, kind, x0, [coarse_key], M, master, refine=level)
    fine = engine.path_values(problem, fine_params, StepKind.TAMED, x0, [fine_key], M, master)
    return CoupledDifference(
        coarse=coarse.estimate(coarse_key),
        fine=fine.estimate(fine_key),
        difference=coarse.difference(coarse_key, fine, fine_key),
    )
