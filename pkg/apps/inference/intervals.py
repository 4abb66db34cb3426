"""
Confidence intervals after moment selection: the two-step simulation
interval, its one-step comparator and the naive textbook interval.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from django.db import models
from scipy import linalg, optimize

from .draws import mvn_draws
from .limits import lambda_draws
from .quantiles import chi_sq_quantile, normal_critical_value
from .region import DEFAULT_GRID_POINTS, DEFAULT_QUASI_POINTS, tau_region

logger = logging.getLogger(__name__)

DEFAULT_SEARCH_BUDGET = 2000
SEARCH_STARTS = 3


class CiMethod(models.TextChoices):
    NAIVE = 'NAIVE', 'Naive'
    ONE_STEP = 'ONE_STEP', '1-Step'
    TWO_STEP = 'TWO_STEP', '2-Step'


@dataclass(frozen=True)
class CiResult:
    lower: float
    upper: float
    method: str
    alpha: float
    delta: float = 0.0
    draws_J: int = 0
    region_points: int = 0
    diagnostics: tuple = ()

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def guaranteed(self):
        """Only the two-step interval carries a coverage guarantee."""
        return self.method == CiMethod.TWO_STEP

    def covers(self, value):
        return self.lower <= value <= self.upper


def _bounds(ctx, M, tau_star, alpha):
    lam = lambda_draws(tau_star, M, ctx)
    a, b = np.quantile(lam, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(a), float(b)


def _interval(ctx, a_min, b_max):
    root_n = math.sqrt(ctx.n)
    return ctx.estimate - b_max / root_n, ctx.estimate - a_min / root_n


def _search(ctx, M, alpha, delta, starts, budget, sign):
    """
    Nelder-Mead over the unit ball mapped onto the tau ellipsoid; ``sign``
    is +1 to minimize a(tau*) and -1 to maximize b(tau*).
    """
    tau_hat = ctx.tau_hat
    scale = math.sqrt(chi_sq_quantile(ctx.q, 1.0 - delta))
    chol = linalg.cholesky(ctx.tau_cov, lower=True)
    pick = 0 if sign > 0 else 1

    def to_tau(z):
        norm = np.linalg.norm(z)
        ball = z if norm <= 1.0 else z / norm
        return tau_hat + scale * (chol @ ball)

    def objective(z):
        return sign * _bounds(ctx, M, to_tau(z), alpha)[pick]

    best = np.inf
    evaluations = 0
    per_start = max(1, budget // max(1, len(starts)))
    for start in starts:
        z0 = linalg.solve_triangular(chol, start - tau_hat, lower=True) / scale
        result = optimize.minimize(
            objective, z0, method='Nelder-Mead',
            options={'maxfev': per_start, 'xatol': 1e-4, 'fatol': 1e-6},
        )
        best = min(best, float(result.fun))
        evaluations += int(result.nfev)
    return sign * best, evaluations


def two_step_ci(ctx, alpha=0.05, delta=0.05, draws_J=1000, seed=0, draws=None,
                grid_points=DEFAULT_GRID_POINTS, search_budget=DEFAULT_SEARCH_BUDGET,
                quasi_points=DEFAULT_QUASI_POINTS):
    """
    Simulation-based interval with asymptotic coverage of at least
    1 - (alpha + delta).

    The same draws M are reused for every tau* in the region, and tau-hat is
    always visited so the result contains the one-step interval.

    Example:
        ctx = ols_tsls_context(d)
        ci = two_step_ci(ctx, alpha=0.05, delta=0.05, draws_J=1000, seed=11)
    """
    if not (0 < alpha < 1 and 0 < delta < 1 and alpha + delta < 1):
        raise ValueError('Need 0 < alpha, delta and alpha + delta < 1.')
    M = mvn_draws(ctx.base.omega, draws_J, seed) if draws is None else np.asarray(draws)
    points = tau_region(ctx.tau_hat, ctx.tau_cov, delta, budget=quasi_points, points=grid_points, seed=seed)
    points = np.vstack([ctx.tau_hat[None, :], points])

    evaluated = [(tau_star, *_bounds(ctx, M, tau_star, alpha)) for tau_star in points]
    a_min = min(a for _, a, _ in evaluated)
    b_max = max(b for _, _, b in evaluated)
    visited = len(evaluated)

    if ctx.q > 1 and search_budget > 0:
        by_a = sorted(evaluated, key=lambda item: item[1])[:SEARCH_STARTS]
        by_b = sorted(evaluated, key=lambda item: -item[2])[:SEARCH_STARTS]
        searched_a, used_a = _search(ctx, M, alpha, delta, [t for t, _, _ in by_a], search_budget, +1)
        searched_b, used_b = _search(ctx, M, alpha, delta, [t for t, _, _ in by_b], search_budget, -1)
        a_min = min(a_min, searched_a)
        b_max = max(b_max, searched_b)
        visited += used_a + used_b

    lower, upper = _interval(ctx, a_min, b_max)
    diagnostics = tuple(
        (float(t[0]), a, b) for t, a, b in evaluated
    ) if ctx.q == 1 else ()
    logger.debug('Two-step interval [%.6f, %.6f] from %d region points', lower, upper, visited)
    return CiResult(
        lower=lower, upper=upper, method=CiMethod.TWO_STEP, alpha=alpha, delta=delta,
        draws_J=M.shape[0], region_points=visited, diagnostics=diagnostics,
    )


def one_step_ci(ctx, alpha=0.05, draws_J=1000, seed=0, draws=None):
    """Treats tau-hat as the truth; not guaranteed to cover."""
    M = mvn_draws(ctx.base.omega, draws_J, seed) if draws is None else np.asarray(draws)
    a, b = _bounds(ctx, M, ctx.tau_hat, alpha)
    lower, upper = _interval(ctx, a, b)
    return CiResult(
        lower=lower, upper=upper, method=CiMethod.ONE_STEP, alpha=alpha,
        draws_J=M.shape[0], region_points=1,
        diagnostics=((float(ctx.tau_hat[0]), a, b),) if ctx.q == 1 else (),
    )


def naive_ci(selected, target_coef=0, alpha=0.05):
    z = normal_critical_value(alpha)
    estimate = float(selected.beta[target_coef])
    half = z * float(selected.se[target_coef])
    return CiResult(lower=estimate - half, upper=estimate + half, method=CiMethod.NAIVE, alpha=alpha)
