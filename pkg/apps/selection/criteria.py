"""
Competing moment selection procedures: J-statistic, GMM information
criteria, the DHW pretest, downward J-testing, CCIC and the combined
GMM/CCIC rule.
"""
import logging
from dataclasses import dataclass

import numpy as np
from django.db import models
from scipy import linalg, stats

from apps.common.exceptions import (
    ConfigError, DegenerateVarianceError, NearSingularCovarianceError,
    UnsupportedConfigError,
)
from apps.inference.quantiles import chi_sq_quantile
from apps.moments.estimators import (
    candidate_instruments, fit_candidate, fit_ols, fit_tsls, first_stage_r2,
    omega_centered, sigma_estimates,
)
from apps.moments.models import RANK_TOL
from .ranking import pick_minimizer

logger = logging.getLogger(__name__)

R2_CEILING = 1.0 - 1e-12


class CriterionFlavor(models.TextChoices):
    BIC = 'BIC', 'log n'
    HQ = 'HQ', '2.01 log log n'
    AIC = 'AIC', '2'


@dataclass(frozen=True)
class CriterionValue:
    candidate: str
    j_stat: float
    penalty: float
    value: float
    size: int = 0


@dataclass(frozen=True)
class JTest:
    stat: float
    df: int
    p_value: float


@dataclass(frozen=True)
class DhwResult:
    stat: float
    select_ols: bool


def kappa_n(flavor, n):
    if n < 8:
        raise ConfigError(f'Information criteria need n >= 8, got {n}.')
    if flavor == CriterionFlavor.BIC:
        return float(np.log(n))
    if flavor == CriterionFlavor.HQ:
        return float(2.01 * np.log(np.log(n)))
    if flavor == CriterionFlavor.AIC:
        return 2.0
    raise ConfigError(f'Unknown criterion flavor: {flavor}')


def _inverse_psd(matrix, allow_pinv, label):
    eigvals = np.linalg.eigvalsh(matrix)
    top = max(abs(eigvals[-1]), np.finfo(float).tiny)
    if eigvals[0] > RANK_TOL * top:
        return linalg.inv(matrix)
    if not allow_pinv:
        raise NearSingularCovarianceError(f'Moment covariance for {label!r} is numerically singular.')
    logger.warning('Moment covariance for %s is near singular; using the pseudo-inverse', label)
    return linalg.pinvh(matrix)


def j_statistic(d, s, allow_pinv=True):
    """
    J = n fbar' Omega_S^-1 fbar with the centered Omega_S.

    Example:
        j_statistic(d, lattice[-1])
    """
    fit = fit_candidate(d, s)
    Z_S = candidate_instruments(d, s)
    fbar = Z_S.T @ fit.residuals / d.n
    omega = omega_centered(d, s, fit.residuals)
    return float(d.n * fbar @ _inverse_psd(omega, allow_pinv, s.id) @ fbar)


def j_test(d, s, allow_pinv=True):
    stat = j_statistic(d, s, allow_pinv)
    df = s.size - d.r
    p_value = 1.0 if df == 0 else float(stats.chi2.sf(stat, df))
    return JTest(stat=stat, df=df, p_value=p_value)


def criterion_values(d, candidates, kappa):
    values = []
    for s in candidates:
        j = j_statistic(d, s)
        penalty = (s.size - d.r) * kappa
        values.append(CriterionValue(candidate=s.id, j_stat=j, penalty=penalty, value=j - penalty, size=s.size))
    return values


def gmm_msc_select(d, candidates, flavor=CriterionFlavor.BIC, kappa=None):
    """
    Andrews-type GMM criterion J - (|S| - r) kappa_n, minimized.
    ``kappa`` overrides the flavor's penalty rate.
    """
    kappa = kappa_n(flavor, d.n) if kappa is None else float(kappa)
    values = criterion_values(d, candidates, kappa)
    best = pick_minimizer([v.value for v in values], [v.size for v in values],
                          [v.candidate for v in values], prefer_larger=True)
    return candidates[best], values


def dhw_critical_value(alpha):
    return chi_sq_quantile(1, 1.0 - alpha)


def dhw_test(d, critical_value):
    """Durbin-Hausman-Wu pretest: keep OLS iff the statistic is below the critical value."""
    sig = sigma_estimates(d)
    if sig.gamma_sq >= sig.sigma_x_sq:
        raise DegenerateVarianceError('gamma-hat squared must be below sigma-hat_x squared.')
    denom = sig.sigma_eps_sq * (1.0 / sig.gamma_sq - 1.0 / sig.sigma_x_sq)
    if denom <= 0:
        raise DegenerateVarianceError('DHW variance is not positive.')
    diff = fit_ols(d.y, d.X).beta[0] - fit_tsls(d.y, d.X, d.Z1).beta[0]
    stat = float(d.n * diff ** 2 / denom)
    return DhwResult(stat=stat, select_ols=stat < critical_value)


def downward_j_select(d, candidates, alpha=0.1):
    """Largest candidate whose J-test is not rejected; the smallest one if all are."""
    ordered = sorted(candidates, key=lambda s: (-s.size, s.id))
    for s in ordered:
        if j_test(d, s).p_value > alpha:
            return s
    return ordered[-1]


def ccic_values(d, candidates, kappa):
    x = d.x
    values = []
    for s in candidates:
        r2 = first_stage_r2(x, candidate_instruments(d, s))
        if r2 >= R2_CEILING:
            logger.warning('First-stage R2 for %s is %.15f; clamping below one', s.id, r2)
            r2 = R2_CEILING
        penalty = (s.size - d.r) * kappa
        values.append(CriterionValue(
            candidate=s.id, j_stat=float(d.n * np.log(1.0 - r2)),
            penalty=penalty, value=float(d.n * np.log(1.0 - r2)) + penalty, size=s.size,
        ))
    return values


def ccic_select(d, candidates, flavor=CriterionFlavor.BIC):
    """
    Canonical-correlations criterion n log(1 - R2) + (|S| - r) kappa_n.
    ``j_stat`` of each returned value holds the n log(1 - R2) term.
    """
    values = ccic_values(d, candidates, kappa_n(flavor, d.n))
    best = pick_minimizer([v.value for v in values], [v.size for v in values], [v.candidate for v in values])
    return candidates[best], values


def combined_select(d, candidates, flavor=CriterionFlavor.BIC):
    """Valid set unless both the GMM criterion and CCIC choose the full set."""
    if len(candidates) != 2:
        raise UnsupportedConfigError('The combined criterion is defined for {valid, full} only.')
    valid, full = sorted(candidates, key=lambda s: s.size)
    gmm_choice, _ = gmm_msc_select(d, candidates, flavor)
    ccic_choice, _ = ccic_select(d, candidates, flavor)
    if gmm_choice.id == full.id and ccic_choice.id == full.id:
        return full
    return valid
