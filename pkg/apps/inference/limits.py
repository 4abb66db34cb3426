"""
Limit experiment for post-selection estimators: given draws M ~ N(0, Omega)
and a candidate tau*, reproduce the selection (or averaging) rule draw by
draw and return Lambda_j = -grad' [sum_S phi_S K_S Xi_S] (M_j + (0, tau*)).
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from django.db import models
from scipy import linalg

from apps.common.exceptions import ConfigError, DimensionError
from apps.moments.estimators import fit_candidate, sigma_estimates
from apps.moments.models import MomentKind
from apps.selection.averaging import avg_ols_tsls
from apps.selection.criteria import downward_j_select, gmm_msc_select, kappa_n, CriterionFlavor
from apps.selection.fmsc import (
    components_choose_iv, components_ols_tsls, fmsc_choose_iv, fmsc_ols_vs_tsls,
)
from apps.selection.ranking import tie_order
from .quantiles import chi_sq_quantile

logger = logging.getLogger(__name__)


class WeightRule(models.TextChoices):
    FMSC = 'FMSC', 'FMSC indicator'
    FMSC_PP = 'FMSC_PP', 'Positive-part FMSC indicator'
    MIN_AMSE = 'MIN_AMSE', 'Minimum-AMSE OLS/TSLS average'
    DOWNWARD_J = 'DOWNWARD_J', 'Downward J-test'
    GMM_MSC = 'GMM_MSC', 'GMM information criterion'
    FIXED = 'FIXED', 'Single fixed candidate'


@dataclass(frozen=True)
class LimitContext:
    """
    Everything the limit experiment needs: candidate components sharing one
    Omega/Psi/tau-hat, the weight rule and the data-level estimate.
    """
    candidates: tuple
    components: tuple
    rule: str
    estimate: float
    n: int
    r: int
    sigma: object = None
    j_alpha: float = 0.1
    kappa: float = None
    fixed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'candidates', tuple(self.candidates))
        object.__setattr__(self, 'components', tuple(self.components))
        if not self.components or len(self.components) != len(self.candidates):
            raise DimensionError('One component bundle per candidate is required.')
        if self.rule == WeightRule.MIN_AMSE:
            kinds = [s.kind for s in self.candidates]
            if self.sigma is None or sorted(kinds) != sorted([MomentKind.OLS_CANDIDATE, MomentKind.TSLS_CANDIDATE]):
                raise ConfigError('The minimum-AMSE rule needs the OLS/TSLS candidates and sigma estimates.')

    @property
    def base(self):
        return self.components[0]

    @property
    def p(self):
        return self.base.p

    @property
    def q(self):
        return self.base.q

    @property
    def tau_hat(self):
        return self.base.tau

    @cached_property
    def tau_cov(self):
        c = self.base
        cov = c.psi @ c.omega @ c.psi.T
        return (cov + cov.T) / 2

    @cached_property
    def loadings(self):
        return np.column_stack([c.loading for c in self.components])

    @cached_property
    def sizes(self):
        return np.array([s.size for s in self.candidates])

    @cached_property
    def ids(self):
        return [s.id for s in self.candidates]

    @cached_property
    def fmsc_offsets(self):
        """Per candidate: v_h' Psi Omega Psi' v_h and v' Omega v."""
        V = self.loadings
        Vh = V[self.p:, :]
        bias_shift = np.einsum('ic,ij,jc->c', Vh, self.tau_cov, Vh)
        variance = np.einsum('ic,ij,jc->c', V, self.base.omega, V)
        return bias_shift, variance

    @cached_property
    def j_forms(self):
        """
        Quadratic forms turning Xi_S u into the limit J statistic of each
        candidate, in the efficient-GMM form Omega_S^-1 - Omega_S^-1 F (F' Omega_S^-1 F)^-1 F' Omega_S^-1.

        ``j_statistic`` evaluates the sample J at the TSLS fit, so it shares
        this limit only when the moment covariance is proportional to
        E[z z'] (homoskedastic errors). Under heteroskedasticity the simulated
        GMM and downward-J rules approximate the sample rules.
        """
        forms = []
        for c in self.components:
            xi = c.xi_S.matrix
            omega_inv = linalg.pinvh(xi @ c.omega @ xi.T)
            F = c.jacobian
            middle = linalg.pinvh(F.T @ omega_inv @ F)
            forms.append(omega_inv - omega_inv @ F @ middle @ F.T @ omega_inv)
        return forms


def limit_j_statistics(U, ctx):
    """J_S(tau, M) for every draw row of U = M + (0, tau*), one column per candidate."""
    out = np.empty((U.shape[0], len(ctx.candidates)))
    for k, (c, form) in enumerate(zip(ctx.components, ctx.j_forms)):
        U_S = c.xi_S.select(U)
        out[:, k] = np.einsum('ij,jk,ik->i', U_S, form, U_S)
    return out


def _one_hot(index, width):
    weights = np.zeros((index.shape[0], width))
    weights[np.arange(index.shape[0]), index] = 1.0
    return weights


def _argmin_with_ties(values, order):
    return order[np.argmin(values[:, order], axis=1)]


def draw_weights(ctx, tau_star, M, U):
    width = len(ctx.candidates)
    rule = ctx.rule
    if rule == WeightRule.FIXED:
        return _one_hot(np.full(M.shape[0], ctx.fixed), width)

    if rule in (WeightRule.FMSC, WeightRule.FMSC_PP):
        pseudo_tau = M @ ctx.base.psi.T + tau_star
        bias_shift, variance = ctx.fmsc_offsets
        bias = (pseudo_tau @ ctx.loadings[ctx.p:, :]) ** 2 - bias_shift
        if rule == WeightRule.FMSC_PP:
            bias = np.maximum(bias, 0.0)
        order = tie_order(ctx.sizes, ctx.ids)
        return _one_hot(_argmin_with_ties(bias + variance, order), width)

    if rule == WeightRule.MIN_AMSE:
        sig = ctx.sigma
        pseudo_tau = (M @ ctx.base.psi.T + tau_star)[:, 0]
        gap = sig.sigma_eps_sq * (1.0 / sig.gamma_sq - 1.0 / sig.sigma_x_sq)
        excess = np.maximum(0.0, (pseudo_tau ** 2 - sig.v_hat) / sig.sigma_x_sq ** 2)
        omega = 1.0 / (1.0 + excess / gap)
        weights = np.empty((M.shape[0], width))
        for k, s in enumerate(ctx.candidates):
            weights[:, k] = omega if s.kind == MomentKind.OLS_CANDIDATE else 1.0 - omega
        return weights

    j_stats = limit_j_statistics(U, ctx)
    if rule == WeightRule.DOWNWARD_J:
        order = tie_order(ctx.sizes, ctx.ids, prefer_larger=True)
        critical = np.array([
            np.inf if size == ctx.r else chi_sq_quantile(size - ctx.r, 1.0 - ctx.j_alpha)
            for size in ctx.sizes[order]
        ])
        accepted = j_stats[:, order] < critical
        first = np.where(accepted.any(axis=1), np.argmax(accepted, axis=1), len(order) - 1)
        return _one_hot(order[first], width)

    if rule == WeightRule.GMM_MSC:
        kappa = kappa_n(CriterionFlavor.BIC, ctx.n) if ctx.kappa is None else ctx.kappa
        values = j_stats - (ctx.sizes - ctx.r) * kappa
        return _one_hot(_argmin_with_ties(values, tie_order(ctx.sizes, ctx.ids, prefer_larger=True)), width)

    raise ConfigError(f'Unknown weight rule: {rule}')


def lambda_draws(tau_star, M, ctx):
    """
    Example:
        lam = lambda_draws(ctx.tau_hat, M, ctx)   # J values of Lambda
    """
    tau_star = np.atleast_1d(np.asarray(tau_star, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if tau_star.shape != (ctx.q,) or M.shape[1] != ctx.p + ctx.q:
        raise DimensionError('tau* or draws do not match the moment dimension.')
    U = M.copy()
    U[:, ctx.p:] += tau_star
    weights = draw_weights(ctx, tau_star, M, U)
    return -np.sum(weights * (U @ ctx.loadings), axis=1)


def choose_iv_context(d, candidates, target_coef=0, rule=WeightRule.FMSC, j_alpha=0.1,
                      flavor=CriterionFlavor.BIC, fixed=0):
    """Limit context for instrument-subset selection, with the rule's data-level estimate."""
    candidates = list(candidates)
    components = components_choose_iv(d, candidates, target_coef)
    if rule in (WeightRule.FMSC, WeightRule.FMSC_PP):
        report = fmsc_choose_iv(d, candidates, target_coef)
        chosen = report.selected if rule == WeightRule.FMSC else report.selected_pp
        estimate = report.row(chosen).estimate
    else:
        if rule == WeightRule.DOWNWARD_J:
            chosen = downward_j_select(d, candidates, j_alpha).id
        elif rule == WeightRule.GMM_MSC:
            chosen = gmm_msc_select(d, candidates, flavor)[0].id
        elif rule == WeightRule.FIXED:
            chosen = candidates[fixed].id
        else:
            raise ConfigError(f'Rule {rule} does not apply to instrument selection.')
        index = [s.id for s in candidates].index(chosen)
        estimate = float(fit_candidate(d, candidates[index]).beta[target_coef])
    return LimitContext(
        candidates=candidates, components=components, rule=rule, estimate=float(estimate),
        n=d.n, r=d.r, j_alpha=j_alpha,
        kappa=kappa_n(flavor, d.n) if rule == WeightRule.GMM_MSC else None, fixed=fixed,
    )


def ols_tsls_context(d, rule=WeightRule.FMSC, fixed=0):
    """Limit context for OLS versus TSLS; candidate 0 is TSLS, candidate 1 is OLS."""
    sig = sigma_estimates(d)
    candidates, components = components_ols_tsls(d, sig)
    if rule in (WeightRule.FMSC, WeightRule.FMSC_PP):
        report = fmsc_ols_vs_tsls(d, sig)
        estimate = report.row(report.selected if rule == WeightRule.FMSC else report.selected_pp).estimate
    elif rule == WeightRule.MIN_AMSE:
        estimate = avg_ols_tsls(d).beta_avg
    elif rule == WeightRule.FIXED:
        estimate = float(fit_candidate(d, candidates[fixed]).beta[0])
    else:
        raise ConfigError(f'Rule {rule} does not apply to OLS versus TSLS.')
    return LimitContext(
        candidates=candidates, components=components, rule=rule, estimate=float(estimate),
        n=d.n, r=d.r, sigma=sig, fixed=fixed,
    )
