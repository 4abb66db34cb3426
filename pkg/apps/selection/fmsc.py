"""
Focused moment selection: tau-hat, Psi-hat, the generic FMSC value and the
two linear IV specializations (OLS vs TSLS, choosing instruments).
"""
import logging
from dataclasses import dataclass

import numpy as np

from apps.common.exceptions import DegenerateVarianceError, DimensionError
from apps.moments.estimators import (
    fit_candidate, fit_ols, fit_tsls, jacobian, k_matrix, omega_assembled,
    omega_homoskedastic, sigma_estimates,
)
from apps.moments.models import (
    GmmComponents, MomentKind, MomentSet, ols_tsls_candidates, selection_matrix,
)
from .ranking import pick_minimizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FmscValue:
    bias_sq: float
    variance: float

    @property
    def fmsc(self):
        return self.bias_sq + self.variance


@dataclass(frozen=True)
class CandidateScore:
    candidate: str
    size: int
    bias_sq: float
    variance: float
    estimate: float = float('nan')

    @property
    def fmsc(self):
        return self.bias_sq + self.variance

    @property
    def fmsc_positive_part(self):
        return max(0.0, self.bias_sq) + self.variance


@dataclass(frozen=True)
class FmscReport:
    rows: tuple
    selected: str
    selected_pp: str
    tau: np.ndarray
    tau_cov: np.ndarray
    target: str = ''

    def row(self, candidate):
        for row in self.rows:
            if row.candidate == candidate:
                return row
        raise KeyError(candidate)

    @property
    def selected_estimate(self):
        return self.row(self.selected).estimate


def _valid_set(d):
    return MomentSet(id='valid', included=tuple(range(d.p)), kind=MomentKind.IV_SUBSET)


def tau_hat_iv(d):
    """tau-hat = Z2'(y - X beta_valid)/sqrt(n)."""
    if d.q == 0:
        return np.zeros(0)
    valid = fit_tsls(d.y, d.X, d.Z1)
    return d.Z2.T @ valid.residuals / np.sqrt(d.n)


def psi_hat_iv(d):
    """Psi-hat = [(Z2'X/n) K_v | I_q]; K_v carries its own sign."""
    K_v = k_matrix(d, _valid_set(d))
    left = (d.Z2.T @ d.X / d.n) @ K_v
    return np.hstack([left, np.eye(d.q)])


def bias_matrix(tau, psi, omega):
    """
    Asymptotically unbiased estimate of tau tau': tau-hat tau-hat' - Psi Omega Psi'.

    Example:
        bias_matrix([3.0], [[0.0, 1.0]], [[1.0, 0.0], [0.0, 4.0]])   # [[5.]]
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    if psi.shape[0] != tau.shape[0] or psi.shape[1] != omega.shape[0] or omega.shape[0] != omega.shape[1]:
        raise DimensionError('tau, psi and omega are not conformable.')
    cov = psi @ omega @ psi.T
    out = np.outer(tau, tau) - (cov + cov.T) / 2
    return (out + out.T) / 2


def fmsc_value(c, bias=None):
    """
    Squared-bias and variance pieces of the FMSC for one candidate.
    ``bias`` replaces the default tau-hat based bias matrix (used by the
    simulation-based intervals).
    """
    if bias is None:
        bias = bias_matrix(c.tau, c.psi, c.omega)
    bias = np.atleast_2d(np.asarray(bias, dtype=float))
    if bias.shape != (c.q, c.q):
        raise DimensionError(f'Bias matrix must be {c.q}x{c.q}.')
    v = c.loading
    v_h = v[c.p:]
    return FmscValue(bias_sq=float(v_h @ bias @ v_h), variance=float(v @ c.omega @ v))


def _unit(r, index):
    grad = np.zeros(r)
    grad[index] = 1.0
    return grad


def build_components(d, candidates, grad_mu, omega, tau, psi):
    components = []
    for s in candidates:
        components.append(GmmComponents(
            grad_mu=grad_mu,
            K_S=k_matrix(d, s),
            xi_S=selection_matrix(s, d.p, d.q),
            omega=omega,
            psi=psi,
            tau=tau,
            n=d.n,
            jacobian=jacobian(d, s),
        ))
    return components


def components_choose_iv(d, candidates, target_coef=0, grad_mu=None):
    if grad_mu is None:
        if not 0 <= target_coef < d.r:
            raise DimensionError(f'target_coef {target_coef} out of range for r={d.r}.')
        grad_mu = _unit(d.r, target_coef)
    for s in candidates:
        if s.kind != MomentKind.IV_SUBSET:
            raise DimensionError(f'Candidate {s.id!r} is not an instrument subset.')
    return build_components(d, candidates, grad_mu, omega_assembled(d), tau_hat_iv(d), psi_hat_iv(d))


def components_ols_tsls(d, sig=None):
    """Generic components for the OLS-vs-TSLS problem (suspect column = x)."""
    sig = sig or sigma_estimates(d)
    candidates = ols_tsls_candidates(d.p)
    components = build_components(
        d, candidates, _unit(1, 0), omega_homoskedastic(d, sig), tau_hat_iv(d), psi_hat_iv(d),
    )
    return candidates, components


def fmsc_choose_iv(d, candidates, target_coef=0, grad_mu=None):
    """
    FMSC table for instrument-subset candidates.

    Example:
        lattice = candidate_lattice(d.p, d.q)
        report = fmsc_choose_iv(d, lattice, target_coef=0)
        report.selected, report.selected_pp
    """
    components = components_choose_iv(d, candidates, target_coef, grad_mu)
    rows = []
    for s, c in zip(candidates, components):
        value = fmsc_value(c)
        estimate = fit_candidate(d, s).beta @ c.grad_mu
        rows.append(CandidateScore(
            candidate=s.id, size=s.size, bias_sq=value.bias_sq,
            variance=value.variance, estimate=float(estimate),
        ))
    sizes = [row.size for row in rows]
    ids = [row.candidate for row in rows]
    selected = rows[pick_minimizer([row.fmsc for row in rows], sizes, ids)].candidate
    selected_pp = rows[pick_minimizer([row.fmsc_positive_part for row in rows], sizes, ids)].candidate
    c0 = components[0]
    tau_cov = c0.psi @ c0.omega @ c0.psi.T
    target = d.regressor_names[target_coef] if grad_mu is None else 'custom'
    logger.debug('FMSC selected %s (positive part: %s) among %d candidates', selected, selected_pp, len(rows))
    return FmscReport(
        rows=tuple(rows), selected=selected, selected_pp=selected_pp,
        tau=c0.tau, tau_cov=(tau_cov + tau_cov.T) / 2, target=target,
    )


def fmsc_ols_vs_tsls(d, sig=None):
    """
    Closed-form FMSC for OLS versus TSLS. OLS is chosen iff tau^2/V < 2.
    """
    sig = sig or sigma_estimates(d)
    v_hat = sig.v_hat
    if v_hat <= 0:
        raise DegenerateVarianceError('V-hat is zero; OLS and TSLS coincide asymptotically.')
    tsls = fit_tsls(d.y, d.X, d.Z1)
    ols = fit_ols(d.y, d.X)
    tau = float(d.x @ tsls.residuals / np.sqrt(d.n))

    tsls_row = CandidateScore(
        candidate='tsls', size=d.p, bias_sq=0.0,
        variance=sig.sigma_eps_sq / sig.gamma_sq, estimate=float(tsls.beta[0]),
    )
    ols_row = CandidateScore(
        candidate='ols', size=1, bias_sq=(tau ** 2 - v_hat) / sig.sigma_x_sq ** 2,
        variance=sig.sigma_eps_sq / sig.sigma_x_sq, estimate=float(ols.beta[0]),
    )
    selected = 'ols' if tau ** 2 / v_hat < 2 else 'tsls'
    selected_pp = 'ols' if ols_row.fmsc_positive_part < tsls_row.fmsc_positive_part else 'tsls'
    return FmscReport(
        rows=(tsls_row, ols_row), selected=selected, selected_pp=selected_pp,
        tau=np.array([tau]), tau_cov=np.array([[v_hat]]), target=d.regressor_names[0],
    )
