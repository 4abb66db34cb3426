"""
Moment-average estimators: indicator weights, exponential (softmin)
weights and the minimum-AMSE OLS/TSLS combination.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from apps.common.exceptions import DegenerateVarianceError, DimensionError, WeightInvariantError
from apps.moments.estimators import fit_ols, fit_tsls, sigma_estimates
from .ranking import pick_minimizer

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    candidates: tuple = ()

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).ravel()
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)
        if np.any(weights < -WEIGHT_TOL) or np.any(weights > 1 + WEIGHT_TOL):
            raise WeightInvariantError('Weights must lie in [0, 1].')
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise WeightInvariantError(f'Weights sum to {weights.sum():.15f}.')

    def __len__(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class AveragingResult:
    beta_avg: float
    omega_star: float
    beta_ols: float
    beta_tsls: float


def moment_average(weights, estimates):
    """
    Example:
        moment_average(WeightVector([0.3, 0.7]), [1.0, 2.0])   # 1.7
    """
    if not isinstance(weights, WeightVector):
        weights = WeightVector(weights)
    estimates = np.asarray(estimates, dtype=float)
    if estimates.shape != weights.weights.shape:
        raise DimensionError('One estimate per weight is required.')
    return float(weights.weights @ estimates)


def exponential_weights(msc_values, kappa):
    values = np.asarray(msc_values, dtype=float)
    if kappa < 0:
        raise ValueError('kappa must be non-negative.')
    if not np.all(np.isfinite(values)):
        raise ValueError('Criterion values must be finite.')
    return WeightVector(softmax(-0.5 * kappa * values))


def indicator_weights(criterion_values, sizes=None, ids=None):
    values = list(criterion_values)
    sizes = sizes if sizes is not None else [0] * len(values)
    ids = ids if ids is not None else [f'{i:06d}' for i in range(len(values))]
    weights = np.zeros(len(values))
    weights[pick_minimizer(values, sizes, ids)] = 1.0
    return WeightVector(weights, candidates=tuple(ids))


def _ols_tsls_variance_gap(sig):
    gap = sig.sigma_eps_sq * (1.0 / sig.gamma_sq - 1.0 / sig.sigma_x_sq)
    if gap <= 0:
        raise DegenerateVarianceError('TSLS variance does not exceed OLS variance.')
    return gap


def omega_star(tau, sig):
    """Population AMSE-optimal OLS weight for a given tau."""
    return 1.0 / (1.0 + (tau ** 2 / sig.sigma_x_sq ** 2) / _ols_tsls_variance_gap(sig))


def amse_average(omega, tau, sig):
    """AMSE of omega * OLS + (1 - omega) * TSLS in the local OLS-vs-TSLS limit."""
    bias_sq = (omega * tau / sig.sigma_x_sq) ** 2
    variance = sig.sigma_eps_sq * (
        omega ** 2 / sig.sigma_x_sq
        + 2 * omega * (1 - omega) / sig.sigma_x_sq
        + (1 - omega) ** 2 / sig.gamma_sq
    )
    return bias_sq + variance


def omega_star_plugin(sig, tau_hat):
    """Plug-in OLS weight with a positive-part estimate of tau squared."""
    gap = _ols_tsls_variance_gap(sig)
    excess = (tau_hat ** 2 - sig.sigma_eps_sq * sig.sigma_x_sq * (sig.sigma_x_sq / sig.gamma_sq - 1.0))
    return float(1.0 / (1.0 + max(0.0, excess / sig.sigma_x_sq ** 2) / gap))


def avg_ols_tsls(d, tau_hat=None):
    sig = sigma_estimates(d)
    ols = float(fit_ols(d.y, d.X).beta[0])
    tsls_fit = fit_tsls(d.y, d.X, d.Z1)
    tsls = float(tsls_fit.beta[0])
    if tau_hat is None:
        tau_hat = float(d.x @ tsls_fit.residuals / np.sqrt(d.n))
    weight = omega_star_plugin(sig, tau_hat)
    return AveragingResult(
        beta_avg=weight * ols + (1.0 - weight) * tsls,
        omega_star=weight, beta_ols=ols, beta_tsls=tsls,
    )
