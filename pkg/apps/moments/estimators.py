"""
OLS, TSLS and subset-TSLS fits plus the covariance estimators the
selection and inference apps consume. No degrees-of-freedom corrections:
every average divides by n.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from apps.common.exceptions import DimensionError, RankError, WeakInstrumentError
from .models import (
    RANK_TOL, EstimateResult, MomentKind, ResidualSource, has_full_column_rank,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SigmaEstimates:
    sigma_x_sq: float
    gamma_sq: float
    sigma_v_sq: float
    sigma_eps_sq: float

    @property
    def v_hat(self):
        """Variance estimate of tau-hat in the OLS-vs-TSLS problem."""
        return self.sigma_v_sq * self.sigma_eps_sq * self.sigma_x_sq / self.gamma_sq


def _as_matrix(values):
    arr = np.asarray(values, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def fit_ols(y, X, moment_set=None):
    """
    Least squares without an intercept.

    Example:
        fit_ols([2.0, 4.0], [[1.0], [2.0]]).beta   # array([2.])
    """
    y = np.asarray(y, dtype=float)
    X = _as_matrix(X)
    if X.shape[0] != y.shape[0]:
        raise DimensionError('X and y have different numbers of rows.')
    if not has_full_column_rank(X):
        raise RankError("X'X is singular.")
    beta = linalg.lstsq(X, y)[0]
    residuals = y - X @ beta
    sigma_sq = residuals @ residuals / y.shape[0]
    vcov = sigma_sq * linalg.inv(X.T @ X)
    return EstimateResult(beta=beta, vcov=vcov, residuals=residuals, moment_set=moment_set)


def project(Z, A):
    """P_Z A via a thin QR of Z."""
    Q, _ = linalg.qr(Z, mode='economic')
    return Q @ (Q.T @ A)


def fit_tsls(y, X, Z, moment_set=None):
    """
    Two-stage least squares; residuals use the original regressors.

    Example:
        fit_tsls(y, x, z)   # just identified: beta = z'y / z'x
    """
    y = np.asarray(y, dtype=float)
    X = _as_matrix(X)
    Z = _as_matrix(Z)
    if Z.shape[0] != y.shape[0] or X.shape[0] != y.shape[0]:
        raise DimensionError('y, X and Z have different numbers of rows.')
    if Z.shape[1] < X.shape[1]:
        raise RankError(f'{Z.shape[1]} instruments cannot identify {X.shape[1]} coefficients.')
    if not has_full_column_rank(Z):
        raise RankError("Z'Z is singular.")
    X_hat = project(Z, X)
    if not has_full_column_rank(X_hat):
        raise RankError("X'P_Z X is singular.")
    beta = linalg.lstsq(X_hat, y)[0]
    residuals = y - X @ beta
    sigma_sq = residuals @ residuals / y.shape[0]
    vcov = sigma_sq * linalg.inv(X_hat.T @ X_hat)
    return EstimateResult(beta=beta, vcov=vcov, residuals=residuals, moment_set=moment_set)


def candidate_instruments(d, s):
    """Z_S = Z Xi_S' (columns of Z picked by the moment set)."""
    s.validate(d.p, d.q, d.r)
    return d.Z[:, list(s.included)]


def fit_candidate(d, s):
    s.validate(d.p, d.q, d.r)
    if s.kind == MomentKind.OLS_CANDIDATE:
        if d.r != 1 or d.q != 1:
            raise DimensionError('OLS candidates need a scalar regressor stored as the suspect column.')
        return fit_ols(d.y, d.X, moment_set=s.id)
    return fit_tsls(d.y, d.X, candidate_instruments(d, s), moment_set=s.id)


def k_matrix(d, s):
    """
    K_S for TSLS weighting, sign included: K_S = -(A Q^-1 A')^-1 A Q^-1 with
    A = X'Z_S/n and Q = Z_S'Z_S/n, so sqrt(n)(beta_S - beta) ~ -K_S Z_S'e/sqrt(n).
    """
    Z_S = candidate_instruments(d, s)
    A = d.X.T @ Z_S / d.n
    Q = Z_S.T @ Z_S / d.n
    AQinv = linalg.solve(Q, A.T, assume_a='pos').T
    return -linalg.solve(AQinv @ A.T, AQinv, assume_a='pos')


def jacobian(d, s):
    """F_S = -Z_S'X/n, the derivative of the candidate's sample moments."""
    return -candidate_instruments(d, s).T @ d.X / d.n


def first_stage_r2(x, Z):
    """Uncentered R-squared of x on Z (constants are assumed projected out)."""
    x = np.asarray(x, dtype=float)
    fitted = project(_as_matrix(Z), x)
    return float(fitted @ fitted / (x @ x))


def sigma_estimates(d, residual_source=ResidualSource.TSLS):
    """
    Scalar-regressor variance pieces for the OLS-vs-TSLS formulas. gamma-hat
    uses the baseline block, which holds every instrument in that problem.
    """
    x = d.x
    n = d.n
    sigma_x_sq = float(x @ x / n)
    fitted = project(d.Z1, x)
    gamma_sq = float(fitted @ fitted / n)
    if gamma_sq <= RANK_TOL * sigma_x_sq:
        raise WeakInstrumentError(f'gamma-hat squared is {gamma_sq:.3e}; instruments are irrelevant in sample.')
    sigma_v_sq = sigma_x_sq - gamma_sq
    if residual_source == ResidualSource.OLS:
        residuals = fit_ols(d.y, d.X).residuals
    else:
        residuals = fit_tsls(d.y, d.X, d.Z1).residuals
    sigma_eps_sq = float(residuals @ residuals / n)
    return SigmaEstimates(
        sigma_x_sq=sigma_x_sq,
        gamma_sq=gamma_sq,
        sigma_v_sq=sigma_v_sq,
        sigma_eps_sq=sigma_eps_sq,
    )


def _centered(uZ):
    n = uZ.shape[0]
    mean = uZ.mean(axis=0)
    omega = uZ.T @ uZ / n - np.outer(mean, mean)
    return (omega + omega.T) / 2


def omega_centered(d, s, residuals):
    residuals = np.asarray(residuals, dtype=float)
    if residuals.shape != (d.n,):
        raise DimensionError('Residual vector length must equal n.')
    Z_S = candidate_instruments(d, s)
    return _centered(residuals[:, None] * Z_S)


def omega_assembled(d):
    """
    Full (p+q) moment covariance: centered estimator with full-set residuals,
    upper-left block replaced by the uncentered estimator at the valid fit.
    """
    valid_resid = fit_tsls(d.y, d.X, d.Z1).residuals
    uZ1 = valid_resid[:, None] * d.Z1
    omega_11 = uZ1.T @ uZ1 / d.n
    if d.q == 0:
        return (omega_11 + omega_11.T) / 2

    full_resid = fit_tsls(d.y, d.X, d.Z).residuals
    omega = _centered(full_resid[:, None] * d.Z)
    omega[:d.p, :d.p] = omega_11
    return (omega + omega.T) / 2


def omega_homoskedastic(d, sig):
    """sigma_eps^2 Z'Z/n, the covariance behind the closed-form OLS-vs-TSLS criteria."""
    omega = sig.sigma_eps_sq * (d.Z.T @ d.Z) / d.n
    return (omega + omega.T) / 2
