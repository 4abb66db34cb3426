"""
Confidence region for tau and the points the interval search visits.
"""
import math

import numpy as np
from scipy import linalg
from scipy.special import ndtri
from scipy.stats import qmc

from apps.common.exceptions import DimensionError, RankError
from .quantiles import chi_sq_quantile

DEFAULT_GRID_POINTS = 100
DEFAULT_QUASI_POINTS = 64


def region_distance(tau_hat, tau_cov, tau_star):
    """(tau* - tau-hat)' cov^-1 (tau* - tau-hat)."""
    diff = np.atleast_1d(np.asarray(tau_star, dtype=float) - np.asarray(tau_hat, dtype=float))
    return float(diff @ linalg.solve(np.atleast_2d(tau_cov), diff, assume_a='pos'))


def _checked_cov(tau_hat, tau_cov):
    tau_hat = np.atleast_1d(np.asarray(tau_hat, dtype=float))
    tau_cov = np.atleast_2d(np.asarray(tau_cov, dtype=float))
    q = tau_hat.shape[0]
    if tau_cov.shape != (q, q):
        raise DimensionError('tau_cov must be q x q.')
    eigvals = np.linalg.eigvalsh(tau_cov)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], np.finfo(float).tiny):
        raise RankError('Covariance of tau-hat is singular.')
    return tau_hat, tau_cov


def tau_region(tau_hat, tau_cov, delta, budget=DEFAULT_QUASI_POINTS, points=DEFAULT_GRID_POINTS, seed=0):
    """
    Points inside {tau*: distance <= chi2_q(1 - delta)}.

    Scalar tau gets ``points`` equally spaced values across the interval.
    Vector tau gets tau-hat, both ends of every ellipsoid axis and ``budget``
    scrambled Sobol points mapped into the ellipsoid.
    """
    tau_hat, tau_cov = _checked_cov(tau_hat, tau_cov)
    q = tau_hat.shape[0]
    radius_sq = chi_sq_quantile(q, 1.0 - delta)

    if q == 1:
        half = math.sqrt(radius_sq * tau_cov[0, 0])
        return np.linspace(tau_hat[0] - half, tau_hat[0] + half, points).reshape(-1, 1)

    eigvals, eigvecs = np.linalg.eigh(tau_cov)
    axes = (eigvecs * np.sqrt(radius_sq * eigvals)).T
    candidates = [tau_hat[None, :], tau_hat + axes, tau_hat - axes]

    if budget > 0:
        sobol = qmc.Sobol(d=q + 1, scramble=True, seed=seed)
        u = sobol.random_base2(m=max(1, math.ceil(math.log2(budget))))[:budget]
        u = np.clip(u, 1e-12, 1.0 - 1e-12)
        directions = ndtri(u[:, :q])
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = u[:, q] ** (1.0 / q)
        chol = linalg.cholesky(tau_cov, lower=True)
        inside = (directions * radii[:, None] * math.sqrt(radius_sq)) @ chol.T
        candidates.append(tau_hat + inside)
    return np.vstack(candidates)
