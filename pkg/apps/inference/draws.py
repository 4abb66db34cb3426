"""
Seeded multivariate normal draws with Cholesky jitter escalation.
"""
import logging

import numpy as np
from scipy import linalg

from apps.common.exceptions import DimensionError, NotPsdError

logger = logging.getLogger(__name__)

JITTER_START = 1e-14
JITTER_CEILING = 1e-8


def robust_cholesky(omega):
    """
    Lower Cholesky factor, adding trace-scaled jitter (up to 1e-8 * trace)
    when the matrix is only positive semi-definite.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise DimensionError('Covariance matrix must be square.')
    if not np.allclose(omega, omega.T, rtol=1e-10, atol=1e-14):
        raise NotPsdError('Covariance matrix is not symmetric.')
    k = omega.shape[0]
    if not np.any(omega):
        return np.zeros((k, k))
    trace = float(np.trace(omega))
    jitter = 0.0
    while True:
        try:
            return linalg.cholesky(omega + jitter * np.eye(k), lower=True)
        except linalg.LinAlgError:
            jitter = JITTER_START * trace if jitter == 0.0 else jitter * 10
            if trace <= 0 or jitter > JITTER_CEILING * trace * (1 + 1e-12):
                raise NotPsdError('Cholesky failed even with maximal jitter.')
            logger.warning('Cholesky failed; retrying with jitter %.2e', jitter)


def mvn_draws(omega, draws_J, seed):
    """
    ``draws_J`` rows of N(0, omega); ``seed`` may be an int, a SeedSequence
    or a Generator.

    Example:
        M = mvn_draws(np.eye(2), 1000, seed=7)
    """
    chol = robust_cholesky(omega)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((int(draws_J), chol.shape[0])) @ chol.T
