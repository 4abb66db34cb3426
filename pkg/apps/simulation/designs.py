"""
Seeded data-generating processes for the two simulation studies.

OLS vs TSLS:  y = 0.5 x + e,  x = pi (z1 + z2 + z3) + v
Choosing IVs: y = 0.5 x + e,  x = (z1 + z2 + z3)/3 + gamma w + v

The z's are iid N(0, 1/3) and independent of the errors in both designs.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from apps.common.exceptions import DesignError
from apps.moments.models import Dataset

TRUE_BETA = 0.5
Z_VARIANCE = 1.0 / 3.0


def _block_cov(error_cov):
    k = error_cov.shape[0]
    cov = np.zeros((k + 3, k + 3))
    cov[:k, :k] = error_cov
    cov[k:, k:] = Z_VARIANCE * np.eye(3)
    return cov


def _cholesky(cov, label):
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise DesignError(f'{label}: covariance matrix is not positive definite.') from exc


@dataclass(frozen=True)
class OlsTslsDesign:
    pi: float
    rho: float
    n: int

    problem = 'ols-tsls'

    def __post_init__(self):
        if not self.pi ** 2 < 1:
            raise DesignError(f'pi^2 must be below one, got pi={self.pi}.')
        if self.n <= 4:
            raise DesignError('Need at least five observations.')
        object.__setattr__(self, '_chol', _cholesky(self.covariance, repr(self)))

    @property
    def covariance(self):
        """Joint covariance of (e, v, z1, z2, z3)."""
        errors = np.array([[1.0, self.rho], [self.rho, 1.0 - self.pi ** 2]])
        return _block_cov(errors)

    def params(self):
        return {'N': self.n, 'pi': self.pi, 'rho': self.rho}


@dataclass(frozen=True)
class ChooseIvDesign:
    gamma: float
    rho: float
    n: int

    problem = 'choose-iv'

    def __post_init__(self):
        if not 8.0 / 9.0 - self.gamma ** 2 > 0:
            raise DesignError(f'8/9 - gamma^2 must be positive, got gamma={self.gamma}.')
        if self.n <= 5:
            raise DesignError('Need at least six observations.')
        object.__setattr__(self, '_chol', _cholesky(self.covariance, repr(self)))

    @property
    def covariance(self):
        """Joint covariance of (e, v, w, z1, z2, z3)."""
        g, r = self.gamma, self.rho
        errors = np.array([
            [1.0, 0.5 - g * r, r],
            [0.5 - g * r, 8.0 / 9.0 - g ** 2, 0.0],
            [r, 0.0, 1.0],
        ])
        return _block_cov(errors)

    def params(self):
        return {'N': self.n, 'gamma': self.gamma, 'rho': self.rho}


def _draw(design, rng):
    return rng.standard_normal((design.n, design._chol.shape[0])) @ design._chol.T


def gen_ols_tsls(design, rng):
    """The x-moment is stored as the single suspect column, so Z2 = x."""
    draws = _draw(design, rng)
    eps, v, z = draws[:, 0], draws[:, 1], draws[:, 2:]
    x = design.pi * z.sum(axis=1) + v
    y = TRUE_BETA * x + eps
    return Dataset(
        y=y, X=x, Z1=z, Z2=x,
        regressor_names=('x',), baseline_names=('z1', 'z2', 'z3'), suspect_names=('x',),
    )


def gen_choose_iv(design, rng):
    draws = _draw(design, rng)
    eps, v, w, z = draws[:, 0], draws[:, 1], draws[:, 2], draws[:, 3:]
    x = z.sum(axis=1) / 3.0 + design.gamma * w + v
    y = TRUE_BETA * x + eps
    return Dataset(
        y=y, X=x, Z1=z, Z2=w,
        regressor_names=('x',), baseline_names=('z1', 'z2', 'z3'), suspect_names=('w',),
    )


GENERATORS = {
    OlsTslsDesign.problem: gen_ols_tsls,
    ChooseIvDesign.problem: gen_choose_iv,
}


def generate(design, rng):
    return GENERATORS[design.problem](design, rng)


def replication_rng(master_seed, cell, rep, stream=0):
    """Independent substream per (cell, replication, stream) under one master seed."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(cell, rep, stream)))
