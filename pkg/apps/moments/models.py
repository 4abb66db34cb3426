"""
Core containers shared by every other app: the dataset, candidate moment
sets, selection matrices and the matrix bundle the FMSC formula consumes.

Nothing here is persisted; the containers are frozen dataclasses holding
read-only numpy arrays, so they can be shared freely across workers.
"""
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
from django.db import models

from apps.common.exceptions import ConfigError, DimensionError, RankError

RANK_TOL = 1e-10


class MomentKind(models.TextChoices):
    OLS_CANDIDATE = 'OLS_CANDIDATE', 'OLS candidate (x-moment)'
    TSLS_CANDIDATE = 'TSLS_CANDIDATE', 'TSLS candidate (baseline moments)'
    IV_SUBSET = 'IV_SUBSET', 'Baseline plus a subset of suspect instruments'


class CandidateMode(models.TextChoices):
    ALL_SUBSETS = 'ALL_SUBSETS', 'Every subset of suspect columns'
    BLOCKS = 'BLOCKS', 'Every union of named suspect blocks'


class ResidualSource(models.TextChoices):
    TSLS = 'TSLS', 'TSLS residuals'
    OLS = 'OLS', 'OLS residuals'


def _readonly(values, ndim, name):
    arr = np.array(values, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise DimensionError(f'{name} must be {ndim}-dimensional, got shape {arr.shape}.')
    arr.setflags(write=False)
    return arr


def has_full_column_rank(matrix, tol=RANK_TOL):
    """Relative singular-value test; an empty matrix counts as full rank."""
    if matrix.shape[1] == 0:
        return True
    if matrix.shape[0] < matrix.shape[1]:
        return False
    singular = np.linalg.svd(matrix, compute_uv=False)
    return singular.min() > tol * singular.max()


@dataclass(frozen=True)
class Dataset:
    """
    Linear IV data: ``y = X beta + e`` with baseline instruments ``Z1``
    (assumed valid) and suspect instruments ``Z2``.

    Example:
        d = Dataset(y=y, X=x, Z1=z, Z2=w)
        d.n, d.p, d.q, d.r
    """
    y: np.ndarray
    X: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    regressor_names: tuple = ()
    baseline_names: tuple = ()
    suspect_names: tuple = ()

    def __post_init__(self):
        y = _readonly(self.y, 1, 'y')
        X = _readonly(self.X, 2, 'X')
        Z1 = _readonly(self.Z1, 2, 'Z1')
        Z2 = np.array(self.Z2, dtype=float)
        if Z2.ndim == 1:
            Z2 = Z2.reshape(-1, 1) if Z2.size else np.empty((y.shape[0], 0))
        Z2 = _readonly(Z2, 2, 'Z2')
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'Z1', Z1)
        object.__setattr__(self, 'Z2', Z2)
        object.__setattr__(self, 'regressor_names', self._names(self.regressor_names, X, 'x'))
        object.__setattr__(self, 'baseline_names', self._names(self.baseline_names, Z1, 'z1_'))
        object.__setattr__(self, 'suspect_names', self._names(self.suspect_names, Z2, 'z2_'))
        self._validate()

    @staticmethod
    def _names(names, matrix, prefix):
        names = tuple(names)
        if not names:
            if prefix == 'x' and matrix.shape[1] == 1:
                return ('x',)
            return tuple(f'{prefix}{j}' for j in range(matrix.shape[1]))
        if len(names) != matrix.shape[1]:
            raise DimensionError(f'Expected {matrix.shape[1]} column names, got {len(names)}.')
        return names

    def _validate(self):
        n = self.y.shape[0]
        for name in ('X', 'Z1', 'Z2'):
            if getattr(self, name).shape[0] != n:
                raise DimensionError(f'{name} has {getattr(self, name).shape[0]} rows, y has {n}.')
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))
                and np.all(np.isfinite(self.Z1)) and np.all(np.isfinite(self.Z2))):
            raise DimensionError('All columns must be finite.')
        if self.r < 1 or self.p < self.r:
            raise DimensionError(f'Need p >= r >= 1 (p={self.p}, r={self.r}).')
        if n <= self.p + self.q:
            raise DimensionError(f'Need n > p + q (n={n}, p+q={self.p + self.q}).')
        if not has_full_column_rank(self.X):
            raise RankError('Regressor matrix X is rank deficient.')
        if not has_full_column_rank(self.Z):
            raise RankError('Instrument matrix [Z1 | Z2] is rank deficient.')

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.Z1.shape[1]

    @property
    def q(self):
        return self.Z2.shape[1]

    @property
    def r(self):
        return self.X.shape[1]

    @cached_property
    def Z(self):
        Z = np.hstack([self.Z1, self.Z2])
        Z.setflags(write=False)
        return Z

    @property
    def x(self):
        if self.r != 1:
            raise DimensionError('Scalar regressor required.')
        return self.X[:, 0]


@dataclass(frozen=True)
class MomentSet:
    id: str
    included: tuple
    kind: str = MomentKind.IV_SUBSET

    def __post_init__(self):
        included = tuple(int(i) for i in self.included)
        object.__setattr__(self, 'included', included)
        if not included:
            raise ConfigError(f'Moment set {self.id!r} is empty.')
        if included[0] < 0 or any(b <= a for a, b in zip(included, included[1:])):
            raise ConfigError(f'Moment set {self.id!r} indices must be strictly increasing and >= 0.')

    @property
    def size(self):
        return len(self.included)

    def validate(self, p, q, r):
        if self.included[-1] >= p + q:
            raise DimensionError(f'Moment set {self.id!r} indexes beyond p+q={p + q}.')
        if self.size < r:
            raise ConfigError(f'Moment set {self.id!r} has {self.size} conditions for {r} parameters.')
        if self.kind == MomentKind.IV_SUBSET and not set(range(p)).issubset(self.included):
            raise ConfigError(f'Moment set {self.id!r} drops baseline conditions.')


@dataclass(frozen=True)
class SelectionMatrix:
    moment_set: str
    included: tuple
    matrix: np.ndarray

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    def select(self, values):
        """Apply Xi_S to a vector (or to the last axis of a draw matrix)."""
        return np.asarray(values)[..., list(self.included)]


def selection_matrix(s, p, q):
    """
    Build Xi_S for a moment set.

    Example:
        selection_matrix(MomentSet('valid', (0, 1)), p=2, q=1).matrix
        # [[1, 0, 0], [0, 1, 0]]
    """
    if s.included[-1] >= p + q:
        raise DimensionError(f'Moment set {s.id!r} indexes beyond p+q={p + q}.')
    matrix = np.zeros((s.size, p + q))
    matrix[np.arange(s.size), list(s.included)] = 1.0
    matrix.setflags(write=False)
    return SelectionMatrix(moment_set=s.id, included=s.included, matrix=matrix)


@dataclass(frozen=True)
class InstrumentBlock:
    name: str
    columns: tuple

    def __post_init__(self):
        object.__setattr__(self, 'columns', tuple(int(c) for c in self.columns))


def candidate_lattice(p, q, mode=CandidateMode.ALL_SUBSETS, blocks=None, suspect_names=None):
    """
    Enumerate candidate moment sets, valid set first and full set last.

    ALL_SUBSETS treats every suspect column as its own block. In BLOCKS mode
    ``blocks`` must partition ``range(q)``.
    """
    if q < 1:
        raise ConfigError('At least one suspect instrument is required.')
    if mode == CandidateMode.ALL_SUBSETS:
        names = list(suspect_names) if suspect_names else [f'z2_{j}' for j in range(q)]
        blocks = [InstrumentBlock(name=names[j], columns=(j,)) for j in range(q)]
    elif mode == CandidateMode.BLOCKS:
        blocks = list(blocks or [])
        _check_partition(blocks, q)
    else:
        raise ConfigError(f'Unknown candidate mode: {mode}')

    baseline = tuple(range(p))
    lattice = []
    for k in range(len(blocks) + 1):
        for combo in combinations(range(len(blocks)), k):
            suspect = sorted(p + c for b in combo for c in blocks[b].columns)
            if k == 0:
                label = 'valid'
            elif k == len(blocks):
                label = 'full'
            else:
                label = '+'.join(blocks[b].name for b in combo)
            lattice.append(MomentSet(id=label, included=baseline + tuple(suspect), kind=MomentKind.IV_SUBSET))
    return lattice


def _check_partition(blocks, q):
    if not blocks:
        raise ConfigError('BLOCKS mode needs at least one block.')
    names = [b.name for b in blocks]
    if len(set(names)) != len(names) or {'valid', 'full'} & set(names):
        raise ConfigError('Block names must be unique and not "valid"/"full".')
    seen = []
    for b in blocks:
        if not b.columns:
            raise ConfigError(f'Block {b.name!r} is empty.')
        seen.extend(b.columns)
    if sorted(seen) != list(range(q)):
        raise ConfigError('Blocks must partition the suspect instrument columns.')


def ols_tsls_candidates(p):
    """The two non-nested candidates: TSLS on the baseline block, OLS on the x-moment."""
    return [
        MomentSet(id='tsls', included=tuple(range(p)), kind=MomentKind.TSLS_CANDIDATE),
        MomentSet(id='ols', included=(p,), kind=MomentKind.OLS_CANDIDATE),
    ]


@dataclass(frozen=True)
class GmmComponents:
    """
    Matrix bundle for one candidate: gradient of the target, K_S, Xi_S,
    Omega, Psi and tau. ``jacobian`` (F_S = -Z_S'X/n) is only needed by the
    limit J statistics used in simulation.
    """
    grad_mu: np.ndarray
    K_S: np.ndarray
    xi_S: SelectionMatrix
    omega: np.ndarray
    psi: np.ndarray
    tau: np.ndarray
    n: int
    jacobian: np.ndarray = None

    def __post_init__(self):
        grad = _readonly(self.grad_mu, 1, 'grad_mu')
        K = _readonly(self.K_S, 2, 'K_S')
        omega = _readonly(self.omega, 2, 'omega')
        tau = _readonly(np.atleast_1d(self.tau), 1, 'tau')
        psi = np.array(self.psi, dtype=float).reshape(tau.shape[0], omega.shape[0])
        psi.setflags(write=False)
        for name, value in (('grad_mu', grad), ('K_S', K), ('omega', omega), ('tau', tau), ('psi', psi)):
            object.__setattr__(self, name, value)
        if self.jacobian is not None:
            object.__setattr__(self, 'jacobian', _readonly(self.jacobian, 2, 'jacobian'))

        k = omega.shape[0]
        q = tau.shape[0]
        if omega.shape != (k, k) or not np.allclose(omega, omega.T, rtol=1e-10, atol=1e-14):
            raise DimensionError('omega must be a symmetric square matrix.')
        if K.shape != (grad.shape[0], self.xi_S.rows) or self.xi_S.cols != k:
            raise DimensionError('K_S, grad_mu and Xi_S are not conformable.')
        if not np.array_equal(psi[:, k - q:], np.eye(q)):
            raise DimensionError('Right block of psi must be the identity.')

    @property
    def p(self):
        return self.omega.shape[0] - self.tau.shape[0]

    @property
    def q(self):
        return self.tau.shape[0]

    @cached_property
    def loading(self):
        """Xi_S' K_S' grad_mu as a (p+q)-vector: the target's weight on each moment."""
        v = np.zeros(self.omega.shape[0])
        v[list(self.xi_S.included)] = self.K_S.T @ self.grad_mu
        return v


@dataclass(frozen=True)
class EstimateResult:
    beta: np.ndarray
    vcov: np.ndarray
    residuals: np.ndarray
    moment_set: str = None

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))
