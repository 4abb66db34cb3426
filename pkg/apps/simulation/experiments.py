"""
RMSE, selection-frequency and coverage experiments over design grids.

Every replication draws its data from its own substream keyed by
(master seed, cell, rep), so adding or dropping methods never changes the
data. Cells run in a process pool when ``threads > 1``; results are always
reduced in (cell, rep) order, so tables are identical for any thread count.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd

from apps.common.exceptions import ConfigError, FmscError
from apps.inference.draws import mvn_draws
from apps.inference.intervals import CiMethod, naive_ci, one_step_ci, two_step_ci
from apps.inference.limits import WeightRule, choose_iv_context, ols_tsls_context
from apps.moments.estimators import fit_candidate, fit_ols, fit_tsls
from apps.moments.models import candidate_lattice
from apps.selection.averaging import avg_ols_tsls
from apps.selection.criteria import (
    CriterionFlavor, ccic_select, combined_select, dhw_critical_value, dhw_test,
    downward_j_select, gmm_msc_select,
)
from apps.selection.fmsc import fmsc_choose_iv, fmsc_ols_vs_tsls
from .designs import TRUE_BETA, ChooseIvDesign, OlsTslsDesign, generate, replication_rng

logger = logging.getLogger(__name__)

FAILURE_FLAG_SHARE = 0.01
RHO_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
PI_GRID = (0.2, 0.4, 0.6)
GAMMA_GRID = (0.2, 0.4, 0.6)
N_GRID = (50, 100, 500)


# ── Per-replication cache ────────────────────────────────────────────────

class Replication:
    """One simulated dataset plus lazily computed fits shared by methods."""

    def __init__(self, d):
        self.d = d

    @cached_property
    def lattice(self):
        return candidate_lattice(self.d.p, self.d.q)

    @cached_property
    def valid(self):
        return self.lattice[0]

    @cached_property
    def full(self):
        return self.lattice[-1]

    @cached_property
    def estimates(self):
        return {s.id: float(fit_candidate(self.d, s).beta[0]) for s in self.lattice}

    @cached_property
    def ols(self):
        return float(fit_ols(self.d.y, self.d.X).beta[0])

    @cached_property
    def tsls(self):
        return float(fit_tsls(self.d.y, self.d.X, self.d.Z1).beta[0])

    def pick(self, moment_set):
        return self.estimates[moment_set.id], moment_set.id == self.full.id


# ── Method registry ──────────────────────────────────────────────────────
# Each method returns (estimate, chose_suspect); chose_suspect is None for
# estimators that do not select.

def _dhw(alpha):
    def method(rep):
        keep_ols = dhw_test(rep.d, dhw_critical_value(alpha)).select_ols
        return (rep.ols if keep_ols else rep.tsls), keep_ols
    return method


def _fmsc_ols_tsls(rep):
    report = fmsc_ols_vs_tsls(rep.d)
    return report.selected_estimate, report.selected == 'ols'


def _fmsc_choose(positive_part):
    def method(rep):
        report = fmsc_choose_iv(rep.d, rep.lattice)
        chosen = report.selected_pp if positive_part else report.selected
        return report.row(chosen).estimate, chosen == rep.full.id
    return method


def _gmm(flavor):
    return lambda rep: rep.pick(gmm_msc_select(rep.d, rep.lattice, flavor)[0])


def _downward(alpha):
    return lambda rep: rep.pick(downward_j_select(rep.d, rep.lattice, alpha))


def _ccic(flavor):
    return lambda rep: rep.pick(ccic_select(rep.d, rep.lattice, flavor)[0])


def _combined(flavor):
    return lambda rep: rep.pick(combined_select(rep.d, rep.lattice, flavor))


METHODS = {
    'ols-tsls': {
        'OLS': lambda rep: (rep.ols, None),
        'TSLS': lambda rep: (rep.tsls, None),
        'FMSC': _fmsc_ols_tsls,
        'DHW90': _dhw(0.10),
        'DHW95': _dhw(0.05),
        'AVG': lambda rep: (avg_ols_tsls(rep.d).beta_avg, None),
    },
    'choose-iv': {
        'VALID': lambda rep: (rep.estimates[rep.valid.id], None),
        'FULL': lambda rep: (rep.estimates[rep.full.id], None),
        'FMSC': _fmsc_choose(False),
        'FMSC_PP': _fmsc_choose(True),
        'GMM_BIC': _gmm(CriterionFlavor.BIC),
        'GMM_HQ': _gmm(CriterionFlavor.HQ),
        'GMM_AIC': _gmm(CriterionFlavor.AIC),
        'J90': _downward(0.10),
        'J95': _downward(0.05),
        'CCIC_BIC': _ccic(CriterionFlavor.BIC),
        'COMBINED_BIC': _combined(CriterionFlavor.BIC),
        'COMBINED_HQ': _combined(CriterionFlavor.HQ),
        'COMBINED_AIC': _combined(CriterionFlavor.AIC),
    },
}


# ── Grids ────────────────────────────────────────────────────────────────

def default_grid(problem, gammas=GAMMA_GRID):
    if problem == 'ols-tsls':
        return [OlsTslsDesign(pi=pi, rho=rho, n=n) for n in N_GRID for pi in PI_GRID for rho in RHO_GRID]
    if problem == 'choose-iv':
        return [ChooseIvDesign(gamma=g, rho=rho, n=n) for n in N_GRID for g in gammas for rho in RHO_GRID]
    raise ConfigError(f'Unknown problem: {problem}')


def parse_cell(problem, text):
    """
    Example:
        parse_cell('choose-iv', 'N=50,gamma=0.6,rho=0.5')
    """
    try:
        values = dict(part.split('=', 1) for part in text.split(','))
        values = {key.strip(): value.strip() for key, value in values.items()}
        n = int(values.pop('N'))
        rho = float(values.pop('rho'))
        if problem == 'ols-tsls':
            design = OlsTslsDesign(pi=float(values.pop('pi')), rho=rho, n=n)
        elif problem == 'choose-iv':
            design = ChooseIvDesign(gamma=float(values.pop('gamma')), rho=rho, n=n)
        else:
            raise ConfigError(f'Unknown problem: {problem}')
    except (KeyError, ValueError) as exc:
        raise ConfigError(f'Cannot parse cell {text!r}: {exc}') from exc
    if values:
        raise ConfigError(f'Unexpected keys in cell {text!r}: {sorted(values)}')
    return design


# ── Cell runners ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CellTask:
    index: int
    design: object
    methods: tuple
    reps: int
    seed: int
    alpha: float = 0.05
    delta: float = 0.05
    draws_J: int = 1000
    grid_points: int = 100


def _flagged(failures, reps):
    return failures > FAILURE_FLAG_SHARE * reps


def run_rmse_cell(task):
    problem = task.design.problem
    registry = METHODS[problem]
    errors = {name: [] for name in task.methods}
    picks = {name: [] for name in task.methods}
    failures = 0
    for rep_index in range(task.reps):
        d = generate(task.design, replication_rng(task.seed, task.index, rep_index))
        rep = Replication(d)
        try:
            outcomes = [registry[name](rep) for name in task.methods]
        except (FmscError, np.linalg.LinAlgError) as exc:
            failures += 1
            logger.debug('Cell %d rep %d failed: %s', task.index, rep_index, exc)
            continue
        for name, (estimate, chose) in zip(task.methods, outcomes):
            errors[name].append(estimate - TRUE_BETA)
            if chose is not None:
                picks[name].append(chose)

    if failures:
        logger.warning('Cell %d %s: %d of %d replications failed', task.index, task.design.params(), failures, task.reps)
    done = task.reps - failures
    rows = []
    for name in task.methods:
        err = np.asarray(errors[name])
        metrics = [('rmse', float(np.sqrt(np.mean(err ** 2))) if done else float('nan'))]
        if picks[name]:
            metrics.append(('select_suspect', float(np.mean(picks[name]))))
        for metric, value in metrics:
            rows.append({
                **task.design.params(), 'method': name, 'metric': metric, 'value': value,
                'reps': done, 'failures': failures, 'flagged': _flagged(failures, task.reps),
            })
    return rows


def _coverage_intervals(task, d, rep_index):
    """Interval list [(method, interval, CiResult)] for one replication."""
    ci_seed = np.random.SeedSequence(task.seed, spawn_key=(task.index, rep_index, 1))
    if task.design.problem == 'ols-tsls':
        ctx = ols_tsls_context(d, WeightRule.FMSC)
        report = fmsc_ols_vs_tsls(d, ctx.sigma)
        benchmark = ('TSLS', fit_tsls(d.y, d.X, d.Z1))
    else:
        lattice = candidate_lattice(d.p, d.q)
        ctx = choose_iv_context(d, lattice, 0, WeightRule.FMSC)
        report = fmsc_choose_iv(d, lattice)
        benchmark = ('VALID', fit_tsls(d.y, d.X, d.Z1))
    selected = next(s for s in ctx.candidates if s.id == report.selected)
    M = mvn_draws(ctx.base.omega, task.draws_J, ci_seed)
    # textbook and naive intervals share the two-step nominal level 1 - (alpha + delta)
    level = task.alpha + task.delta
    intervals = [
        (benchmark[0], 'TEXTBOOK', naive_ci(benchmark[1], 0, level)),
        ('FMSC', CiMethod.NAIVE, naive_ci(fit_candidate(d, selected), 0, level)),
        ('FMSC', CiMethod.ONE_STEP, one_step_ci(ctx, task.alpha, draws=M)),
        ('FMSC', CiMethod.TWO_STEP, two_step_ci(ctx, task.alpha, task.delta, draws=M, grid_points=task.grid_points)),
    ]
    if task.design.problem == 'ols-tsls':
        avg_ctx = ols_tsls_context(d, WeightRule.MIN_AMSE)
        intervals.append(('AVG', CiMethod.TWO_STEP, two_step_ci(
            avg_ctx, task.alpha, task.delta, draws=M, grid_points=task.grid_points,
        )))
    return intervals


def run_coverage_cell(task):
    covered = {}
    widths = {}
    failures = 0
    for rep_index in range(task.reps):
        d = generate(task.design, replication_rng(task.seed, task.index, rep_index))
        try:
            intervals = _coverage_intervals(task, d, rep_index)
        except (FmscError, np.linalg.LinAlgError) as exc:
            failures += 1
            logger.debug('Cell %d rep %d failed: %s', task.index, rep_index, exc)
            continue
        for method, kind, ci in intervals:
            key = (method, str(kind))
            covered.setdefault(key, []).append(ci.covers(TRUE_BETA))
            widths.setdefault(key, []).append(ci.width)

    if failures:
        logger.warning('Cell %d %s: %d of %d replications failed', task.index, task.design.params(), failures, task.reps)
    done = task.reps - failures
    bench_key = next((key for key in widths if key[1] == 'TEXTBOOK'), None)
    bench_width = float(np.median(widths[bench_key])) if bench_key else float('nan')
    rows = []
    for key in covered:
        median_width = float(np.median(widths[key]))
        metrics = (
            ('coverage', 100.0 * float(np.mean(covered[key]))),
            ('median_width', median_width),
            ('relative_width', 100.0 * (median_width / bench_width - 1.0)),
        )
        for metric, value in metrics:
            rows.append({
                **task.design.params(), 'method': key[0], 'interval': key[1], 'metric': metric,
                'value': value, 'reps': done, 'failures': failures, 'flagged': _flagged(failures, task.reps),
            })
    return rows


def _run_cells(runner, tasks, threads):
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(runner, tasks))
    else:
        chunks = [runner(task) for task in tasks]
    return [row for chunk in chunks for row in chunk]


def rmse_experiment(grid, methods, reps, seed, threads=1):
    """
    Long-format table (design params, method, metric, value, reps, failures, flagged).

    Example:
        table = rmse_experiment(default_grid('ols-tsls'), ['OLS', 'TSLS', 'FMSC'], reps=200, seed=7)
    """
    grid = list(grid)
    problems = {design.problem for design in grid}
    if len(problems) != 1:
        raise ConfigError('A grid must contain designs of a single problem.')
    unknown = set(methods) - set(METHODS[problems.pop()])
    if unknown:
        raise ConfigError(f'Unknown methods for this design: {sorted(unknown)}')
    tasks = [CellTask(index=i, design=design, methods=tuple(methods), reps=reps, seed=seed)
             for i, design in enumerate(grid)]
    return pd.DataFrame(_run_cells(run_rmse_cell, tasks, threads))


def coverage_experiment(grid, reps, alpha, delta, draws_J, seed, threads=1, grid_points=100):
    if not (0 < alpha < 1 and 0 < delta < 1 and alpha + delta < 1):
        raise ConfigError('Need 0 < alpha, delta and alpha + delta < 1.')
    tasks = [CellTask(index=i, design=design, methods=(), reps=reps, seed=seed, alpha=alpha,
                      delta=delta, draws_J=draws_J, grid_points=grid_points)
             for i, design in enumerate(grid)]
    return pd.DataFrame(_run_cells(run_coverage_cell, tasks, threads))


# ── Experiment catalogue ─────────────────────────────────────────────────

@dataclass(frozen=True)
class Experiment:
    kind: str
    problem: str
    methods: tuple = ()
    gammas: tuple = GAMMA_GRID
    full_scale_reps: int = 10000

    def grid(self):
        return default_grid(self.problem, self.gammas)


EXPERIMENTS = {
    'rmse-ols-tsls': Experiment(
        kind='rmse', problem='ols-tsls', methods=('OLS', 'TSLS', 'FMSC', 'DHW90', 'DHW95', 'AVG'),
    ),
    'rmse-choose-iv': Experiment(
        kind='rmse', problem='choose-iv',
        methods=('VALID', 'FULL', 'FMSC', 'FMSC_PP', 'GMM_BIC', 'GMM_HQ', 'GMM_AIC', 'J90', 'J95'),
        full_scale_reps=20000,
    ),
    'coverage-ols-tsls': Experiment(kind='coverage', problem='ols-tsls'),
    'coverage-choose-iv': Experiment(kind='coverage', problem='choose-iv'),
    'criteria-compare': Experiment(
        kind='rmse', problem='choose-iv',
        methods=('VALID', 'FULL', 'FMSC', 'GMM_BIC', 'CCIC_BIC', 'COMBINED_BIC', 'COMBINED_HQ', 'COMBINED_AIC', 'J90'),
        gammas=(0.0,) + GAMMA_GRID, full_scale_reps=20000,
    ),
}


def run_experiment(name, reps, seed, cells=None, alpha=0.05, delta=0.05, draws_J=1000,
                   threads=1, grid_points=100):
    """Run a catalogued experiment on its default grid (or on ``cells``)."""
    if name not in EXPERIMENTS:
        raise ConfigError(f'Unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}.')
    experiment = EXPERIMENTS[name]
    grid = [parse_cell(experiment.problem, cell) for cell in cells] if cells else experiment.grid()
    logger.info('Running %s on %d cells x %d reps (seed %s)', name, len(grid), reps, seed)
    if experiment.kind == 'rmse':
        return rmse_experiment(grid, experiment.methods, reps, seed, threads)
    return coverage_experiment(grid, reps, alpha, delta, draws_J, seed, threads, grid_points)
