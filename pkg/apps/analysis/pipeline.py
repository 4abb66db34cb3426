"""
The CSV analysis workflow: per-candidate estimates with textbook intervals,
FMSC and positive-part FMSC tables per target, GMM criteria, and Naive /
1-Step / 2-Step intervals for the FMSC-selected estimate.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from apps.common.conf import fmsc_setting
from apps.common.reports import error_report, render_json, success_report
from apps.inference.draws import mvn_draws
from apps.inference.intervals import naive_ci, one_step_ci, two_step_ci
from apps.inference.limits import WeightRule, choose_iv_context
from apps.moments.estimators import fit_candidate
from apps.moments.models import CandidateMode, candidate_lattice
from apps.selection.criteria import CriterionFlavor, ccic_select, gmm_msc_select
from apps.selection.fmsc import fmsc_choose_iv
from .loaders import config_to_dict, load_dataset
from .serializers import (
    CriterionRowSerializer, EstimateRowSerializer, FmscRowSerializer, IntervalRowSerializer,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimateRow:
    target: str
    candidate: str
    estimate: float
    se: float
    lower: float
    upper: float


@dataclass(frozen=True)
class FmscRow:
    target: str
    candidate: str
    size: int
    estimate: float
    bias_sq: float
    variance: float
    fmsc: float
    fmsc_positive_part: float
    selected: bool
    selected_pp: bool


@dataclass(frozen=True)
class CriterionRow:
    criterion: str
    candidate: str
    j_stat: float
    penalty: float
    value: float
    selected: bool


@dataclass(frozen=True)
class IntervalRow:
    target: str
    candidate: str
    method: str
    lower: float
    upper: float
    alpha: float
    delta: float
    draws_J: int
    region_points: int


@dataclass(frozen=True)
class AnalysisReport:
    estimates: list
    fmsc: list
    criteria: list
    intervals: list
    config: dict


def _rows(serializer_class, rows):
    return [dict(row) for row in serializer_class(rows, many=True).data]


def _criteria_rows(d, lattice):
    rows = []
    for flavor in CriterionFlavor:
        chosen, values = gmm_msc_select(d, lattice, flavor)
        rows += [CriterionRow(f'GMM-{flavor.value}', v.candidate, v.j_stat, v.penalty, v.value,
                              v.candidate == chosen.id) for v in values]
    if d.r == 1:
        chosen, values = ccic_select(d, lattice, CriterionFlavor.BIC)
        rows += [CriterionRow('CCIC-BIC', v.candidate, v.j_stat, v.penalty, v.value,
                              v.candidate == chosen.id) for v in values]
    return rows


def _target_tables(d, lattice, fits, settings, t_index, target, grid_points, search_budget):
    """Estimate, FMSC and interval rows for one target coefficient."""
    coef = d.regressor_names.index(target)
    estimates, fmsc_rows, intervals = [], [], []
    for s in lattice:
        ci = naive_ci(fits[s.id], coef, settings.alpha)
        estimates.append(EstimateRow(target, s.id, float(fits[s.id].beta[coef]),
                                     float(fits[s.id].se[coef]), ci.lower, ci.upper))

    report = fmsc_choose_iv(d, lattice, coef)
    for row in report.rows:
        fmsc_rows.append(FmscRow(
            target, row.candidate, row.size, row.estimate, row.bias_sq, row.variance,
            row.fmsc, row.fmsc_positive_part,
            row.candidate == report.selected, row.candidate == report.selected_pp,
        ))

    ctx = choose_iv_context(d, lattice, coef, WeightRule.FMSC)
    M = mvn_draws(ctx.base.omega, settings.draws_J, np.random.SeedSequence(settings.seed, spawn_key=(t_index,)))
    for ci in (
        naive_ci(fits[report.selected], coef, settings.alpha),
        one_step_ci(ctx, settings.alpha, draws=M),
        two_step_ci(
            ctx, settings.alpha, settings.delta, draws=M, seed=settings.seed,
            grid_points=grid_points, search_budget=search_budget,
        ),
    ):
        intervals.append(IntervalRow(
            target, report.selected, str(ci.method), ci.lower, ci.upper, ci.alpha,
            ci.delta, ci.draws_J, ci.region_points,
        ))
    logger.info('Target %s: FMSC selects %s (positive part: %s)', target, report.selected, report.selected_pp)
    return estimates, fmsc_rows, intervals


def _run_targets(jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_target_tables, *zip(*jobs)))
    return [_target_tables(*job) for job in jobs]


def run_analysis(settings, threads=1):
    """
    Targets run in a process pool when ``threads > 1``; rows keep target order.

    Example:
        report = run_analysis(load_config('analysis.yaml'), threads=4)
        write_report(report, settings)
    """
    d, blocks = load_dataset(settings)
    if settings.candidate_mode == CandidateMode.BLOCKS:
        lattice = candidate_lattice(d.p, d.q, CandidateMode.BLOCKS, blocks)
    else:
        lattice = candidate_lattice(d.p, d.q, CandidateMode.ALL_SUBSETS, suspect_names=d.suspect_names)
    logger.info('Evaluating %d candidate instrument sets', len(lattice))

    fits = {s.id: fit_candidate(d, s) for s in lattice}
    grid_points = fmsc_setting('TAU_GRID_POINTS')
    search_budget = fmsc_setting('SEARCH_BUDGET')
    jobs = [(d, lattice, fits, settings, t_index, target, grid_points, search_budget)
            for t_index, target in enumerate(settings.targets)]
    estimates, fmsc_rows, intervals = [], [], []
    for target_estimates, target_fmsc, target_intervals in _run_targets(jobs, threads):
        estimates += target_estimates
        fmsc_rows += target_fmsc
        intervals += target_intervals

    return AnalysisReport(
        estimates=_rows(EstimateRowSerializer, estimates),
        fmsc=_rows(FmscRowSerializer, fmsc_rows),
        criteria=_rows(CriterionRowSerializer, _criteria_rows(d, lattice)),
        intervals=_rows(IntervalRowSerializer, intervals),
        config=config_to_dict(settings),
    )


def write_report(report, settings):
    """Write CSV tables or a single JSON report into ``settings.output``; returns written paths."""
    out_dir = Path(settings.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = {
        'estimates': report.estimates,
        'fmsc': report.fmsc,
        'criteria': report.criteria,
        'intervals': report.intervals,
    }
    if settings.format == 'json':
        path = out_dir / 'report.json'
        payload = success_report(data=tables, message='FMSC analysis', config=report.config)
        path.write_text(render_json(payload), encoding='utf-8')
        return [path]
    paths = []
    for name, rows in tables.items():
        path = out_dir / f'{name}.csv'
        pd.DataFrame(rows).to_csv(path, index=False, lineterminator='\n')
        paths.append(path)
    return paths


def write_error(exc, settings):
    """Leave an error envelope in ``report.json`` so downstream tooling sees why a run failed."""
    out_dir = Path(settings.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / 'report.json'
    payload = error_report(message='FMSC analysis failed', errors=exc.as_dict(), config=config_to_dict(settings))
    path.write_text(render_json(payload), encoding='utf-8')
    return path
