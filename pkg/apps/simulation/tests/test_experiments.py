import numpy as np
import pandas as pd
from django.test import SimpleTestCase, tag

from apps.common.exceptions import ConfigError
from apps.simulation.designs import ChooseIvDesign, OlsTslsDesign, generate, replication_rng
from apps.simulation.experiments import (
    EXPERIMENTS, RHO_GRID, CellTask, _coverage_intervals, coverage_experiment, default_grid, parse_cell,
    rmse_experiment, run_experiment,
)


def value(table, method, metric, interval=None, **params):
    rows = table[(table['method'] == method) & (table['metric'] == metric)]
    if interval is not None:
        rows = rows[rows['interval'] == interval]
    for key, val in params.items():
        rows = rows[np.isclose(rows[key], val)]
    return float(rows['value'].iloc[0])


class GridTests(SimpleTestCase):
    def test_default_grids(self):
        grid = default_grid('ols-tsls')
        self.assertEqual(len(grid), 54)
        self.assertEqual(grid[0].params(), {'N': 50, 'pi': 0.2, 'rho': 0.0})
        self.assertEqual(len(EXPERIMENTS['criteria-compare'].grid()), 72)

    def test_parse_cell(self):
        design = parse_cell('choose-iv', 'N=50, gamma=0.6, rho=0.5')
        self.assertEqual(design, ChooseIvDesign(gamma=0.6, rho=0.5, n=50))
        with self.assertRaises(ConfigError):
            parse_cell('choose-iv', 'N=50,pi=0.2,rho=0.1')
        with self.assertRaises(ConfigError):
            parse_cell('ols-tsls', 'N=50,pi=0.2,rho=0.1,extra=1')

    def test_unknown_names(self):
        with self.assertRaises(ConfigError):
            run_experiment('rmse-nothing', reps=1, seed=0)
        with self.assertRaises(ConfigError):
            rmse_experiment([OlsTslsDesign(0.2, 0.0, 50)], ['GMM_BIC'], reps=1, seed=0)


class RmseExperimentTests(SimpleTestCase):
    def test_table_layout(self):
        table = rmse_experiment([OlsTslsDesign(0.4, 0.1, 100)], ['OLS', 'TSLS', 'FMSC'], reps=20, seed=3)
        self.assertEqual(
            list(table.columns), ['N', 'pi', 'rho', 'method', 'metric', 'value', 'reps', 'failures', 'flagged'],
        )
        self.assertEqual(list(table['method']), ['OLS', 'TSLS', 'FMSC', 'FMSC'])
        self.assertEqual(list(table['metric']), ['rmse', 'rmse', 'rmse', 'select_suspect'])
        self.assertFalse(table['flagged'].any())

    def test_deterministic_for_a_seed(self):
        grid = [ChooseIvDesign(0.4, 0.2, 100)]
        first = rmse_experiment(grid, ['VALID', 'FMSC'], reps=15, seed=8)
        second = rmse_experiment(grid, ['VALID', 'FMSC'], reps=15, seed=8)
        pd.testing.assert_frame_equal(first, second)

    def test_methods_do_not_change_data(self):
        grid = [ChooseIvDesign(0.4, 0.2, 100), ChooseIvDesign(0.6, 0.0, 50)]
        alone = rmse_experiment(grid, ['FMSC'], reps=15, seed=8)
        together = rmse_experiment(grid, ['VALID', 'GMM_BIC', 'FMSC'], reps=15, seed=8)
        pd.testing.assert_frame_equal(
            alone.reset_index(drop=True),
            together[together['method'] == 'FMSC'].reset_index(drop=True),
        )

    def test_thread_count_does_not_change_results(self):
        grid = [OlsTslsDesign(0.4, 0.0, 50), OlsTslsDesign(0.4, 0.3, 50)]
        serial = rmse_experiment(grid, ['OLS', 'FMSC'], reps=10, seed=2, threads=1)
        pooled = rmse_experiment(grid, ['OLS', 'FMSC'], reps=10, seed=2, threads=2)
        pd.testing.assert_frame_equal(serial, pooled)

    @tag('slow')
    def test_ols_tsls_rmse_pattern(self):
        grid = [OlsTslsDesign(0.4, 0.0, 500), OlsTslsDesign(0.4, 0.5, 500)]
        table = rmse_experiment(grid, ['OLS', 'TSLS', 'FMSC'], reps=500, seed=13)
        # no endogeneity: OLS beats TSLS; strong endogeneity: the reverse
        self.assertLess(value(table, 'OLS', 'rmse', rho=0.0), value(table, 'TSLS', 'rmse', rho=0.0))
        self.assertGreater(value(table, 'OLS', 'rmse', rho=0.5), value(table, 'TSLS', 'rmse', rho=0.5))
        # FMSC tracks the better of the two at both ends
        self.assertLess(value(table, 'FMSC', 'rmse', rho=0.5), 1.1 * value(table, 'TSLS', 'rmse', rho=0.5))
        self.assertLess(value(table, 'FMSC', 'rmse', rho=0.0), value(table, 'TSLS', 'rmse', rho=0.0))

    @tag('slow')
    def test_choose_iv_rmse_pattern(self):
        grid = [ChooseIvDesign(0.4, 0.0, 500), ChooseIvDesign(0.4, 0.5, 500)]
        table = rmse_experiment(grid, ['VALID', 'FULL', 'FMSC'], reps=500, seed=17)
        self.assertLess(value(table, 'FULL', 'rmse', rho=0.0), value(table, 'VALID', 'rmse', rho=0.0))
        self.assertGreater(value(table, 'FULL', 'rmse', rho=0.5), value(table, 'VALID', 'rmse', rho=0.5))
        self.assertLess(value(table, 'FMSC', 'select_suspect', rho=0.5), 0.05)

    @tag('slow')
    def test_combined_rule_keeps_valid_when_w_is_irrelevant(self):
        table = run_experiment('criteria-compare', reps=300, seed=19, cells=['N=500,gamma=0.0,rho=0.1'])
        self.assertLess(value(table, 'COMBINED_BIC', 'select_suspect'), 0.05)

    @tag('slow')
    def test_fmsc_and_average_worst_cases(self):
        grid = [OlsTslsDesign(0.4, rho, 500) for rho in RHO_GRID]
        table = rmse_experiment(grid, ['OLS', 'TSLS', 'FMSC', 'AVG'], reps=1000, seed=29)
        fmsc = [value(table, 'FMSC', 'rmse', rho=rho) for rho in RHO_GRID]
        for rho, fmsc_rmse in zip(RHO_GRID, fmsc):
            worse = max(value(table, 'OLS', 'rmse', rho=rho), value(table, 'TSLS', 'rmse', rho=rho))
            self.assertLessEqual(fmsc_rmse, 1.02 * worse)
        average = [value(table, 'AVG', 'rmse', rho=rho) for rho in RHO_GRID]
        self.assertLessEqual(max(average), 1.02 * max(fmsc))


class CoverageExperimentTests(SimpleTestCase):
    def test_single_cell_layout(self):
        table = coverage_experiment([ChooseIvDesign(0.4, 0.1, 100)], reps=3, alpha=0.05, delta=0.05,
                                    draws_J=100, seed=5, grid_points=20)
        self.assertEqual(
            set(zip(table['method'], table['interval'])),
            {('VALID', 'TEXTBOOK'), ('FMSC', 'NAIVE'), ('FMSC', 'ONE_STEP'), ('FMSC', 'TWO_STEP')},
        )
        self.assertEqual(set(table['metric']), {'coverage', 'median_width', 'relative_width'})
        self.assertAlmostEqual(value(table, 'VALID', 'relative_width'), 0.0)

    def test_ols_tsls_adds_average(self):
        table = coverage_experiment([OlsTslsDesign(0.4, 0.1, 100)], reps=2, alpha=0.05, delta=0.05,
                                    draws_J=100, seed=5, grid_points=20)
        self.assertIn(('AVG', 'TWO_STEP'), set(zip(table['method'], table['interval'])))

    def test_bad_levels(self):
        with self.assertRaises(ConfigError):
            coverage_experiment([OlsTslsDesign(0.4, 0.1, 100)], reps=1, alpha=0.5, delta=0.5,
                                draws_J=10, seed=0)

    @tag('slow')
    def test_two_step_covers_and_naive_does_not(self):
        strong = coverage_experiment([OlsTslsDesign(0.6, 0.2, 500)], reps=300, alpha=0.05, delta=0.05,
                                     draws_J=1000, seed=37)
        self.assertGreaterEqual(value(strong, 'FMSC', 'coverage', interval='TWO_STEP'), 88.5)
        weak = coverage_experiment([OlsTslsDesign(0.2, 0.2, 500)], reps=300, alpha=0.05, delta=0.05,
                                   draws_J=200, seed=41, grid_points=25)
        self.assertLess(value(weak, 'FMSC', 'coverage', interval='NAIVE'), 80.0)

    def test_textbook_and_naive_use_the_two_step_level(self):
        design = ChooseIvDesign(0.2, 0.0, 500)
        task = CellTask(index=0, design=design, methods=(), reps=1, seed=3, alpha=0.05, delta=0.05,
                        draws_J=100, grid_points=10)
        d = generate(design, replication_rng(3, 0, 0))
        levels = {(method, str(kind)): (ci.alpha, ci.delta) for method, kind, ci in _coverage_intervals(task, d, 0)}
        self.assertAlmostEqual(levels[('VALID', 'TEXTBOOK')][0], 0.10)
        self.assertAlmostEqual(levels[('FMSC', 'NAIVE')][0], 0.10)
        self.assertEqual(levels[('FMSC', 'TWO_STEP')], (0.05, 0.05))

    @tag('slow')
    def test_valid_textbook_interval_has_ninety_percent_coverage(self):
        table = coverage_experiment([ChooseIvDesign(0.2, 0.0, 500)], reps=400, alpha=0.05, delta=0.05,
                                    draws_J=200, seed=43, grid_points=25)
        coverage = value(table, 'VALID', 'coverage', interval='TEXTBOOK')
        self.assertGreaterEqual(coverage, 86.0)
        self.assertLessEqual(coverage, 94.0)

    @tag('slow')
    def test_two_step_width_when_the_suspect_instrument_is_dropped(self):
        # w is clearly invalid, so the interval is a 95% band around the valid fit: about 19% wider
        grid = [ChooseIvDesign(0.4, 0.5, 500), ChooseIvDesign(0.6, 0.5, 500)]
        table = coverage_experiment(grid, reps=100, alpha=0.05, delta=0.05, draws_J=1000, seed=47)
        for design in grid:
            width = value(table, 'FMSC', 'relative_width', interval='TWO_STEP', gamma=design.gamma)
            self.assertGreater(width, 10.0)
            self.assertLess(width, 30.0)

    @tag('slow')
    def test_small_sample_worst_cell_keeps_coverage(self):
        table = coverage_experiment([ChooseIvDesign(0.6, 0.5, 50)], reps=300, alpha=0.05, delta=0.05,
                                    draws_J=500, seed=53, grid_points=50)
        self.assertGreaterEqual(value(table, 'FMSC', 'coverage', interval='TWO_STEP'), 78.0)
