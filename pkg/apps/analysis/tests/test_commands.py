import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
import yaml
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.analysis.loaders import load_config, load_dataset
from apps.moments.models import candidate_lattice
from apps.selection.fmsc import fmsc_choose_iv


class AnalyzeCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.csv = self.root / 'fixture.csv'
        self.config = self.root / 'analysis.yaml'
        call_command(
            'fmsc_make_fixture', out=str(self.csv), config_out=str(self.config),
            gamma=0.4, rho=0.0, n=500, seed=5, stdout=StringIO(),
        )

    def tearDown(self):
        self.tmp.cleanup()

    def analyze(self, out, **options):
        call_command('fmsc_analyze', config=str(self.config), out=str(out), draws_J=500,
                     stdout=StringIO(), **options)

    def test_fixture_layout(self):
        frame = pd.read_csv(self.csv)
        self.assertEqual(list(frame.columns), ['y', 'x', 'z1', 'z2', 'z3', 'w'])
        self.assertEqual(len(frame), 500)

    def test_json_report(self):
        out = self.root / 'json'
        self.analyze(out)
        report = json.loads((out / 'report.json').read_text())
        self.assertTrue(report['success'])
        fmsc = report['data']['fmsc']
        self.assertEqual([row['candidate'] for row in fmsc], ['valid', 'full'])
        self.assertEqual(sum(row['selected'] for row in fmsc), 1)
        methods = [row['method'] for row in report['data']['intervals']]
        self.assertEqual(methods, ['NAIVE', 'ONE_STEP', 'TWO_STEP'])
        criteria = {row['criterion'] for row in report['data']['criteria']}
        self.assertEqual(criteria, {'GMM-BIC', 'GMM-HQ', 'GMM-AIC', 'CCIC-BIC'})
        self.assertEqual(report['config']['draws_J'], 500)

    def test_selection_matches_library(self):
        out = self.root / 'json'
        self.analyze(out)
        report = json.loads((out / 'report.json').read_text())
        selected = next(row['candidate'] for row in report['data']['fmsc'] if row['selected'])
        d, _ = load_dataset(load_config(self.config))
        self.assertEqual(selected, fmsc_choose_iv(d, candidate_lattice(d.p, d.q)).selected)

    def test_reruns_are_byte_identical(self):
        out = self.root / 'again'
        self.analyze(out)
        first = (out / 'report.json').read_bytes()
        self.analyze(out)
        self.assertEqual(first, (out / 'report.json').read_bytes())

    def test_thread_count_does_not_change_the_report(self):
        config = yaml.safe_load(self.config.read_text())
        config.update(add_constant=True, targets=['x', 'constant'])
        self.config.write_text(yaml.safe_dump(config))
        self.analyze(self.root / 'serial', threads=1)
        self.analyze(self.root / 'pooled', threads=2)
        serial = json.loads((self.root / 'serial' / 'report.json').read_text())['data']
        self.assertEqual(serial, json.loads((self.root / 'pooled' / 'report.json').read_text())['data'])
        targets = [row['target'] for row in serial['intervals']]
        self.assertEqual(targets, ['x'] * 3 + ['constant'] * 3)

    def test_two_step_contains_one_step(self):
        out = self.root / 'csv'
        self.analyze(out, format='csv')
        for name in ('estimates', 'fmsc', 'criteria', 'intervals'):
            self.assertTrue((out / f'{name}.csv').exists())
        intervals = pd.read_csv(out / 'intervals.csv').set_index('method')
        self.assertLessEqual(intervals.loc['TWO_STEP', 'lower'], intervals.loc['ONE_STEP', 'lower'])
        self.assertGreaterEqual(intervals.loc['TWO_STEP', 'upper'], intervals.loc['ONE_STEP', 'upper'])

    def test_bad_override(self):
        with self.assertRaises(CommandError):
            self.analyze(self.root / 'bad', alpha=1.5)

    def test_unreadable_input_leaves_error_report(self):
        out = self.root / 'missing'
        with self.assertRaises(CommandError):
            self.analyze(out, input=str(self.root / 'nope.csv'))
        report = json.loads((out / 'report.json').read_text())
        self.assertFalse(report['success'])
        self.assertEqual(report['errors']['code'], 'parse')


class SimulateCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_full_grid_shape(self):
        out = self.root / 'rmse.csv'
        call_command('fmsc_simulate', 'rmse-ols-tsls', reps=2, seed=1, threads=1, out=str(out), stdout=StringIO())
        table = pd.read_csv(out)
        self.assertEqual(len(table[['N', 'pi', 'rho']].drop_duplicates()), 54)
        self.assertEqual(set(table['method']), {'OLS', 'TSLS', 'FMSC', 'DHW90', 'DHW95', 'AVG'})

    def test_single_coverage_cell_as_json(self):
        out = self.root / 'coverage.json'
        call_command(
            'fmsc_simulate', 'coverage-choose-iv', reps=2, seed=1, threads=1, draws_J=100, grid_points=10,
            cells=['N=50,gamma=0.6,rho=0.5'], out=str(out), format='json', stdout=StringIO(),
        )
        report = json.loads(out.read_text())
        self.assertTrue(report['success'])
        self.assertTrue(all(row['N'] == 50 and row['gamma'] == 0.6 for row in report['data']))

    def test_bad_cell(self):
        with self.assertRaises(CommandError):
            call_command('fmsc_simulate', 'rmse-choose-iv', reps=1, cells=['N=50'],
                         out=str(self.root / 'x.csv'), stdout=StringIO())
