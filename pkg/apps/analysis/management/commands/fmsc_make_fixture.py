"""
apps/analysis/management/commands/fmsc_make_fixture.py

Writes a synthetic CSV drawn from one of the simulation designs, plus a
matching analysis config, so the analysis workflow can be exercised without
the (unbundled) empirical data.

Usage:
    python manage.py fmsc_make_fixture --out fixtures/choose_iv.csv --gamma 0.4 --rho 0 --n 500
    python manage.py fmsc_make_fixture --design ols-tsls --pi 0.4 --rho 0.2 --out fixtures/ols.csv
"""
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management.base import BaseCommand, CommandError

from apps.analysis.loaders import dump_config, parse_config
from apps.common.conf import fmsc_setting
from apps.common.exceptions import FmscError
from apps.simulation.designs import ChooseIvDesign, OlsTslsDesign, gen_choose_iv, gen_ols_tsls


class Command(BaseCommand):
    help = 'Write a synthetic CSV (and analysis config) from a simulation design'

    def add_arguments(self, parser):
        parser.add_argument('--design', choices=['choose-iv', 'ols-tsls'], default='choose-iv')
        parser.add_argument('--gamma', type=float, default=0.4)
        parser.add_argument('--pi', type=float, default=0.4)
        parser.add_argument('--rho', type=float, default=0.0)
        parser.add_argument('--n', type=int, default=500)
        parser.add_argument('--seed', type=int, default=None)
        parser.add_argument('--out', required=True, help='CSV path')
        parser.add_argument('--config-out', default=None,
                            help='Where to write the matching YAML config (choose-iv only)')

    def handle(self, *args, **options):
        seed = options['seed'] if options['seed'] is not None else fmsc_setting('SEED')
        rng = np.random.default_rng(seed)
        try:
            if options['design'] == 'choose-iv':
                d = gen_choose_iv(ChooseIvDesign(gamma=options['gamma'], rho=options['rho'], n=options['n']), rng)
            else:
                d = gen_ols_tsls(OlsTslsDesign(pi=options['pi'], rho=options['rho'], n=options['n']), rng)
        except FmscError as exc:
            raise CommandError(f'{exc.code}: {exc.detail}') from exc

        columns = {'y': d.y, 'x': d.x}
        columns.update({name: d.Z1[:, j] for j, name in enumerate(d.baseline_names)})
        if options['design'] == 'choose-iv':
            columns['w'] = d.Z2[:, 0]
        out = Path(options['out'])
        out.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(columns).to_csv(out, index=False, float_format='%.17g', lineterminator='\n')
        self.stdout.write(self.style.SUCCESS(f'Wrote {d.n} rows to {out}'))

        if options['config_out']:
            if options['design'] != 'choose-iv':
                raise CommandError('Analysis configs are only generated for the choose-iv design.')
            settings = parse_config({
                'input': str(out),
                'outcome': 'y',
                'regressors': ['x'],
                'baseline': list(d.baseline_names),
                'suspect_blocks': [{'name': 'w', 'columns': ['w']}],
                'targets': ['x'],
                'seed': seed,
            })
            config_path = Path(options['config_out'])
            config_path.parent.mkdir(parents=True, exist_ok=True)
            config_path.write_text(dump_config(settings), encoding='utf-8')
            self.stdout.write(self.style.SUCCESS(f'Wrote config to {config_path}'))
