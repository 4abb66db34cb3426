"""
apps/analysis/management/commands/fmsc_analyze.py

Runs the FMSC analysis workflow on a CSV file described by a YAML config.

Usage:
    python manage.py fmsc_analyze --config analysis.yaml
    python manage.py fmsc_analyze --config analysis.yaml --format csv --out output/run1 --seed 11
    python manage.py fmsc_analyze --config analysis.yaml --threads 4
"""
import logging

from django.core.management.base import BaseCommand, CommandError

from apps.analysis.loaders import load_config
from apps.analysis.pipeline import run_analysis, write_error, write_report
from apps.common.conf import fmsc_setting
from apps.common.exceptions import FmscError

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'FMSC / positive-part FMSC tables and post-selection intervals for a CSV dataset'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='YAML analysis config')
        parser.add_argument('--input', default=None, help='Override the CSV path')
        parser.add_argument('--seed', type=int, default=None)
        parser.add_argument('--alpha', type=float, default=None)
        parser.add_argument('--delta', type=float, default=None)
        parser.add_argument('--draws-J', dest='draws_J', type=int, default=None)
        parser.add_argument('--out', default=None, help='Output directory')
        parser.add_argument('--format', choices=['csv', 'json'], default=None)
        parser.add_argument('--threads', type=int, default=None, help='Worker processes (default: FMSC_THREADS)')

    def handle(self, *args, **options):
        overrides = {
            'input': options['input'],
            'seed': options['seed'],
            'alpha': options['alpha'],
            'delta': options['delta'],
            'draws_J': options['draws_J'],
            'output': options['out'],
            'format': options['format'],
        }
        try:
            settings = load_config(options['config'], overrides)
        except FmscError as exc:
            raise CommandError(f'{exc.code}: {exc.detail}') from exc

        self.stdout.write(self.style.SUCCESS(f'Analyzing {settings.input}...'))
        try:
            report = run_analysis(settings, threads=options['threads'] or fmsc_setting('THREADS'))
            paths = write_report(report, settings)
        except FmscError as exc:
            logger.exception('Analysis failed')
            if settings.format == 'json':
                write_error(exc, settings)
            raise CommandError(f'{exc.code}: {exc.detail}') from exc

        for row in report.fmsc:
            if row['selected']:
                self.stdout.write(f"  {row['target']}: FMSC selects {row['candidate']}")
        for path in paths:
            self.stdout.write(self.style.SUCCESS(f'Wrote {path}'))
