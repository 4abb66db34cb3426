"""
YAML config and CSV ingestion for the analysis workflow.
"""
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from apps.common.exceptions import ConfigError, DataParseError, RankError
from apps.moments.models import Dataset, InstrumentBlock, has_full_column_rank
from .serializers import AnalysisConfigSerializer

logger = logging.getLogger(__name__)

CONSTANT = 'constant'


def parse_config(raw, overrides=None):
    """
    Validate a raw mapping (plus non-None overrides) into AnalysisSettings.

    Example:
        settings = parse_config(yaml.safe_load(text), {'seed': 11})
    """
    if not isinstance(raw, dict):
        raise ConfigError('Config must be a mapping of field names to values.')
    data = dict(raw)
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})
    serializer = AnalysisConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError(detail=json.loads(json.dumps(serializer.errors)))
    return serializer.save()


def load_config(path, overrides=None):
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding='utf-8'))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f'Cannot read config {path}: {exc}') from exc
    return parse_config(raw, overrides)


def config_to_dict(settings):
    # ReturnDict -> plain containers so yaml.safe_dump accepts it
    return json.loads(json.dumps(AnalysisConfigSerializer(settings).data))


def dump_config(settings):
    return yaml.safe_dump(config_to_dict(settings), sort_keys=True, allow_unicode=True)


def _numeric_frame(frame, columns):
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise ConfigError(f'Columns not found in input: {missing}')
    out = {}
    for column in columns:
        raw = frame[column]
        values = pd.to_numeric(raw, errors='coerce')
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            original = raw.iloc[row]
            problem = 'missing value' if pd.isna(original) or str(original).strip() == '' else f'non-numeric value {original!r}'
            # header is line 1, first data row is line 2
            raise DataParseError(f'{problem} at line {row + 2}, column {column!r}')
        out[column] = values.to_numpy(dtype=float)
    return out


def _diagnose_rank(X, Z1, suspect, settings):
    if not has_full_column_rank(X):
        return 'Regressor columns are collinear.'
    if not has_full_column_rank(Z1):
        return 'Baseline instrument block is rank deficient.'
    current = Z1
    for block, columns in zip(settings.suspect_blocks, suspect):
        current = np.hstack([current, columns])
        if not has_full_column_rank(current):
            return f'Suspect block {block.name!r} is collinear with earlier instruments.'
    return 'Instrument matrix is rank deficient.'


def load_dataset(settings):
    """
    Read the CSV named by the config into a Dataset plus the suspect blocks
    expressed as column indices into Z2.
    """
    try:
        frame = pd.read_csv(settings.input, encoding='utf-8', dtype=str, keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise DataParseError(f'Cannot parse {settings.input}: {exc}') from exc

    needed = [settings.outcome, *settings.regressors, *settings.baseline, *settings.suspect_columns]
    values = _numeric_frame(frame, needed)
    n = len(frame)

    X = np.column_stack([values[c] for c in settings.regressors])
    Z1 = np.column_stack([values[c] for c in settings.baseline])
    regressor_names = tuple(settings.regressors)
    baseline_names = tuple(settings.baseline)
    if settings.add_constant:
        X = np.column_stack([X, np.ones(n)])
        Z1 = np.column_stack([np.ones(n), Z1])
        regressor_names += (CONSTANT,)
        baseline_names = (CONSTANT,) + baseline_names

    suspect = [np.column_stack([values[c] for c in block.columns]) for block in settings.suspect_blocks]
    blocks = []
    offset = 0
    for block in settings.suspect_blocks:
        blocks.append(InstrumentBlock(name=block.name, columns=tuple(range(offset, offset + len(block.columns)))))
        offset += len(block.columns)

    try:
        d = Dataset(
            y=values[settings.outcome], X=X, Z1=Z1, Z2=np.hstack(suspect),
            regressor_names=regressor_names, baseline_names=baseline_names,
            suspect_names=settings.suspect_columns,
        )
    except RankError as exc:
        raise RankError(_diagnose_rank(X, Z1, suspect, settings)) from exc
    logger.info('Loaded %s: n=%d, p=%d, q=%d, r=%d', settings.input, d.n, d.p, d.q, d.r)
    return d, blocks
