"""
Access to the ``FMSC`` settings dict with built-in fallbacks.
"""
from django.conf import settings

DEFAULTS = {
    'SEED': 20140101,
    'SIM_DRAWS': 1000,
    'ANALYSIS_DRAWS': 10000,
    'DESK_REPS': 2000,
    'THREADS': 1,
    'SEARCH_BUDGET': 2000,
    'TAU_GRID_POINTS': 100,
    'OUTPUT_DIR': 'output',
}


def fmsc_setting(name):
    """
    Return one FMSC tunable.

    Example:
        draws = fmsc_setting('ANALYSIS_DRAWS')
    """
    if name not in DEFAULTS:
        raise KeyError(f'Unknown FMSC setting: {name}')
    configured = getattr(settings, 'FMSC', {}) if settings.configured else {}
    return configured.get(name, DEFAULTS[name])
