"""
Reusable report envelopes for consistent command output
"""
import json

import numpy as np


def success_report(data=None, message=None, **kwargs):
    """
    Standard success envelope

    Args:
        data: Report payload (dict or list of primitives)
        message: Summary line (optional)
        **kwargs: Additional top-level fields

    Returns:
        dict ready for ``render_json``

    Example:
        return success_report(
            data={'fmsc': rows},
            message='Analysis finished',
        )
    """
    report = {'success': True}

    if message:
        report['message'] = message

    if data is not None:
        report['data'] = data

    report.update(kwargs)
    return report


def error_report(message=None, errors=None, **kwargs):
    """
    Standard error envelope

    Example:
        return error_report(
            message='Configuration rejected',
            errors={'alpha': ['Ensure this value is less than 1.']},
        )
    """
    report = {'success': False}

    if message:
        report['message'] = message

    if errors is not None:
        report['errors'] = errors

    report.update(kwargs)
    return report


def _to_primitive(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f'Object of type {type(value).__name__} is not JSON serializable')


def render_json(report):
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(report, sort_keys=True, indent=2, default=_to_primitive) + '\n'
