"""
Deterministic minimizer picking shared by every selection rule.
"""
import numpy as np


def pick_minimizer(values, sizes, ids, prefer_larger=False):
    """
    Index of the minimal value. Ties go to fewer moment conditions (or more,
    with ``prefer_larger``), then to the lexicographically lowest id.
    """
    if not len(values):
        raise ValueError('Nothing to choose from.')
    sign = -1 if prefer_larger else 1
    order = sorted(
        range(len(values)),
        key=lambda i: (float(values[i]), sign * int(sizes[i]), str(ids[i])),
    )
    return order[0]


def tie_order(sizes, ids, prefer_larger=False):
    """Column permutation under which ``np.argmin`` reproduces the tie rule."""
    sign = -1 if prefer_larger else 1
    return np.array(sorted(range(len(sizes)), key=lambda i: (sign * int(sizes[i]), str(ids[i]))))
