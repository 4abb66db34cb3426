"""
Chi-square and normal quantiles from the inverse regularized incomplete gamma.
"""
import math

from scipy.special import gammaincinv

from apps.common.exceptions import ConfigError


def chi_sq_quantile(df, prob):
    """
    Inverse CDF of the chi-square distribution.

    Example:
        chi_sq_quantile(2, 0.95)   # 5.9915 (= -2 log 0.05)
    """
    if int(df) != df or df < 1:
        raise ConfigError(f'Degrees of freedom must be a positive integer, got {df}.')
    if not 0.0 < prob < 1.0:
        raise ConfigError(f'Probability must lie in (0, 1), got {prob}.')
    return float(2.0 * gammaincinv(df / 2.0, prob))


def normal_critical_value(alpha):
    """Two-sided z_{1 - alpha/2}, via z^2 ~ chi-square(1)."""
    return math.sqrt(chi_sq_quantile(1, 1.0 - alpha))
