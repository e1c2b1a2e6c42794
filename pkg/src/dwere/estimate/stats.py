"""Binomial interval helpers."""

import math

from scipy import stats

Z95 = 1.959963984540054


def wilson(successes, trials, z=Z95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # guard the rounding at the endpoints so p_hat always sits inside
    return (min(lo, p), max(hi, p))


def std_error(successes, trials):
    if trials <= 0:
        return math.inf
    p = successes / trials
    return math.sqrt(p * (1 - p) / trials)


def clopper_upper(successes, trials, alpha=0.05):
    """One-sided (1 - alpha) Clopper-Pearson upper bound."""
    if successes >= trials:
        return 1.0
    return float(stats.beta.ppf(1 - alpha, successes + 1, trials - successes))


def log_rate(p, n):
    """``log(p) / n`` with ``-inf`` for ``p == 0``."""
    return math.log(p) / n if p > 0 else -math.inf
