"""
One-way ANOVA used by the idle-timeout estimator.

The F distribution CDF is evaluated through the regularized incomplete beta
function: P(F <= x) = I_{d1 x / (d1 x + d2)}(d1/2, d2/2).
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

from loftsim.errors import DomainError

logger = logging.getLogger("Recon")


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    p_value: float
    df_between: int
    df_within: int
    degenerate: bool = False


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F(d1, d2) distribution"""
    if d1 <= 0 or d2 <= 0:
        raise DomainError(f"Degrees of freedom must be positive, got ({d1}, {d2})")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return float(betainc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2)))


def f_survival(x: float, d1: float, d2: float) -> float:
    """1 - CDF, computed from the complementary beta tail to keep precision for large x"""
    if d1 <= 0 or d2 <= 0:
        raise DomainError(f"Degrees of freedom must be positive, got ({d1}, {d2})")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x)))


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """
    Between-group mean square over within-group mean square.

    Zero within-group variance: a nonzero between-group spread gives an
    infinite statistic with p = 0 and the result flagged degenerate; identical
    groups give f = 0 and p = 1.
    """
    if len(groups) < 2:
        raise DomainError(f"ANOVA needs at least 2 groups, got {len(groups)}")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if any(a.size == 0 for a in arrays):
        raise DomainError("Every ANOVA group needs at least one sample")
    k = len(arrays)
    n = sum(a.size for a in arrays)
    if n <= k:
        raise DomainError(f"ANOVA needs more samples ({n}) than groups ({k})")

    # center on the grand mean first; keeps the sums exact under shifts
    grand = float(np.mean(np.concatenate(arrays)))
    means = [float(a.mean()) for a in arrays]
    ssb = sum(a.size * (m - grand) ** 2 for a, m in zip(arrays, means))
    ssw = sum(float(np.sum((a - m) ** 2)) for a, m in zip(arrays, means))
    df_between, df_within = k - 1, n - k

    tolerance = 1e-24 * max(grand * grand * n, 1.0)
    if ssw <= tolerance:
        if ssb <= tolerance:
            return AnovaResult(0.0, 1.0, df_between, df_within)
        logger.warning("ANOVA with zero within-group variance; reporting p=0")
        return AnovaResult(math.inf, 0.0, df_between, df_within, degenerate=True)

    f = (ssb / df_between) / (ssw / df_within)
    p = min(max(f_survival(f, df_between, df_within), 0.0), 1.0)
    return AnovaResult(f, p, df_between, df_within)
