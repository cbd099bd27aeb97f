"""Two-sample tests used to decide state relevance.

The Student-t tail comes from the regularised incomplete beta function
(Lentz continued fraction) and the Kolmogorov tail from its two classical
series, so the package does not depend on scipy at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = 1e-16
_TINY = 1e-300


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    reject: bool
    df: float
    n1: int
    n2: int
    inconclusive: bool = False

    # keep pytest from collecting this as a test class
    __test__ = False


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, 20000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc requires a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """``P(|T| >= |t|)`` for a Student-t variable with ``df`` degrees of freedom."""
    if math.isnan(t) or math.isnan(df):
        return float("nan")
    if math.isinf(t):
        return 0.0
    if math.isinf(df):
        return math.erfc(abs(t) / math.sqrt(2.0))
    x = df / (df + t * t)
    return min(1.0, max(0.0, betainc(0.5 * df, 0.5, x)))


def kolmogorov_sf(x: float) -> float:
    """Survival function of the limiting Kolmogorov distribution."""
    if x <= 0.0:
        return 1.0
    if x < 1.0:
        # Jacobi-theta form converges fast for small x
        w = math.pi ** 2 / (8.0 * x * x)
        cdf = 0.0
        for k in range(1, 50, 2):
            term = math.exp(-k * k * w)
            cdf += term
            if term < 1e-18 * cdf:
                break
        return 1.0 - math.sqrt(2.0 * math.pi) / x * cdf
    total = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < 1e-18:
            break
    return min(1.0, max(0.0, 2.0 * total))


def _inconclusive(n1, n2, df=float("nan")):
    return TestResult(float("nan"), 1.0, False, df, n1, n2, inconclusive=True)


def welch_t_test(a, b, alpha: float) -> TestResult:
    """Two-sided Welch t-test for a difference in means.

    Fewer than two observations on either side is inconclusive (p = 1). When
    both samples are constant the statistic is 0 with p = 1 for equal means
    and infinite with p = 0 otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        return _inconclusive(n1, n2)
    m1, m2 = a.mean(), b.mean()
    v1, v2 = a.var(ddof=1) / n1, b.var(ddof=1) / n2
    se2 = v1 + v2
    if se2 == 0.0:
        if m1 == m2:
            return TestResult(0.0, 1.0, False, float("nan"), n1, n2)
        stat = math.copysign(math.inf, m1 - m2)
        return TestResult(stat, 0.0, 0.0 < alpha, float("nan"), n1, n2)
    stat = float((m1 - m2) / math.sqrt(se2))
    df = float(se2 * se2 / (v1 * v1 / (n1 - 1) + v2 * v2 / (n2 - 1)))
    p = student_t_two_sided_p(stat, df)
    return TestResult(stat, p, p < alpha, df, n1, n2)


def smirnov_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / len(a)
    cdf_b = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(cdf_a - cdf_b)))


def smirnov_test(a, b, alpha: float) -> TestResult:
    """Two-sample Smirnov test with the asymptotic Kolmogorov p-value."""
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        return _inconclusive(n1, n2)
    d = smirnov_statistic(a, b)
    en = n1 * n2 / (n1 + n2)
    p = kolmogorov_sf(math.sqrt(en) * d)
    return TestResult(d, p, p < alpha, float("nan"), n1, n2)
