"""Inference numerics: incomplete beta, Student-t tails, OLS and Welch's t-test.

Pure functions with no shared state. The incomplete beta uses the modified
Lentz continued fraction; failure to converge raises instead of returning an
approximation.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateX, DomainError, TooFewPoints, ZeroVariance

CF_MAX_ITER = 300
CF_TOL = 1e-14
_FPMIN = 1e-300
_EPS = np.finfo(float).eps


def _beta_cf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_TOL:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge in {CF_MAX_ITER} iterations "
        f"(a={a}, b={b}, x={x})"
    )


def _ibeta(a: float, b: float, x: float, y: float) -> float:
    """I_x(a, b) with y = 1 - x supplied separately to keep precision near x = 1."""
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, y) / b


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not (math.isfinite(a) and a > 0):
        raise DomainError(f"a must be positive and finite, got {a}")
    if not (math.isfinite(b) and b > 0):
        raise DomainError(f"b must be positive and finite, got {b}")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x must lie in [0, 1], got {x}")
    return min(1.0, max(0.0, _ibeta(a, b, x, 1.0 - x)))


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if not (df > 0) or math.isnan(df):
        raise DomainError(f"degrees of freedom must be positive, got {df}")
    if math.isnan(t):
        raise DomainError("t statistic is NaN")
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    if math.isinf(df):
        return math.erfc(abs(t) / math.sqrt(2.0))
    t2 = t * t
    denom = df + t2
    p = _ibeta(df / 2.0, 0.5, df / denom, t2 / denom)
    return min(1.0, max(0.0, p))


def student_t_critical(level: float, df: float) -> float:
    """Two-sided critical value c with P(|T| >= c) = 1 - level, by bisection."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must be in (0, 1), got {level}")
    alpha = 1.0 - level
    hi = 1.0
    while student_t_two_sided_p(hi, df) > alpha:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_two_sided_p(mid, df) > alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    se_slope: float
    t_stat: float
    df: int
    p_value: float
    n: int
    degenerate: bool = False  # residuals vanish; p is 0 (or 1 for a flat line) by convention

    def confidence_interval(self, level: float = 0.95) -> tuple[float, float]:
        if self.se_slope == 0.0:
            return (self.slope, self.slope)
        half = student_t_critical(level, self.df) * self.se_slope
        return (self.slope - half, self.slope + half)


def _as_array(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or infinite values")
    return arr


def linear_regression(xs: Sequence[float], ys: Sequence[float]) -> RegressionResult:
    """Ordinary least squares of ys on xs with a two-sided slope t-test (df = n - 2)."""
    x = _as_array(xs, "xs")
    y = _as_array(ys, "ys")
    if x.size != y.size:
        raise DomainError(f"xs and ys differ in length ({x.size} vs {y.size})")
    n = int(x.size)
    if n < 3:
        raise TooFewPoints(f"regression needs at least 3 points, got {n}")
    mx = math.fsum(x) / n
    dx = x - mx
    sxx = math.fsum(dx * dx)
    if sxx == 0.0 or np.all(x == x[0]):
        raise DegenerateX("predictor has zero variance")
    df = n - 2
    if np.all(y == y[0]):
        return RegressionResult(0.0, float(y[0]), 0.0, 0.0, df, 1.0, n, degenerate=True)
    my = math.fsum(y) / n
    slope = math.fsum(dx * (y - my)) / sxx
    intercept = my - slope * mx
    resid = y - (intercept + slope * x)
    sse = math.fsum(resid * resid)
    if sse <= (4.0 * _EPS) ** 2 * math.fsum(y * y):
        p = 0.0 if slope != 0.0 else 1.0
        t = math.copysign(math.inf, slope) if slope != 0.0 else 0.0
        return RegressionResult(slope, intercept, 0.0, t, df, p, n, degenerate=True)
    se = math.sqrt(sse / df / sxx)
    t = slope / se
    return RegressionResult(slope, intercept, se, t, df, student_t_two_sided_p(t, df), n)


@dataclass(frozen=True)
class WelchResult:
    mean_diff: float
    t_stat: float
    df: float
    p_value: float
    n_a: int
    n_b: int


def _sample_var(arr: np.ndarray, mean: float) -> float:
    if np.all(arr == arr[0]):
        return 0.0
    d = arr - mean
    return math.fsum(d * d) / (arr.size - 1)


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Two-sided Welch t-test of mean(a) - mean(b) with Welch-Satterthwaite df."""
    xa = _as_array(a, "a")
    xb = _as_array(b, "b")
    na, nb = int(xa.size), int(xb.size)
    if na < 2 or nb < 2:
        raise TooFewPoints(f"each group needs at least 2 values (got {na} and {nb})")
    ma = math.fsum(xa) / na
    mb = math.fsum(xb) / nb
    va = _sample_var(xa, ma) / na
    vb = _sample_var(xb, mb) / nb
    diff = ma - mb
    se2 = va + vb
    if se2 == 0.0:
        if diff != 0.0:
            raise ZeroVariance("both groups are constant with different means")
        return WelchResult(0.0, 0.0, float(na + nb - 2), 1.0, na, nb)
    t = diff / math.sqrt(se2)
    df = se2 * se2 / (va * va / (na - 1) + vb * vb / (nb - 1))
    # rounding can push df a hair past its analytic bounds
    df = min(max(df, float(min(na, nb) - 1)), float(na + nb - 2))
    return WelchResult(diff, t, df, student_t_two_sided_p(t, df), na, nb)
