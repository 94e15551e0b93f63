"""Student-t tail probabilities and the Welch / paired t-tests.

The t CDF goes through the regularized incomplete beta function, evaluated
with the modified Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from ..core import CmrError

ALPHA = 0.01


class DegenerateSamples(CmrError):
    pass


class ZeroVariance(CmrError):
    pass


class TooFew(CmrError):
    pass


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_two_sided: float

    @property
    def significant_at_0_01(self) -> bool:
        return self.p_two_sided < ALPHA


def _beta_cf(a: float, b: float, x: float, tol: float, max_iter: int) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float, tol: float = 1e-15,
                        max_iter: int = 100_000) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the continued fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x, tol, max_iter) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x, tol, max_iter) / b


def t_two_sided_p(t: float, df: float, tol: float = 1e-15) -> float:
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return min(1.0, max(0.0, betainc_regularized(df / 2.0, 0.5, x, tol)))


def t_cdf(t: float, df: float, tol: float = 1e-15) -> float:
    half = 0.5 * t_two_sided_p(t, df, tol)
    return 1.0 - half if t > 0 else half


def _mean_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, var


def welch_ttest(sample_a: Sequence[float], sample_b: Sequence[float]) -> TTestResult:
    a, b = list(map(float, sample_a)), list(map(float, sample_b))
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise DegenerateSamples(f"need at least two values per sample, got {na} and {nb}")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    if va == 0 and vb == 0:
        raise DegenerateSamples("both samples have zero variance")
    sa, sb = va / na, vb / nb
    t = (ma - mb) / math.sqrt(sa + sb)
    if sa == sb and na == nb:
        # Welch-Satterthwaite collapses to the pooled value; skip the rounding
        df = float(na + nb - 2)
    else:
        # scaled by sa + sb so tiny variances do not underflow when squared
        ra, rb = sa / (sa + sb), sb / (sa + sb)
        df = 1.0 / (ra**2 / (na - 1) + rb**2 / (nb - 1))
    return TTestResult(t, df, t_two_sided_p(t, df))


def paired_ttest(diffs: Sequence[float]) -> TTestResult:
    d = list(map(float, diffs))
    n = len(d)
    if n < 2:
        raise TooFew(f"paired t-test needs at least two differences, got {n}")
    mean, var = _mean_var(d)
    if var == 0:
        raise ZeroVariance("all paired differences are equal")
    t = mean / (math.sqrt(var) / math.sqrt(n))
    df = n - 1
    return TTestResult(t, float(df), t_two_sided_p(t, df))
