"""Numeric evaluation of predictions against ground truth.

Errors are kept on a signed percent scale throughout: a prediction of 24.75
against a truth of 19.80 is +25.0. Everything downstream (RMSE, the crowd
point error, accuracy bands, ANOVA, t-tests) consumes those percents.

The tail probabilities for the F and t distributions are computed from an
in-house regularized incomplete beta (continued fraction, Lentz's method) so
the package carries no dependency on an external stats stack; the test suite
cross-checks every result against an independent reference implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DegenerateStatisticsError, ValidationError

__all__ = [
    "AccuracyCount",
    "AnovaResult",
    "TTestResult",
    "accuracy_count",
    "approximation_error",
    "f_survival",
    "group_point_error",
    "one_way_anova",
    "regularized_incomplete_beta",
    "rmse_percent",
    "round_half_up",
    "sample_sd",
    "t_survival_two_sided",
    "welch_t_test",
    "within_band",
]

DEFAULT_BAND_PCT = 50.0

_BETA_EPS = 1e-15
_BETA_FPMIN = 1e-300
_BETA_MAX_ITER = 500


def round_half_up(x: float) -> int:
    """Round to the nearest integer; exact halves round up."""
    return math.floor(x + 0.5)


def approximation_error(prediction: float, truth: float) -> float:
    """Signed percent deviation of a prediction from ground truth."""
    if not math.isfinite(truth) or truth <= 0:
        raise ValidationError(f"ground truth must be finite and > 0, got {truth!r}")
    if not math.isfinite(prediction) or prediction < 0:
        raise ValidationError(f"prediction must be finite and >= 0, got {prediction!r}")
    return 100.0 * (prediction - truth) / truth


def rmse_percent(errors: Iterable[float]) -> float:
    """Root mean square of signed percent errors: sqrt(sum(e^2) / n)."""
    errs = [float(e) for e in errors]
    if not errs:
        raise ValidationError("rmse_percent requires at least one error value")
    return math.sqrt(math.fsum(e * e for e in errs) / len(errs))


def group_point_error(samples: Iterable[float], truth: float) -> float:
    """Absolute percent error of the sample mean (the crowd representative)."""
    values = [float(v) for v in samples]
    if not values:
        raise ValidationError("group_point_error requires at least one sample")
    mean = math.fsum(values) / len(values)
    return abs(approximation_error(mean, truth))


def sample_mean(values: Iterable[float]) -> float:
    vals = [float(v) for v in values]
    if not vals:
        raise ValidationError("mean of an empty sequence")
    return math.fsum(vals) / len(vals)


def sample_sd(values: Iterable[float]) -> float:
    """Sample standard deviation with the n-1 divisor."""
    vals = [float(v) for v in values]
    if len(vals) < 2:
        raise ValidationError("sample_sd requires at least two values")
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    return math.sqrt(var)


def within_band(signed_error_pct: float, band_pct: float = DEFAULT_BAND_PCT) -> bool:
    """True when |error| lies inside the accuracy band. Boundary is inclusive."""
    if band_pct <= 0:
        raise ValidationError(f"band_pct must be > 0, got {band_pct!r}")
    return abs(signed_error_pct) <= band_pct


@dataclass(frozen=True)
class AccuracyCount:
    """How many of the benchmarked designs landed inside the accuracy band."""

    hits: int
    total: int

    @property
    def percent(self) -> int:
        if self.total == 0:
            return 0
        return round_half_up(100.0 * self.hits / self.total)

    def __str__(self) -> str:
        return f"{self.hits}/{self.total} ({self.percent}%)"


def accuracy_count(flags: Iterable[bool]) -> AccuracyCount:
    flags = list(flags)
    return AccuracyCount(hits=sum(1 for f in flags if f), total=len(flags))


# --- regularized incomplete beta and the tail probabilities built on it ----


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the continued fraction for I_x(a, b).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_FPMIN:
        d = _BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise DegenerateStatisticsError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b), accurate to about 1e-10 absolute over the whole domain.

    Uses the continued fraction directly for x below the (a+1)/(a+b+2)
    crossover and the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) above it.
    """
    if not (a > 0 and b > 0):
        raise ValidationError(f"shape parameters must be positive, got a={a!r}, b={b!r}")
    if not (0.0 <= x <= 1.0) or not math.isfinite(x):
        raise ValidationError(f"x must lie in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def f_survival(f_stat: float, df_between: int, df_within: int) -> float:
    """P(F >= f_stat) for an F distribution with the given degrees of freedom."""
    if f_stat < 0:
        raise ValidationError(f"F statistic must be >= 0, got {f_stat!r}")
    if df_between < 1 or df_within < 1:
        raise ValidationError("degrees of freedom must be >= 1")
    x = df_within / (df_within + df_between * f_stat)
    return regularized_incomplete_beta(x, df_within / 2.0, df_between / 2.0)


def t_survival_two_sided(t_stat: float, df: float) -> float:
    """Two-sided P(|T| >= |t_stat|) for Student's t with df degrees of freedom."""
    if df <= 0:
        raise ValidationError(f"degrees of freedom must be > 0, got {df!r}")
    x = df / (df + t_stat * t_stat)
    return regularized_incomplete_beta(x, df / 2.0, 0.5)


# --- group comparison tests -------------------------------------------------


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float


def one_way_anova(groups: Sequence[Iterable[float]]) -> AnovaResult:
    """Classic one-way ANOVA across two or more groups of observations.

    F = (SSB/df_between) / (SSW/df_within); the p-value is the F survival
    probability. Zero within-group variance makes F undefined and raises.
    """
    data = [[float(v) for v in g] for g in groups]
    if len(data) < 2:
        raise ValidationError("one_way_anova requires at least two groups")
    for i, g in enumerate(data):
        if len(g) < 2:
            raise ValidationError(f"group {i} has fewer than two observations")
    n_total = sum(len(g) for g in data)
    grand_mean = math.fsum(math.fsum(g) for g in data) / n_total
    means = [math.fsum(g) / len(g) for g in data]
    ssb = math.fsum(len(g) * (m - grand_mean) ** 2 for g, m in zip(data, means))
    ssw = math.fsum(
        math.fsum((v - m) ** 2 for v in g) for g, m in zip(data, means)
    )
    df_between = len(data) - 1
    df_within = n_total - len(data)
    if ssw == 0.0:
        raise DegenerateStatisticsError(
            "zero within-group variance; the F statistic is undefined"
        )
    f_stat = (ssb / df_between) / (ssw / df_within)
    return AnovaResult(
        f_stat=f_stat,
        df_between=df_between,
        df_within=df_within,
        p_value=f_survival(f_stat, df_between, df_within),
    )


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    df: float
    p_value_two_sided: float


def welch_t_test(a: Iterable[float], b: Iterable[float]) -> TTestResult:
    """Welch's unequal-variance t-test with Welch-Satterthwaite df, two-sided."""
    xs = [float(v) for v in a]
    ys = [float(v) for v in b]
    if len(xs) < 2 or len(ys) < 2:
        raise ValidationError("welch_t_test requires at least two values per sample")
    mean_a = math.fsum(xs) / len(xs)
    mean_b = math.fsum(ys) / len(ys)
    var_a = math.fsum((v - mean_a) ** 2 for v in xs) / (len(xs) - 1)
    var_b = math.fsum((v - mean_b) ** 2 for v in ys) / (len(ys) - 1)
    if var_a == 0.0 and var_b == 0.0:
        if mean_a == mean_b:
            # All values equal: no evidence of difference, by convention.
            return TTestResult(t_stat=0.0, df=float(len(xs) + len(ys) - 2), p_value_two_sided=1.0)
        raise DegenerateStatisticsError(
            "both samples have zero variance but different means"
        )
    sa = var_a / len(xs)
    sb = var_b / len(ys)
    se2 = sa + sb
    t_stat = (mean_a - mean_b) / math.sqrt(se2)
    df = se2 * se2 / (sa * sa / (len(xs) - 1) + sb * sb / (len(ys) - 1))
    return TTestResult(
        t_stat=t_stat,
        df=df,
        p_value_two_sided=t_survival_two_sided(t_stat, df),
    )
