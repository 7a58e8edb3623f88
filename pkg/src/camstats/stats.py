"""Hypothesis tests, classification metrics and bootstrap standard errors.

All p-values are two-sided and come from the Student t distribution via the
regularized incomplete beta function, evaluated with a continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateClassError,
    DegenerateVarianceError,
    InstabilityError,
    ParameterError,
)
from .rng import Xoshiro256StarStar, derive_seed

_CF_MAX_ITER = 500
_CF_EPS = 1e-15
_CF_FPMIN = 1e-300


@dataclass(frozen=True)
class TestResult:
    """Outcome of a two-sided test: the statistic (t, r or rho), its degrees
    of freedom and the p-value."""

    statistic: float
    df: float
    p_value: float


@dataclass(frozen=True)
class ThresholdReport:
    tau: float
    criterion_value: float


@dataclass(frozen=True)
class MetricValue:
    value: Optional[float]
    se: Optional[float]


@dataclass(frozen=True)
class MetricsReport:
    auroc: MetricValue
    auprc: MetricValue
    accuracy: MetricValue
    sensitivity: MetricValue
    specificity: MetricValue
    ppv: MetricValue
    npv: MetricValue

    def as_dict(self) -> dict[str, MetricValue]:
        return {
            "auroc": self.auroc,
            "auprc": self.auprc,
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "ppv": self.ppv,
            "npv": self.npv,
        }


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_FPMIN:
        d = _CF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise InstabilityError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Two-sided survival probability 2*P(T >= |t|) of Student's t."""
    if df < 1:
        raise ParameterError(f"df must be >= 1, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return betainc(df / 2.0, 0.5, x)


def _paired(x, y) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or ya.ndim != 1 or xa.shape != ya.shape:
        raise ParameterError(
            f"paired samples need equal-length 1-D vectors, got {xa.shape} vs {ya.shape}"
        )
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise ParameterError("paired samples must be finite")
    return xa, ya


def paired_t_test(x, y) -> TestResult:
    """Paired-sample t-test on the differences x_i - y_i (two-sided)."""
    xa, ya = _paired(x, y)
    n = xa.size
    if n < 2:
        raise ParameterError(f"paired t-test needs n >= 2, got {n}")
    d = xa - ya
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateVarianceError("differences are all identical (sd = 0)")
    t = float(d.mean()) * math.sqrt(n) / sd
    df = n - 1
    return TestResult(statistic=t, df=df, p_value=t_sf(t, df))


def pearson(x, y) -> TestResult:
    """Pearson correlation with two-sided significance via the t transform."""
    xa, ya = _paired(x, y)
    n = xa.size
    if n < 3:
        raise ParameterError(f"pearson needs n >= 3, got {n}")
    xm = xa - xa.mean()
    ym = ya - ya.mean()
    sxx = float(xm @ xm)
    syy = float(ym @ ym)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVarianceError("zero variance in one of the vectors")
    r = float(xm @ ym) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        # perfectly linear: the t statistic diverges, p -> 0 by convention
        return TestResult(statistic=r, df=df, p_value=0.0)
    t = r * math.sqrt(df / (1.0 - r * r))
    return TestResult(statistic=r, df=df, p_value=t_sf(t, df))


def average_ranks(values) -> np.ndarray:
    """Ranks starting at 1; tied values share the mean of their ranks."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> TestResult:
    """Spearman rank correlation: pearson applied to average ranks."""
    xa, ya = _paired(x, y)
    if xa.size < 3:
        raise ParameterError(f"spearman needs n >= 3, got {xa.size}")
    return pearson(average_ranks(xa), average_ranks(ya))


def _scores_labels(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    l = np.asarray(labels)
    if s.ndim != 1 or l.shape != s.shape:
        raise ParameterError("scores and labels must be equal-length 1-D vectors")
    if not np.isin(l, (0, 1)).all():
        raise ParameterError("labels must be 0 or 1")
    return s, l.astype(np.int64)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg) with ties worth 0.5."""
    s, l = _scores_labels(scores, labels)
    n_pos = int(l.sum())
    n_neg = l.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClassError("AUROC needs at least one positive and one negative")
    ranks = average_ranks(s)
    u = float(ranks[l == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auprc(scores, labels) -> float:
    """Average precision over descending scores, ties broken by input order."""
    s, l = _scores_labels(scores, labels)
    n_pos = int(l.sum())
    if n_pos == 0:
        raise DegenerateClassError("AUPRC needs at least one positive")
    order = np.argsort(-s, kind="stable")
    tp = 0
    ap = 0.0
    for rank, idx in enumerate(order, start=1):
        if l[idx] == 1:
            tp += 1
            ap += tp / rank
    return ap / n_pos


def confusion_metrics(
    scores, labels, tau: float
) -> tuple[float, float, float, Optional[float], Optional[float]]:
    """(accuracy, sensitivity, specificity, ppv, npv) predicting positive at
    score >= tau.  A 0/0 ratio is returned as None, never as 0."""
    s, l = _scores_labels(scores, labels)
    n_pos = int(l.sum())
    n_neg = l.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClassError("confusion metrics need both classes present")
    pred = s >= tau
    tp = int(np.sum(pred & (l == 1)))
    fp = int(np.sum(pred & (l == 0)))
    fn = n_pos - tp
    tn = n_neg - fp
    accuracy = (tp + tn) / l.size
    sensitivity = tp / n_pos
    specificity = tn / n_neg
    ppv = tp / (tp + fp) if (tp + fp) > 0 else None
    npv = tn / (tn + fn) if (tn + fn) > 0 else None
    return accuracy, sensitivity, specificity, ppv, npv


def select_threshold(scores, labels, criterion: str = "youden") -> ThresholdReport:
    """Pick the decision threshold from the observed score values.

    criterion "youden" maximizes sensitivity + specificity - 1; "accuracy"
    maximizes accuracy.  Ties go to the smallest threshold.
    """
    s, l = _scores_labels(scores, labels)
    n_pos = int(l.sum())
    n_neg = l.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClassError("threshold selection needs both classes present")
    if criterion not in ("youden", "accuracy"):
        raise ParameterError(f"unknown threshold criterion {criterion!r}")
    best_tau = None
    best_value = -math.inf
    for tau in np.unique(s):
        pred = s >= tau
        tp = int(np.sum(pred & (l == 1)))
        tn = int(np.sum(~pred & (l == 0)))
        fp = n_neg - tn
        if criterion == "youden":
            value = tp / n_pos + tn / n_neg - 1.0
        else:
            value = (tp + tn) / l.size
        if value > best_value:  # strict: the smallest tau wins ties
            best_value = value
            best_tau = float(tau)
    return ThresholdReport(tau=best_tau, criterion_value=best_value)


def bootstrap_se(
    metric: Callable[[np.ndarray, np.ndarray], float],
    scores,
    labels,
    n_boot: int,
    seed: int,
) -> float:
    """Bootstrap standard error of a metric over (score, label) resamples.

    Resample b draws indices from a xoshiro256** generator seeded (through
    splitmix64) with seed + b, so the result is independent of evaluation
    order.  Resamples on which the metric raises DegenerateClassError are
    redrawn with fresh sub-seeds, up to a total budget of 10*n_boot redraws.
    """
    if n_boot < 2:
        raise ParameterError(f"bootstrap needs at least 2 resamples, got {n_boot}")
    s, l = _scores_labels(scores, labels)
    n = s.size
    if n == 0:
        raise ParameterError("cannot bootstrap an empty sample")
    values = np.empty(n_boot, dtype=np.float64)
    redraws = 0
    budget = 10 * n_boot
    for b in range(n_boot):
        attempt = 0
        while True:
            gen = Xoshiro256StarStar(seed + b + attempt * n_boot)
            idx = np.fromiter(
                (gen.next_below(n) for _ in range(n)), dtype=np.intp, count=n
            )
            try:
                values[b] = metric(s[idx], l[idx])
                break
            except DegenerateClassError:
                redraws += 1
                if redraws > budget:
                    raise InstabilityError(
                        f"bootstrap redraw budget ({budget}) exhausted; "
                        "the sample is too degenerate to resample"
                    )
                attempt += 1
    return float(values.std(ddof=1))


def mean_se(values) -> tuple[float, float]:
    """Mean and analytic standard error sd/sqrt(n) of a sample."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ParameterError("mean_se needs a non-empty sample")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _undefined_guard(value: Optional[float]) -> float:
    if value is None:
        raise DegenerateClassError("metric undefined on this resample")
    return value


def evaluate_classifier(
    scores, labels, tau: float, n_boot: int, seed: int
) -> MetricsReport:
    """All seven diagnostic metrics with bootstrap SEs at threshold tau."""
    metric_fns: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {
        "auroc": auroc,
        "auprc": auprc,
        "accuracy": lambda s, l: confusion_metrics(s, l, tau)[0],
        "sensitivity": lambda s, l: confusion_metrics(s, l, tau)[1],
        "specificity": lambda s, l: confusion_metrics(s, l, tau)[2],
        "ppv": lambda s, l: _undefined_guard(confusion_metrics(s, l, tau)[3]),
        "npv": lambda s, l: _undefined_guard(confusion_metrics(s, l, tau)[4]),
    }
    acc, sens, spec, ppv, npv = confusion_metrics(scores, labels, tau)
    points = {
        "auroc": auroc(scores, labels),
        "auprc": auprc(scores, labels),
        "accuracy": acc,
        "sensitivity": sens,
        "specificity": spec,
        "ppv": ppv,
        "npv": npv,
    }
    out: dict[str, MetricValue] = {}
    for i, (name, fn) in enumerate(metric_fns.items()):
        point = points[name]
        if point is None:
            out[name] = MetricValue(value=None, se=None)
            continue
        se = bootstrap_se(fn, scores, labels, n_boot, derive_seed(seed, i))
        out[name] = MetricValue(value=point, se=se)
    return MetricsReport(**out)
