"""Trial statistics: mean and sample deviation, two-sample t-tests, comparison reports.

The Student t distribution is evaluated through the regularised incomplete
beta function (continued fraction, modified Lentz), so fractional degrees of
freedom from the Welch-Satterthwaite approximation are handled exactly.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

_EPS = 1e-15
_TINY = 1e-300


@dataclass(frozen=True)
class TrialSet:
    label: str
    rmses: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rmses", tuple(float(x) for x in self.rmses))
        if len(self.rmses) < 2:
            raise ValueError(f"{self.label}: need at least 2 trials, got {len(self.rmses)}")
        if not all(math.isfinite(x) for x in self.rmses):
            raise ValueError(f"{self.label}: trial values must be finite")

    @property
    def n(self) -> int:
        return len(self.rmses)


@dataclass(frozen=True)
class TTestResult:
    t: float
    dof: float
    alpha: float
    h: int
    p_value: float
    critical: float


def mean_std(values: TrialSet | Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and ``n - 1`` sample standard deviation."""
    xs = values.rmses if isinstance(values, TrialSet) else tuple(float(x) for x in values)
    n = len(xs)
    if n < 2:
        raise ValueError(f"need at least 2 values, got {n}")
    m = math.fsum(xs) / n
    var = math.fsum((x - m) ** 2 for x in xs) / (n - 1)
    return m, math.sqrt(var)


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta failed to converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, dof: float) -> float:
    if dof <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {dof}")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc(dof / 2.0, 0.5, dof / (dof + t * t))
    return 1.0 - tail if t > 0 else tail


def t_two_sided_p(t: float, dof: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def t_critical(alpha: float, dof: float) -> float:
    """``c`` with ``P(|T| > c) = alpha``, found by bisection."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    lo, hi = 0.0, 1.0
    while t_two_sided_p(hi, dof) > alpha:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_two_sided_p(mid, dof) > alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def two_sample_t_test(
    a: TrialSet | Sequence[float],
    b: TrialSet | Sequence[float],
    alpha: float = 0.05,
    equal_var: bool = False,
) -> TTestResult:
    """Two-tailed test of equal means; ``t < 0`` means ``a`` has the smaller mean.

    Welch's unequal-variance form by default, the pooled form with
    ``equal_var=True``. ``alpha`` is the total two-tailed level.
    """
    if not 0 < alpha <= 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5], got {alpha}")
    xa = a.rmses if isinstance(a, TrialSet) else tuple(a)
    xb = b.rmses if isinstance(b, TrialSet) else tuple(b)
    na, nb = len(xa), len(xb)
    ma, sa = mean_std(xa)
    mb, sb = mean_std(xb)
    va, vb = sa * sa, sb * sb
    if equal_var:
        dof = float(na + nb - 2)
        pooled = ((na - 1) * va + (nb - 1) * vb) / dof
        se2 = pooled * (1.0 / na + 1.0 / nb)
    else:
        se2 = va / na + vb / nb
        if se2 > 0:
            dof = se2 * se2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
        else:
            dof = float(na + nb - 2)
    crit = t_critical(alpha, dof)
    if se2 == 0:
        if ma == mb:
            return TTestResult(0.0, dof, alpha, 0, 1.0, crit)
        t = math.copysign(math.inf, ma - mb)
        return TTestResult(t, dof, alpha, 1, 0.0, crit)
    t = (ma - mb) / math.sqrt(se2)
    return TTestResult(t, dof, alpha, int(abs(t) > crit), t_two_sided_p(t, dof), crit)


REPORT_HEADER = [
    "section",
    "label",
    "n",
    "mean_rmse",
    "std_rmse",
    "pair",
    "t",
    "dof",
    "alpha",
    "h",
]


@dataclass
class SummaryRow:
    label: str
    n: int
    mean: float
    std: float


@dataclass
class PairRow:
    pair: str
    t: float
    dof: float
    alpha: float
    h: int


@dataclass
class ComparisonReport:
    summaries: list[SummaryRow]
    tests: list[PairRow]

    def __len__(self) -> int:
        return len(self.summaries) + len(self.tests)

    def to_text(self) -> str:
        width = max([len(s.label) for s in self.summaries] + [5])
        lines = [f"{'label':<{width}}  {'n':>4}  {'M_RMSE':>12}  {'Std_RMSE':>12}"]
        for s in self.summaries:
            lines.append(f"{s.label:<{width}}  {s.n:>4}  {s.mean:>12.6f}  {s.std:>12.6f}")
        if self.tests:
            pw = max(len(p.pair) for p in self.tests)
            lines.append("")
            lines.append(f"{'pair':<{pw}}  {'t':>10}  {'dof':>9}  {'alpha':>6}  h")
            for p in self.tests:
                lines.append(f"{p.pair:<{pw}}  {p.t:>10.4f}  {p.dof:>9.3f}  {p.alpha:>6.3f}  {p.h}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for s in self.summaries:
            w.writerow(["summary", s.label, s.n, repr(s.mean), repr(s.std), "", "", "", "", ""])
        for p in self.tests:
            w.writerow(["ttest", "", "", "", "", p.pair, repr(p.t), repr(p.dof), repr(p.alpha), p.h])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> ComparisonReport:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != REPORT_HEADER:
            raise ValueError(f"unexpected report header {reader.fieldnames}")
        summaries, tests = [], []
        for row in reader:
            if row["section"] == "summary":
                summaries.append(
                    SummaryRow(row["label"], int(row["n"]), float(row["mean_rmse"]), float(row["std_rmse"]))
                )
            elif row["section"] == "ttest":
                tests.append(
                    PairRow(row["pair"], float(row["t"]), float(row["dof"]), float(row["alpha"]), int(row["h"]))
                )
            else:
                raise ValueError(f"unknown report section {row['section']!r}")
        return cls(summaries, tests)


def comparison_report(runs: Sequence[TrialSet], alpha: float = 0.05) -> ComparisonReport:
    """Mean/std per trial set and a t-test for every unordered pair.

    A single trial set yields a summary without test rows.
    """
    if not runs:
        raise ValueError("need at least one trial set")
    summaries = [SummaryRow(r.label, r.n, *mean_std(r)) for r in runs]
    tests = []
    for a, b in itertools.combinations(runs, 2):
        res = two_sample_t_test(a, b, alpha)
        tests.append(PairRow(f"{a.label} - {b.label}", res.t, res.dof, alpha, res.h))
    return ComparisonReport(summaries, tests)
