"""Reward smoothing, the one-tailed paired t-test and cross-run comparison tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BETACF_TOL = 1e-15
BETACF_MAX_ITER = 10_000
_TINY = 1e-300


class DegenerateVarianceError(ValueError):
    """Paired differences are all identical, so the t statistic is undefined."""


def running_average(series: Sequence[float], window: int) -> list[float]:
    """Trailing mean over ``window`` points; the first ``window - 1`` use the available prefix."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return []
    head = min(window - 1, x.size)
    prefix = np.cumsum(x[:head]) / np.arange(1, head + 1)
    full = sliding_window_view(x, window).mean(axis=1) if x.size >= window else np.empty(0)
    return np.concatenate([prefix, full]).tolist()


def smoothing_window(steps: int) -> int:
    return max(1, steps // 50)


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, BETACF_MAX_ITER + 1):
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
        if abs(delta - 1.0) < BETACF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"betainc needs 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_tail(t: float, df: float) -> float:
    """P(T > |t|)."""
    x = df / (df + t * t)
    return 0.5 * betainc(df / 2.0, 0.5, x)


def t_cdf(t: float, df: float) -> float:
    tail = _t_tail(t, df)
    return 1.0 - tail if t > 0 else tail


def t_sf(t: float, df: float) -> float:
    tail = _t_tail(t, df)
    return tail if t > 0 else 1.0 - tail


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float


def paired_t_test_one_tailed(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Paired t-test of ``b > a`` on d_i = b_i - a_i, sample (n-1) std."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length 1-d sequences")
    n = a.size
    if n < 2:
        raise ValueError(f"paired t-test needs at least 2 pairs, got {n}")
    d = b - a
    if np.all(d == d[0]):
        raise DegenerateVarianceError("all paired differences are identical")
    sd = float(np.std(d, ddof=1))
    if sd == 0.0 or not math.isfinite(float(np.mean(d)) / (sd / math.sqrt(n))):
        # spread underflows for subnormal differences
        raise DegenerateVarianceError("paired differences have no representable spread")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    df = n - 1
    return TTestResult(t, df, t_sf(t, df))


@dataclass
class SeedRow:
    seed: int
    accuracy_a: float
    accuracy_b: float
    final_reward_a: float
    final_reward_b: float

    @property
    def accuracy_diff(self) -> float:
        return self.accuracy_b - self.accuracy_a

    @property
    def final_reward_diff(self) -> float:
        return self.final_reward_b - self.final_reward_a


@dataclass
class Comparison:
    label_a: str
    label_b: str
    pairing: str
    rows: list[SeedRow] = field(default_factory=list)
    ttest: TTestResult | None = None
    ttest_note: str = ""

    def _mean(self, attr: str) -> float:
        return float(np.mean([getattr(r, attr) for r in self.rows]))

    def summary(self) -> dict[str, float]:
        keys = ("accuracy_a", "accuracy_b", "accuracy_diff", "final_reward_a", "final_reward_b", "final_reward_diff")
        return {k: self._mean(k) for k in keys}

    def to_dict(self) -> dict[str, Any]:
        rows = []
        for r in self.rows:
            row = asdict(r)
            row["accuracy_diff"] = r.accuracy_diff
            row["final_reward_diff"] = r.final_reward_diff
            rows.append(row)
        return {
            "label_a": self.label_a,
            "label_b": self.label_b,
            "pairing": self.pairing,
            "rows": rows,
            "mean": self.summary(),
            "ttest": asdict(self.ttest) if self.ttest else "n/a",
            "ttest_note": self.ttest_note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["accuracy_a", "accuracy_b", "accuracy_diff", "final_reward_a", "final_reward_b", "final_reward_diff"]
        w.writerow(["seed"] + cols)
        for r in self.rows:
            w.writerow([r.seed] + [repr(float(getattr(r, c))) for c in cols])
        mean = self.summary()
        w.writerow(["mean"] + [repr(mean[c]) for c in cols])
        if self.ttest:
            w.writerow(["ttest", "t", repr(self.ttest.t), "df", self.ttest.df, "p", repr(self.ttest.p)])
        else:
            w.writerow(["ttest", "n/a", self.ttest_note, "", "", "", ""])
        return buf.getvalue()


def _get(report: Any, key: str):
    return report[key] if isinstance(report, dict) else getattr(report, key)


def compare_runs(
    reports_a: Sequence[Any],
    reports_b: Sequence[Any],
    pairing: str = "question",
    label_a: str = "a",
    label_b: str = "b",
) -> Comparison:
    """Seed-matched comparison of two run sets, testing whether ``b`` beats ``a``.

    Each report exposes ``seed``, ``final_accuracy``, ``eval_scores`` (per
    evaluation question) and ``final_smoothed_reward``. With
    ``pairing="question"`` the t-test pairs per-question scores across all
    seeds; with ``pairing="seed"`` it pairs the per-seed final accuracies.
    A degenerate or too-small sample leaves ``ttest`` empty and sets a note.
    """
    if pairing not in ("question", "seed"):
        raise ValueError(f"pairing must be 'question' or 'seed', got {pairing!r}")
    by_seed_a = {int(_get(r, "seed")): r for r in reports_a}
    by_seed_b = {int(_get(r, "seed")): r for r in reports_b}
    if len(by_seed_a) != len(reports_a) or len(by_seed_b) != len(reports_b):
        raise ValueError("duplicate seeds within a run set")
    if set(by_seed_a) != set(by_seed_b) or not by_seed_a:
        raise ValueError(f"seed sets differ: {sorted(by_seed_a)} vs {sorted(by_seed_b)}")
    cmp = Comparison(label_a, label_b, pairing)
    scores_a: list[float] = []
    scores_b: list[float] = []
    for seed in sorted(by_seed_a):
        ra, rb = by_seed_a[seed], by_seed_b[seed]
        cmp.rows.append(
            SeedRow(
                seed,
                float(_get(ra, "final_accuracy")),
                float(_get(rb, "final_accuracy")),
                float(_get(ra, "final_smoothed_reward")),
                float(_get(rb, "final_smoothed_reward")),
            )
        )
        if pairing == "question":
            qa, qb = list(_get(ra, "eval_scores")), list(_get(rb, "eval_scores"))
            if len(qa) != len(qb):
                raise ValueError(f"seed {seed}: evaluation sets differ in size ({len(qa)} vs {len(qb)})")
            scores_a += qa
            scores_b += qb
        else:
            scores_a.append(cmp.rows[-1].accuracy_a)
            scores_b.append(cmp.rows[-1].accuracy_b)
    try:
        cmp.ttest = paired_t_test_one_tailed(scores_a, scores_b)
    except DegenerateVarianceError:
        cmp.ttest_note = "degenerate variance"
    except ValueError:
        cmp.ttest_note = "insufficient pairs"
    return cmp
