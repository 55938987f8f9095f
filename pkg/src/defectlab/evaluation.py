"""Classification and effort-aware measures.

Measures that are undefined on a given test set (a zero denominator, a
missing class) come back as NaN and are named in ``EvalResult.flags``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

MEASURES = ("recall", "precision", "pf", "auc", "popt20", "ifa")
LOWER_IS_BETTER = frozenset({"pf", "ifa"})
POPT_BUDGET = 0.20


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(pred, y) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=int)
    y = np.asarray(y, dtype=int)
    if len(pred) != len(y) or len(y) == 0:
        raise ValueError("predictions and labels must be nonempty and of equal length")
    return ConfusionMatrix(tp=int(np.sum((pred == 1) & (y == 1))), fp=int(np.sum((pred == 1) & (y == 0))),
                           tn=int(np.sum((pred == 0) & (y == 0))), fn=int(np.sum((pred == 0) & (y == 1))))


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


def recall(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fn)


def precision(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fp)


def pf(cm: ConfusionMatrix) -> float:
    return _ratio(cm.fp, cm.fp + cm.tn)


def auc(scores, y) -> float:
    """Probability that a random defective row outscores a random clean one (ties count half)."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=int)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        return math.nan
    ranks = rankdata(scores)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def inspection_order(scores, effort) -> np.ndarray:
    """Row indices by score descending, then effort ascending, then row index."""
    scores = np.asarray(scores, dtype=float)
    effort = np.asarray(effort, dtype=float)
    return np.lexsort((np.arange(len(scores)), effort, -scores))


def popt20(scores, y, effort) -> float:
    """Fraction of defective rows inspected within the first 20% of total effort.

    A row counts when the effort spent before reaching it is still under the
    budget, so the row that crosses the budget is included.
    """
    y = np.asarray(y, dtype=int)
    effort = np.asarray(effort, dtype=float)
    total = effort.sum()
    if y.sum() == 0 or total <= 0:
        return math.nan
    order = inspection_order(scores, effort)
    before = np.concatenate([[0.0], np.cumsum(effort[order])[:-1]])
    seen = before < POPT_BUDGET * total
    return float(y[order][seen].sum() / y.sum())


def ifa(scores, y, effort=None) -> float:
    """Clean rows inspected before the first defective one."""
    y = np.asarray(y, dtype=int)
    if y.sum() == 0:
        return math.nan
    if effort is None:
        effort = np.zeros(len(y))
    ranked = y[inspection_order(scores, effort)]
    return float(np.argmax(ranked == 1))


@dataclass
class EvalResult:
    recall: float
    precision: float
    pf: float
    auc: float
    popt20: float
    ifa: float
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in MEASURES}


def evaluate(scores, pred, y, effort) -> EvalResult:
    """All measures for one test set.

    A constant score vector ranks nothing, so its AUC is reported undefined
    here even though ``auc`` itself resolves the all-tie case to 0.5.
    """
    cm = confusion(pred, y)
    s = np.asarray(scores, dtype=float)
    ranked = len(s) > 0 and s.min() != s.max()
    values = {"recall": recall(cm), "precision": precision(cm), "pf": pf(cm),
              "auc": auc(s, y) if ranked else math.nan,
              "popt20": popt20(scores, y, effort), "ifa": ifa(scores, y, effort)}
    flags = [f"{m}_undefined" for m, v in values.items() if math.isnan(v)]
    return EvalResult(flags=flags, **values)

