"""Scott-Knott ranking with a bootstrap and A12 gate, plus Spearman correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata
from scipy.stats import t as student_t

from .errors import StatsError

A12_SMALL = 0.6
ALPHA = 0.10
BOOTSTRAPS = 1000


def a12(x: Sequence[float], y: Sequence[float]) -> float:
    """Probability that a value drawn from ``x`` exceeds one drawn from ``y`` (ties count half)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0 or len(y) == 0:
        raise StatsError("a12 needs two nonempty samples")
    ys = np.sort(y)
    lt = np.searchsorted(ys, x, side="left")
    le = np.searchsorted(ys, x, side="right")
    return float((lt.sum() + 0.5 * (le - lt).sum()) / (len(x) * len(y)))


def bootstrap_sig(x: Sequence[float], y: Sequence[float], B: int = BOOTSTRAPS, alpha: float = ALPHA,
                  seed: int = 0) -> tuple[bool, float]:
    """Two-sided bootstrap test of a mean difference under a mean-shifted null."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    observed = abs(x.mean() - y.mean())
    if observed == 0:
        return False, 1.0
    pooled = np.concatenate([x, y]).mean()
    x0 = x - x.mean() + pooled
    y0 = y - y.mean() + pooled
    rng = np.random.default_rng(seed)
    bx = x0[rng.integers(0, len(x0), size=(B, len(x0)))].mean(axis=1)
    by = y0[rng.integers(0, len(y0), size=(B, len(y0)))].mean(axis=1)
    # tolerance keeps float noise from counting a null draw as "at least as extreme"
    p = float(np.mean(np.abs(bx - by) >= observed - 1e-12 * max(1.0, observed)))
    return p < alpha, p


@dataclass(frozen=True)
class Split:
    cut: int
    gain: float


def expected_delta(left: np.ndarray, right: np.ndarray) -> float:
    both = np.concatenate([left, right])
    mu = both.mean()
    n = len(both)
    return len(left) / n * (left.mean() - mu) ** 2 + len(right) / n * (right.mean() - mu) ** 2


def best_split(values: Sequence[np.ndarray]) -> Split | None:
    """Boundary between consecutive groups that maximizes the expected squared mean shift.

    The first boundary wins ties.
    """
    best = None
    for cut in range(1, len(values)):
        gain = expected_delta(np.concatenate(values[:cut]), np.concatenate(values[cut:]))
        if best is None or gain > best.gain + 1e-15:
            best = Split(cut, gain)
    return best


@dataclass
class RankRow:
    group: str
    rank: int
    median: float
    a12_vs_next: float
    p: float


def scott_knott(groups: Mapping[str, Sequence[float]], seed: int = 0, direction: str = "max",
                B: int = BOOTSTRAPS, alpha: float = ALPHA, small: float = A12_SMALL) -> dict[str, int]:
    return {r.group: r.rank for r in scott_knott_table(groups, seed, direction, B, alpha, small)}


def scott_knott_table(groups: Mapping[str, Sequence[float]], seed: int = 0, direction: str = "max",
                      B: int = BOOTSTRAPS, alpha: float = ALPHA, small: float = A12_SMALL) -> list[RankRow]:
    """Rank groups (1 = best); ``direction`` is "max" when larger values are better, "min" otherwise.

    Groups are ordered best first by median (name breaks ties).  A segment is
    cut at the boundary with the largest expected mean shift and each side is
    ranked separately only when the bootstrap test is significant and the
    effect size is not small; otherwise the whole segment shares a rank.
    """
    if not groups:
        raise StatsError("scott_knott needs at least one group")
    if direction not in ("max", "min"):
        raise StatsError(f"direction must be max or min, not {direction!r}")
    sign = -1.0 if direction == "max" else 1.0
    names = sorted(groups)
    arrays = {}
    for n in names:
        v = np.asarray(groups[n], dtype=float)
        # sorted so bootstrap draws do not depend on the order values arrive in
        v = np.sort(v[~np.isnan(v)])
        if len(v) == 0:
            raise StatsError(f"group {n!r} has no values")
        arrays[n] = v
    order = sorted(names, key=lambda n: (sign * float(np.median(arrays[n])), n))
    vals = [arrays[n] for n in order]
    seg_of = [0] * len(order)
    counter = [0]

    def recurse(lo: int, hi: int) -> None:
        split = best_split(vals[lo:hi]) if hi - lo > 1 else None
        if split is not None:
            cut = lo + split.cut
            left, right = np.concatenate(vals[lo:cut]), np.concatenate(vals[cut:hi])
            sig, _ = bootstrap_sig(left, right, B=B, alpha=alpha, seed=seed)
            effect = a12(left, right)
            if sig and max(effect, 1 - effect) >= small:
                recurse(lo, cut)
                recurse(cut, hi)
                return
        counter[0] += 1
        for i in range(lo, hi):
            seg_of[i] = counter[0]

    recurse(0, len(order))
    rows = []
    for i, n in enumerate(order):
        if i + 1 < len(order):
            nxt = vals[i + 1]
            eff = a12(vals[i], nxt)
            _, p = bootstrap_sig(vals[i], nxt, B=B, alpha=alpha, seed=seed)
        else:
            eff, p = math.nan, math.nan
        rows.append(RankRow(n, seg_of[i], float(np.median(vals[i])), eff, p))
    return rows


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks; NaN when either vector has constant ranks."""
    return spearman_test(x, y)[0]


def spearman_test(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """(rho, two-sided p) with the p-value from the t approximation on n - 2 degrees of freedom."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise StatsError("spearman needs two equal-length vectors of at least 2 values")
    rx, ry = rankdata(x) - (len(x) + 1) / 2, rankdata(y) - (len(y) + 1) / 2
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0:
        return math.nan, math.nan
    rho = float(np.clip(rx @ ry / den, -1.0, 1.0))
    n = len(x)
    if n <= 2 or abs(rho) == 1.0:
        return rho, 0.0 if n > 2 else 1.0
    t = rho * math.sqrt((n - 2) / (1 - rho * rho))
    return rho, float(2 * student_t.sf(abs(t), n - 2))
