"""Seeded classifiers: Gaussian naive Bayes, logistic regression, linear SVM, random forest.

Every model exposes ``score`` (higher means more likely defective) and
``predict``.  Forests and logistic regression also report feature importances.
Tree growing and SVM training run under numba; each tree draws from its own
stream seeded by (seed, tree index), so results do not depend on scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numba
import numpy as np

from .errors import FitError, ScoreError, UnsupportedError

FORMAT = "defectlab-model"
FORMAT_VERSION = 1

DEFAULTS: dict[str, dict[str, Any]] = {
    "nb": {"var_smoothing": 1e-9},
    "lr": {"rate": 0.1, "epochs": 500, "l2": 1e-4},
    "svm": {"rate": 0.1, "epochs": 500, "l2": 1e-4},
    "rf": {"n_trees": 100, "max_features": "sqrt", "bootstrap": True, "min_split": 2},
}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in DEFAULTS:
            raise FitError(f"unknown learner {self.kind!r}; expected one of {sorted(DEFAULTS)}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise FitError(f"unknown {self.kind} parameters: {sorted(unknown)}")

    @property
    def hyper(self) -> dict:
        return {**DEFAULTS[self.kind], **self.params}


@dataclass
class Model:
    spec: ModelSpec
    n_features: int
    state: dict

    def score(self, X) -> np.ndarray:
        return score(self, X)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


# ------------------------------------------------------------------ trees


@numba.njit(cache=True)
def _gini(c0: float, c1: float) -> float:
    n = c0 + c1
    if n <= 0:
        return 0.0
    p = c1 / n
    return 2.0 * p * (1.0 - p)


@numba.njit(cache=True)
def _grow_tree(X, y, rows, mtry, min_split, seed):
    """Grow one tree on ``rows`` (row indices, repeats allowed) to purity.

    Returns node arrays (feature, threshold, left, right, count0, count1) and
    the per-feature weighted impurity decrease.
    """
    np.random.seed(seed)
    n_feat = X.shape[1]
    m = rows.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    count0 = np.zeros(cap)
    count1 = np.zeros(cap)
    decrease = np.zeros(n_feat)
    idx = rows.copy()
    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0], stack_lo[0], stack_hi[0] = 0, 0, m
    top = 1
    n_nodes = 1
    perm = np.arange(n_feat)
    while top > 0:
        top -= 1
        node, lo, hi = stack_node[top], stack_lo[top], stack_hi[top]
        c0 = 0.0
        c1 = 0.0
        for i in range(lo, hi):
            if y[idx[i]] == 1:
                c1 += 1.0
            else:
                c0 += 1.0
        count0[node], count1[node] = c0, c1
        n = hi - lo
        if n < min_split or c0 == 0.0 or c1 == 0.0:
            continue
        parent = _gini(c0, c1)
        # random feature order; examine at least mtry features, more if none splits yet
        for i in range(n_feat - 1, 0, -1):
            j = np.random.randint(0, i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        best_f = -1
        best_gain = -1.0
        best_thr = 0.0
        vals = np.empty(n)
        for k in range(n_feat):
            if k >= mtry and best_f >= 0:
                break
            f = perm[k]
            for i in range(n):
                vals[i] = X[idx[lo + i], f]
            order = np.argsort(vals, kind="mergesort")
            l0 = 0.0
            l1 = 0.0
            for i in range(n - 1):
                if y[idx[lo + order[i]]] == 1:
                    l1 += 1.0
                else:
                    l0 += 1.0
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if a < b:
                    nl = l0 + l1
                    nr = n - nl
                    gain = parent - (nl / n) * _gini(l0, l1) - (nr / n) * _gini(c0 - l0, c1 - l1)
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        thr = a + (b - a) / 2.0
                        best_thr = thr if thr < b else a
        if best_f < 0:
            continue
        # partition idx[lo:hi] in place, stable
        buf = idx[lo:hi].copy()
        p = lo
        for i in range(n):
            if X[buf[i], best_f] <= best_thr:
                idx[p] = buf[i]
                p += 1
        q = p
        for i in range(n):
            if X[buf[i], best_f] > best_thr:
                idx[q] = buf[i]
                q += 1
        feature[node] = best_f
        threshold[node] = best_thr
        decrease[best_f] += (n / m) * best_gain
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        stack_node[top], stack_lo[top], stack_hi[top] = right[node], p, hi
        top += 1
        stack_node[top], stack_lo[top], stack_hi[top] = left[node], lo, p
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            count0[:n_nodes], count1[:n_nodes], decrease)


@numba.njit(cache=True)
def _tree_votes(X, feature, threshold, left, right, count0, count1):
    out = np.zeros(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = 1.0 if count1[node] > count0[node] else 0.0
    return out


def _mtry(max_features, n_feat: int) -> int:
    if max_features == "sqrt":
        return max(1, int(math.floor(math.sqrt(n_feat))))
    if max_features in (None, "all"):
        return n_feat
    return max(1, min(n_feat, int(max_features)))


def _fit_rf(X: np.ndarray, y: np.ndarray, spec: ModelSpec) -> dict:
    h = spec.hyper
    n, f = X.shape
    mtry = _mtry(h["max_features"], f)
    trees, total = [], np.zeros(f)
    for t in range(int(h["n_trees"])):
        rng = np.random.default_rng([spec.seed, t])
        rows = rng.integers(0, n, size=n) if h["bootstrap"] else np.arange(n)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        feat, thr, lft, rgt, c0, c1, dec = _grow_tree(X, y, rows.astype(np.int64), mtry,
                                                      int(h["min_split"]), tree_seed)
        trees.append({"feature": feat, "threshold": thr, "left": lft, "right": rgt, "count0": c0, "count1": c1})
        total += dec
    total /= len(trees)
    s = total.sum()
    importances = total / s if s > 0 else total
    return {"trees": trees, "importances": importances}


def _score_rf(state: dict, X: np.ndarray) -> np.ndarray:
    votes = np.zeros(X.shape[0])
    for t in state["trees"]:
        votes += _tree_votes(X, t["feature"], t["threshold"], t["left"], t["right"], t["count0"], t["count1"])
    return votes / len(state["trees"])


# ------------------------------------------------------------------ logistic regression


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def logloss(beta: np.ndarray, b0: float, X: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray, float]:
    """Mean log-loss plus (l2/2)|beta|^2, with its gradient in beta and in the intercept."""
    z = X @ beta + b0
    # log(1 + e^z) - y z, computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * beta @ beta)
    r = _sigmoid(z) - y
    return loss, X.T @ r / len(y) + l2 * beta, float(r.mean())


def _fit_lr(X: np.ndarray, y: np.ndarray, spec: ModelSpec) -> dict:
    h = spec.hyper
    beta = np.zeros(X.shape[1])
    b0 = 0.0
    yf = y.astype(float)
    for _ in range(int(h["epochs"])):
        _, g, g0 = logloss(beta, b0, X, yf, h["l2"])
        beta -= h["rate"] * g
        b0 -= h["rate"] * g0
    return {"beta": beta, "intercept": b0}


# ------------------------------------------------------------------ linear SVM


@numba.njit(cache=True)
def _svm_sgd(X, s, l2, rate, epochs, seed):
    np.random.seed(seed)
    n, f = X.shape
    w = np.zeros(f)
    b = 0.0
    t = 0
    order = np.arange(n)
    for _ in range(epochs):
        for i in range(n - 1, 0, -1):
            j = np.random.randint(0, i + 1)
            order[i], order[j] = order[j], order[i]
        for k in range(n):
            i = order[k]
            eta = rate / (1.0 + l2 * rate * t)
            margin = s[i] * (X[i] @ w + b)
            w *= 1.0 - eta * l2
            if margin < 1.0:
                w += eta * s[i] * X[i]
                b += eta * s[i]
            t += 1
    return w, b


def _fit_svm(X: np.ndarray, y: np.ndarray, spec: ModelSpec) -> dict:
    h = spec.hyper
    s = np.where(y == 1, 1.0, -1.0)
    seed = int(np.random.default_rng(spec.seed).integers(0, 2**31 - 1))
    w, b = _svm_sgd(np.ascontiguousarray(X), s, float(h["l2"]), float(h["rate"]), int(h["epochs"]), seed)
    return {"beta": w, "intercept": float(b)}


# ------------------------------------------------------------------ naive Bayes


def _fit_nb(X: np.ndarray, y: np.ndarray, spec: ModelSpec) -> dict:
    floor = spec.hyper["var_smoothing"] * float(np.max(np.var(X, axis=0)))
    means = np.array([X[y == c].mean(axis=0) for c in (0, 1)])
    var = np.array([X[y == c].var(axis=0) for c in (0, 1)]) + floor
    if floor == 0:
        var = np.where(var == 0, 1e-12, var)
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    return {"means": means, "vars": var, "priors": priors}


def _score_nb(state: dict, X: np.ndarray) -> np.ndarray:
    logp = []
    for c in (0, 1):
        mu, var = state["means"][c], state["vars"][c]
        ll = -0.5 * np.sum(np.log(2 * np.pi * var) + (X - mu) ** 2 / var, axis=1)
        logp.append(math.log(state["priors"][c]) + ll)
    return np.exp(logp[1] - np.logaddexp(logp[0], logp[1]))


# ------------------------------------------------------------------ public API


_FIT = {"rf": _fit_rf, "lr": _fit_lr, "svm": _fit_svm, "nb": _fit_nb}


def _as_xy(train, y=None) -> tuple[np.ndarray, np.ndarray]:
    if y is None:
        X, y = train.X, train.y
    else:
        X = train
    return np.ascontiguousarray(np.asarray(X, dtype=float)), np.asarray(y, dtype=np.int64)


def fit(spec: ModelSpec, train, y=None) -> Model:
    """Fit ``spec`` on a Dataset, or on a feature matrix and label vector."""
    X, y = _as_xy(train, y)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise FitError("training data must be a nonempty matrix with one label per row")
    if len(np.unique(y)) < 2:
        raise FitError("training data contains a single class")
    if np.isnan(X).any():
        raise FitError("training data contains missing values; preprocess first")
    return Model(spec, X.shape[1], _FIT[spec.kind](X, y, spec))


def _check(model: Model, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ScoreError(f"expected {model.n_features} features, got {X.shape[-1] if X.ndim else 0}")
    return np.ascontiguousarray(X)


def score(model: Model, X) -> np.ndarray:
    """Vote fraction (rf), probability (lr, nb) or signed margin (svm)."""
    X = _check(model, X)
    kind, st = model.spec.kind, model.state
    if kind == "rf":
        return _score_rf(st, X)
    if kind == "nb":
        return _score_nb(st, X)
    z = X @ st["beta"] + st["intercept"]
    return _sigmoid(z) if kind == "lr" else z


def predict(model: Model, X) -> np.ndarray:
    s = score(model, X)
    if model.spec.kind == "svm":
        return (s > 0).astype(int)
    return (s > 0.5).astype(int)


def feature_importance(model: Model) -> np.ndarray:
    if model.spec.kind == "rf":
        return model.state["importances"].copy()
    if model.spec.kind == "lr":
        return np.abs(model.state["beta"])
    raise UnsupportedError(f"{model.spec.kind} models have no feature importance")


# ------------------------------------------------------------------ persistence


def _encode(v: Any) -> Any:
    if isinstance(v, np.ndarray):
        return {"__array__": v.tolist(), "dtype": str(v.dtype)}
    if isinstance(v, dict):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_encode(x) for x in v]
    return v


def _decode(v: Any) -> Any:
    if isinstance(v, dict):
        if "__array__" in v:
            return np.asarray(v["__array__"], dtype=v["dtype"])
        return {k: _decode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_decode(x) for x in v]
    return v


def save_model(model: Model, path: str | Path) -> None:
    doc = {"format": FORMAT, "version": FORMAT_VERSION, "kind": model.spec.kind, "seed": model.spec.seed,
           "params": model.spec.params, "n_features": model.n_features, "state": _encode(model.state)}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> Model:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
        raise FitError(f"{path}: not a version {FORMAT_VERSION} model document")
    spec = ModelSpec(doc["kind"], doc["seed"], doc["params"])
    return Model(spec, doc["n_features"], _decode(doc["state"]))
