"""Datasets: joining metric rows, preprocessing, SMOTE and train/test split plans."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, ResampleError, SplitError
from .process_metrics import PROCESS_FEATURES, ProcessRow
from .product_metrics import PRODUCT_COLUMNS, ProductRow

log = logging.getLogger(__name__)

MODES = {"P": "process", "C": "product", "P+C": "combined",
         "process": "process", "product": "product", "combined": "combined"}
MODE_SHORT = {"process": "P", "product": "C", "combined": "P+C"}


def canonical_mode(mode: str) -> str:
    try:
        return MODES[mode]
    except KeyError:
        raise DataError(f"unknown mode {mode!r}; expected P, C or P+C") from None


@dataclass
class Dataset:
    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    effort: np.ndarray
    projects: np.ndarray
    files: np.ndarray
    releases: np.ndarray
    commits: np.ndarray
    mode: str = "process"
    granularity: str = "file"
    level: str = "jit"
    notes: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.y)
        for name in ("X", "effort", "projects", "files", "releases", "commits"):
            if len(getattr(self, name)) != n:
                raise DataError(f"{name} has {len(getattr(self, name))} rows, labels have {n}")
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise DataError("feature matrix does not match feature names")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return replace(self, X=self.X[idx], y=self.y[idx], effort=self.effort[idx],
                       projects=self.projects[idx], files=self.files[idx],
                       releases=self.releases[idx], commits=self.commits[idx], notes=dict(self.notes))

    def columns(self, names: Sequence[str]) -> "Dataset":
        pos = [self.feature_names.index(n) for n in names]
        return replace(self, feature_names=list(names), X=self.X[:, pos], notes=dict(self.notes))

    @property
    def n_releases(self) -> int:
        return len(np.unique(self.releases))


def _empty_meta(n: int) -> dict:
    return {"projects": np.empty(n, dtype=object), "files": np.empty(n, dtype=object),
            "releases": np.zeros(n, dtype=int), "commits": np.empty(n, dtype=object)}


def concat(datasets: Sequence[Dataset]) -> Dataset:
    if not datasets:
        raise DataError("nothing to concatenate")
    names = datasets[0].feature_names
    for d in datasets[1:]:
        if d.feature_names != names:
            raise DataError("feature names differ between datasets")
    return replace(datasets[0],
                   X=np.vstack([d.X for d in datasets]), y=np.concatenate([d.y for d in datasets]),
                   effort=np.concatenate([d.effort for d in datasets]),
                   projects=np.concatenate([d.projects for d in datasets]),
                   files=np.concatenate([d.files for d in datasets]),
                   releases=np.concatenate([d.releases for d in datasets]),
                   commits=np.concatenate([d.commits for d in datasets]), notes={})


# ------------------------------------------------------------------ assembly


def package_of(file_id: str) -> str:
    path = file_id.split("#", 1)[0]
    return path.rsplit("/", 1)[0] if "/" in path else "."


def assemble(process_rows: Sequence[ProcessRow], product_rows: dict[tuple[str, str], ProductRow] | None = None,
             mode: str = "process", granularity: str = "file", level: str = "jit",
             project: str = "project") -> Dataset:
    """Join process and product rows on (file, commit) into a Dataset.

    Labels and release indices always come from the process rows.  Product
    and combined modes keep only rows present in both inputs; the number of
    dropped rows is recorded in ``notes["dropped"]``.
    """
    mode = canonical_mode(mode)
    if granularity not in ("file", "package"):
        raise DataError(f"unknown granularity {granularity!r}")
    if level not in ("jit", "release"):
        raise DataError(f"unknown level {level!r}")
    if mode != "process" and not product_rows:
        raise DataError(f"mode {MODE_SHORT[mode]} needs product metrics")
    product_cols = PRODUCT_COLUMNS
    names = {"process": PROCESS_FEATURES, "product": product_cols,
             "combined": PROCESS_FEATURES + product_cols}[mode]
    rows, dropped = [], 0
    for r in process_rows:
        prod = None
        if mode != "process":
            prod = product_rows.get((r.commit_hash, r.canonical_id))  # type: ignore[union-attr]
            if prod is None:
                dropped += 1
                continue
        values = []
        if mode != "product":
            values += [float(getattr(r, k)) for k in PROCESS_FEATURES]
        if prod is not None:
            values += [float(prod.metrics.get(k, np.nan)) for k in product_cols]
        if mode == "process":
            effort = float(r.lt)
        else:
            effort = float(prod.metrics.get("CountLineCode", r.lt))  # type: ignore[union-attr]
        rows.append((r, values, effort))
    if not rows:
        raise DataError("no overlapping keys")
    if dropped:
        log.info("%s: %d process rows had no product metrics and were dropped", project, dropped)
    n = len(rows)
    meta = _empty_meta(n)
    meta["projects"][:] = project
    for i, (r, _, _) in enumerate(rows):
        meta["files"][i] = r.canonical_id
        meta["commits"][i] = r.commit_hash
        meta["releases"][i] = r.release_index
    ds = Dataset(list(names), np.array([v for _, v, _ in rows], dtype=float),
                 np.array([r.defective for r, _, _ in rows], dtype=int),
                 np.array([e for _, _, e in rows], dtype=float), mode=mode, granularity="file",
                 level="jit", notes={"dropped": dropped}, **meta)
    if level == "release":
        ds = to_release_level(ds)
    if granularity == "package":
        ds = aggregate_packages(ds)
    return ds


def to_release_level(ds: Dataset) -> Dataset:
    """One row per (file, release): the file's last change in the release, defective if any change was."""
    if ds.level == "release":
        return ds
    last: dict[tuple[str, str, int], int] = {}
    hit: dict[tuple[str, str, int], int] = {}
    for i in range(len(ds)):
        key = (ds.projects[i], ds.files[i], int(ds.releases[i]))
        last[key] = i
        hit[key] = max(hit.get(key, 0), int(ds.y[i]))
    order = sorted(last.values())
    out = ds.subset(order)
    out.y = np.array([hit[(ds.projects[i], ds.files[i], int(ds.releases[i]))] for i in order], dtype=int)
    out.level = "release"
    return out


def aggregate_packages(ds: Dataset) -> Dataset:
    """Median of each feature over the files of a package within one period; defective if any file is."""
    if ds.granularity == "package":
        return ds
    groups: dict[tuple, list[int]] = {}
    for i in range(len(ds)):
        period = ds.commits[i] if ds.level == "jit" else int(ds.releases[i])
        groups.setdefault((ds.projects[i], package_of(ds.files[i]), period), []).append(i)
    keys = list(groups)
    n = len(keys)
    X = np.empty((n, len(ds.feature_names)))
    y = np.empty(n, dtype=int)
    effort = np.empty(n)
    meta = _empty_meta(n)
    for g, key in enumerate(keys):
        idx = groups[key]
        block = ds.X[idx]
        with np.errstate(all="ignore"):
            X[g] = np.nanmedian(block, axis=0) if np.isnan(block).any() else np.median(block, axis=0)
        y[g] = int(ds.y[idx].max())
        effort[g] = float(ds.effort[idx].sum())
        meta["projects"][g] = key[0]
        meta["files"][g] = key[1]
        meta["releases"][g] = int(ds.releases[idx[-1]])
        meta["commits"][g] = ds.commits[idx[-1]]
    return replace(ds, X=X, y=y, effort=effort, granularity="package", notes=dict(ds.notes), **meta)


def select_mode(ds: Dataset, mode: str) -> Dataset:
    """Restrict a combined dataset to one feature family and recompute effort for it."""
    mode = canonical_mode(mode)
    have = set(ds.feature_names)
    proc = [f for f in ds.feature_names if f in PROCESS_FEATURES]
    prod = [f for f in ds.feature_names if f not in PROCESS_FEATURES]
    names = {"process": proc, "product": prod, "combined": proc + prod}[mode]
    if not names:
        raise DataError(f"dataset has no {mode} features")
    out = ds.columns(names)
    out.mode = mode
    if mode == "process" and "lt" in have:
        out.effort = ds.X[:, ds.feature_names.index("lt")].copy()
    elif mode != "process" and "CountLineCode" in have:
        col = ds.X[:, ds.feature_names.index("CountLineCode")]
        out.effort = np.where(np.isnan(col), ds.effort, col)
    return out


# ------------------------------------------------------------------ preprocessing


@dataclass
class Preprocessor:
    """Median imputation, constant-column removal and min-max scaling, fit on training rows only."""

    keep: np.ndarray
    medians: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    imputed: list[str]
    dropped: list[str]

    @classmethod
    def fit(cls, X: np.ndarray, names: Sequence[str]) -> "Preprocessor":
        if len(X) == 0:
            raise DataError("training set is empty")
        missing = np.isnan(X)
        with np.errstate(all="ignore"):
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                medians = np.nanmedian(X, axis=0)
        filled = np.where(missing, medians, X)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lo = np.nanmin(filled, axis=0) if len(filled) else np.zeros(X.shape[1])
            hi = np.nanmax(filled, axis=0) if len(filled) else np.zeros(X.shape[1])
        keep = ~np.isnan(medians) & (hi > lo)
        imputed = [n for n, m, k in zip(names, missing.any(axis=0), keep) if m and k]
        dropped = [n for n, k in zip(names, keep) if not k]
        return cls(keep, medians, lo, hi, imputed, dropped)

    def transform(self, X: np.ndarray) -> np.ndarray:
        filled = np.where(np.isnan(X), self.medians, X)[:, self.keep]
        scaled = (filled - self.lo[self.keep]) / (self.hi[self.keep] - self.lo[self.keep])
        return np.clip(scaled, 0.0, 1.0)


def preprocess(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    if train.feature_names != test.feature_names:
        raise DataError("train and test feature names differ")
    pp = Preprocessor.fit(train.X, train.feature_names)
    names = [n for n, k in zip(train.feature_names, pp.keep) if k]
    notes = {"imputed": pp.imputed, "dropped_features": pp.dropped}
    tr = replace(train, feature_names=names, X=pp.transform(train.X), notes={**train.notes, **notes})
    te = replace(test, feature_names=names, X=pp.transform(test.X), notes={**test.notes, **notes})
    return tr, te


# ------------------------------------------------------------------ SMOTE


@dataclass(frozen=True)
class ResampleConfig:
    k: int = 5
    seed: int = 0


def smote(X: np.ndarray, y: np.ndarray, cfg: ResampleConfig = ResampleConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Oversample the minority class with interpolated neighbours until both classes are equal.

    Returns the original rows followed by the synthetic ones.
    """
    y = np.asarray(y, dtype=int)
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0:
        raise ResampleError("SMOTE needs both classes in the training data")
    minority = int(np.argmin(counts)) if counts[0] != counts[1] else 1
    need = int(counts.max() - counts.min())
    if need == 0:
        return X.copy(), y.copy()
    pool = X[y == minority]
    m = len(pool)
    if m < 2:
        raise ResampleError("SMOTE needs at least two minority rows")
    k = min(cfg.k, m - 1)
    rng = np.random.default_rng(cfg.seed)
    _, nn = cKDTree(pool).query(pool, k=k + 1)
    nn = np.asarray(nn).reshape(m, k + 1)
    neighbors = np.empty((m, k), dtype=int)
    for i in range(m):
        row = [j for j in nn[i] if j != i][:k]
        neighbors[i] = row
    reps = -(-need // m)
    base = np.concatenate([rng.permutation(m) for _ in range(reps)])[:need]
    pick = neighbors[base, rng.integers(0, k, size=need)]
    u = rng.random(need)[:, None]
    synthetic = pool[base] + u * (pool[pick] - pool[base])
    return (np.vstack([X, synthetic]),
            np.concatenate([y, np.full(need, minority, dtype=int)]))


# ------------------------------------------------------------------ splits


@dataclass
class SplitPlan:
    kind: str
    pairs: list[tuple[np.ndarray, np.ndarray]]
    labels: list[str]
    seed: int | None = None
    stratified: bool = True


def make_splits(ds: Dataset, kind: str = "cross_val", seed: int = 0, repeats: int = 5,
                folds: int = 5) -> SplitPlan:
    if kind == "cross_val":
        counts = np.bincount(ds.y, minlength=2)
        if counts.min() < folds:
            raise SplitError(f"cross-validation needs at least {folds} rows of each class, got {counts.tolist()}")
        pairs, labels = [], []
        pos_all = np.flatnonzero(ds.y == 1)
        neg_all = np.flatnonzero(ds.y == 0)
        for r in range(repeats):
            rng = np.random.default_rng([seed, r])
            pos, neg = rng.permutation(pos_all), rng.permutation(neg_all)
            bins = np.empty(len(ds), dtype=int)
            bins[pos] = np.arange(len(pos)) % folds
            bins[neg] = (np.arange(len(neg)) + len(pos)) % folds
            for f in range(folds):
                pairs.append((np.flatnonzero(bins != f), np.flatnonzero(bins == f)))
                labels.append(f"r{r + 1}f{f + 1}")
        return SplitPlan(kind, pairs, labels, seed)
    if kind == "release_based":
        rels = np.unique(ds.releases)
        if len(rels) < 4:
            raise SplitError(f"insufficient releases: need at least 4, got {len(rels)}")
        train = np.flatnonzero(np.isin(ds.releases, rels[:-3]))
        pairs = [(train, np.flatnonzero(ds.releases == r)) for r in rels[-3:]]
        return SplitPlan(kind, pairs, ["R-2", "R-1", "R"], seed)
    raise SplitError(f"unknown split kind {kind!r}")


# ------------------------------------------------------------------ CSV


def _fmt(v: float) -> str:
    if np.isnan(v):
        return ""
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_dataset(ds: Dataset, out: str | Path) -> None:
    """Write ``ds`` as CSV.

    The first line is a comment carrying mode, granularity and level; the
    header is ``project,file,release,commit,effort,defective`` followed by the
    feature names.  Missing feature values are empty cells.
    """
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# defectlab-dataset mode={ds.mode} granularity={ds.granularity} level={ds.level}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["project", "file", "release", "commit", "effort", "defective"] + ds.feature_names)
        for i in range(len(ds)):
            w.writerow([ds.projects[i], ds.files[i], int(ds.releases[i]), ds.commits[i],
                        _fmt(ds.effort[i]), int(ds.y[i])] + [_fmt(v) for v in ds.X[i]])


def read_dataset(path: str | Path) -> Dataset:
    attrs = {"mode": "process", "granularity": "file", "level": "jit"}
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for part in first[1:].split()[1:]:
                k, _, v = part.partition("=")
                attrs[k] = v
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:6] != ["project", "file", "release", "commit", "effort", "defective"]:
            raise DataError(f"{path}: not a dataset CSV")
        names = header[6:]
        recs = list(reader)
    n = len(recs)
    meta = _empty_meta(n)
    X = np.empty((n, len(names)))
    y = np.empty(n, dtype=int)
    effort = np.empty(n)
    for i, r in enumerate(recs):
        meta["projects"][i], meta["files"][i] = r[0], r[1]
        meta["releases"][i], meta["commits"][i] = int(r[2]), r[3]
        effort[i] = float(r[4]) if r[4] else np.nan
        y[i] = int(r[5])
        X[i] = [float(v) if v != "" else np.nan for v in r[6:]]
    return Dataset(names, X, y, effort, mode=attrs["mode"], granularity=attrs["granularity"],
                   level=attrs["level"], **meta)


def dataset_from_arrays(X: np.ndarray, y: Iterable[int], feature_names: Sequence[str] | None = None,
                        effort: Iterable[float] | None = None, project: str = "synthetic",
                        files: Sequence[str] | None = None, releases: Sequence[int] | None = None,
                        commits: Sequence[str] | None = None, mode: str = "process") -> Dataset:
    X = np.asarray(X, dtype=float)
    y = np.asarray(list(y), dtype=int)
    n = len(y)
    meta = _empty_meta(n)
    meta["projects"][:] = project
    meta["files"][:] = list(files) if files is not None else [f"f{i}" for i in range(n)]
    meta["releases"][:] = list(releases) if releases is not None else 1
    meta["commits"][:] = list(commits) if commits is not None else [f"c{i}" for i in range(n)]
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    eff = np.asarray(list(effort), dtype=float) if effort is not None else np.ones(n)
    return Dataset(names, X, y, eff, mode=mode, **meta)
