"""Experiment runner: config parsing, per-question drivers, manifests.

Config files are flat ``key = value`` lines; ``#`` starts a comment and list
values are comma separated.  Keys:

projects        dataset CSVs (globs allowed, relative to the config file)
seed            integer, required
modes           subset of P, C, P+C                      (default P, C, P+C)
learners        subset of nb, lr, svm, rf                (default all four)
split           cross_val or release_based               (default cross_val)
repeats, folds  cross-validation shape                   (default 5, 5)
measures        subset of recall, precision, pf, auc, popt20, ifa
granularity     file or package                          (default file)
level           jit or release                           (default jit)
smote           true or false                            (default true)
small_samples   samples drawn for the small-scale importance study (default 20)
small_size      projects per sample                      (default 5)
rq6_score       model or density                         (default model)
jobs            worker processes                         (default 1)
"""

from __future__ import annotations

import csv
import glob
import hashlib
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import __version__
from .dataset import (MODE_SHORT, Dataset, aggregate_packages, canonical_mode, concat, make_splits, package_of,
                      preprocess, read_dataset, select_mode, smote, to_release_level, ResampleConfig)
from .errors import ConfigError, DataError, FitError, ResampleError, SplitError, ValidationError
from .evaluation import LOWER_IS_BETTER, MEASURES, ConfusionMatrix, EvalResult, confusion, evaluate, pf, recall
from .learners import ModelSpec, feature_importance, fit, predict, score
from .process_metrics import PROCESS_FEATURES
from .stats import scott_knott_table, spearman_test

log = logging.getLogger(__name__)

LEARNERS = ("nb", "lr", "svm", "rf")
RESULT_HEADER = ["project", "mode", "granularity", "level", "learner", "fold_or_release"] + list(MEASURES) + ["flags"]
RANK_HEADER = ["group", "rank", "median", "a12_vs_next", "p"]


# ------------------------------------------------------------------ config


@dataclass
class ExperimentConfig:
    projects: list[Path]
    seed: int
    modes: list[str] = field(default_factory=lambda: ["P", "C", "P+C"])
    learners: list[str] = field(default_factory=lambda: list(LEARNERS))
    split: str = "cross_val"
    repeats: int = 5
    folds: int = 5
    measures: list[str] = field(default_factory=lambda: list(MEASURES))
    granularity: str = "file"
    level: str = "jit"
    smote: bool = True
    small_samples: int = 20
    small_size: int = 5
    rq6_score: str = "model"
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.modes:
            raise ConfigError("modes must name at least one of P, C, P+C")
        try:
            self.modes = [MODE_SHORT[canonical_mode(m)] for m in self.modes]
        except DataError as exc:
            raise ConfigError(str(exc)) from None
        if not self.learners or set(self.learners) - set(LEARNERS):
            raise ConfigError(f"learners must be a nonempty subset of {', '.join(LEARNERS)}")
        if set(self.measures) - set(MEASURES) or not self.measures:
            raise ConfigError(f"measures must be a nonempty subset of {', '.join(MEASURES)}")
        if self.split not in ("cross_val", "release_based"):
            raise ConfigError(f"unknown split {self.split!r}")
        if self.granularity not in ("file", "package") or self.level not in ("jit", "release"):
            raise ConfigError("granularity must be file|package and level jit|release")
        if self.rq6_score not in ("model", "density"):
            raise ConfigError("rq6_score must be model or density")
        if min(self.repeats, self.folds, self.small_samples, self.small_size, self.jobs) < 1:
            raise ConfigError("repeats, folds, small_samples, small_size and jobs must be positive")
        if not self.projects:
            raise ConfigError("no projects configured")
        missing = [str(p) for p in self.projects if not Path(p).is_file()]
        if missing:
            raise ConfigError(f"dataset not found: {', '.join(missing)}")

    def digest(self) -> str:
        d = asdict(self)
        # names only; input contents are pinned by the manifest's digests
        d["projects"] = [Path(p).name for p in self.projects]
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_LIST_KEYS = {"projects", "modes", "learners", "measures"}
_INT_KEYS = {"seed", "repeats", "folds", "small_samples", "small_size", "jobs"}


def parse_config(text: str, base: Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    base = base or Path.cwd()
    raw: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {n}: expected key = value")
        if key in raw:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        raw[key] = value.strip()
    raw.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "seed" not in raw:
        raise ConfigError("seed is required")
    kw: dict = {}
    for key, value in raw.items():
        if key in _LIST_KEYS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            if key == "projects":
                paths: list[Path] = []
                for item in items:
                    pattern = item if Path(item).is_absolute() else str(base / item)
                    hits = sorted(glob.glob(pattern)) if any(ch in item for ch in "*?[") else [pattern]
                    if not hits:
                        raise ConfigError(f"no datasets match {item!r}")
                    paths.extend(Path(h) for h in hits)
                kw[key] = paths
            else:
                kw[key] = items
        elif key in _INT_KEYS:
            try:
                kw[key] = int(value)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, not {value!r}") from None
        elif key == "smote":
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"smote must be true or false, not {value!r}")
            kw[key] = value.lower() in ("true", "1", "yes")
        else:
            kw[key] = value
    return ExperimentConfig(**kw)


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, p.parent, overrides)


# ------------------------------------------------------------------ helpers


def derive_seed(*parts: int | str) -> int:
    ints = [p if isinstance(p, int) else zlib.crc32(p.encode()) for p in parts]
    return int(np.random.default_rng(ints).integers(0, 2**31 - 1))


def prepare(ds: Dataset, mode: str, granularity: str = "file", level: str = "jit") -> Dataset:
    out = select_mode(ds, mode)
    if level == "release":
        out = to_release_level(out)
    if granularity == "package":
        out = aggregate_packages(out)
    return out


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _project_name(ds: Dataset) -> str:
    return str(ds.projects[0]) if len(ds) else "?"


@dataclass
class Skip:
    project: str
    stage: str
    reason: str

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class FoldResult:
    scores: np.ndarray
    pred: np.ndarray
    test: Dataset
    train: Dataset
    model: object
    result: EvalResult


def train_and_test(train: Dataset, test: Dataset, learner: str, seed: int, use_smote: bool = True) -> FoldResult:
    """Preprocess on the training rows, optionally SMOTE them, fit, and evaluate on the test rows."""
    tr, te = preprocess(train, test)
    X, y = tr.X, tr.y
    if use_smote:
        X, y = smote(X, y, ResampleConfig(seed=derive_seed(seed, "smote")))
    model = fit(ModelSpec(learner, derive_seed(seed, learner)), X, y)
    s = score(model, te.X)
    p = predict(model, te.X)
    return FoldResult(s, p, te, tr, model, evaluate(s, p, te.y, te.effort))


_RECOVERABLE = (DataError, ResampleError, FitError, SplitError)


def _run_cell(args) -> tuple[list[list[str]], list[Skip]]:
    ds, mode, learner, plan, seed, use_smote, granularity, level = args
    name = _project_name(ds)
    rows, skips = [], []
    for fold, ((tr, te), label) in enumerate(zip(plan.pairs, plan.labels)):
        try:
            res = train_and_test(ds.subset(tr), ds.subset(te), learner, derive_seed(seed, name, fold), use_smote).result
        except _RECOVERABLE as exc:
            skips.append(Skip(name, f"{mode}/{learner}/{label}", str(exc)))
            continue
        rows.append([name, mode, granularity, level, learner, label]
                    + [_fmt(getattr(res, m)) for m in MEASURES] + [";".join(res.flags)])
    return rows, skips


def _map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


class Corpus:
    """Datasets loaded once per run, in config order."""

    def __init__(self, cfg: ExperimentConfig, datasets: Sequence[Dataset] | None = None) -> None:
        self.cfg = cfg
        self.datasets = list(datasets) if datasets is not None else [read_dataset(p) for p in cfg.projects]


def _has_mode(ds: Dataset, mode: str) -> bool:
    proc = any(f in PROCESS_FEATURES for f in ds.feature_names)
    prod = any(f not in PROCESS_FEATURES for f in ds.feature_names)
    return {"P": proc, "C": prod, "P+C": proc and prod}[mode]


def rq_performance(cfg: ExperimentConfig, corpus: Corpus, granularity: str | None = None,
                   level: str | None = None, split: str | None = None) -> tuple[list[list[str]], list[Skip]]:
    """One result row per (project, mode, learner, fold); failures land in the skip list."""
    granularity = granularity or cfg.granularity
    level = level or cfg.level
    split = split or cfg.split
    cells, skips = [], []
    for ds in corpus.datasets:
        name = _project_name(ds)
        for mode in cfg.modes:
            if not _has_mode(ds, mode):
                skips.append(Skip(name, mode, f"dataset has no {canonical_mode(mode)} features"))
                continue
            prepared = prepare(ds, mode, granularity, level)
            try:
                plan = make_splits(prepared, split, seed=derive_seed(cfg.seed, name), repeats=cfg.repeats,
                                   folds=cfg.folds)
            except SplitError as exc:
                skips.append(Skip(name, mode, str(exc)))
                continue
            for learner in cfg.learners:
                cells.append((prepared, mode, learner, plan, cfg.seed, cfg.smote, granularity, level))
    rows = []
    for r, s in _map(_run_cell, cells, cfg.jobs):
        rows.extend(r)
        skips.extend(s)
    return rows, skips


# ------------------------------------------------------------------ summaries


def _value(row: dict, measure: str) -> float:
    v = row[measure]
    return float(v) if v not in ("", None) else math.nan


def per_project_medians(rows: Iterable[dict], measure: str, key: Callable[[dict], str]) -> dict[str, list[float]]:
    """group -> list of per-project medians (undefined values excluded)."""
    buckets: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        v = _value(r, measure)
        if not math.isnan(v):
            buckets.setdefault((key(r), r["project"]), []).append(v)
    out: dict[str, list[float]] = {}
    for (g, _), vals in sorted(buckets.items()):
        out.setdefault(g, []).append(float(np.median(vals)))
    return out


def learner_mode(r: dict) -> str:
    return f"{r['learner'].upper()}/{r['mode']}"


def rank_rows(rows: list[dict], measures: Sequence[str], key: Callable[[dict], str], seed: int,
              prefix: Sequence[str] = ()) -> list[list[str]]:
    out = []
    for m in measures:
        groups = per_project_medians(rows, m, key)
        if not groups:
            continue
        direction = "min" if m in LOWER_IS_BETTER else "max"
        for r in scott_knott_table(groups, seed=seed, direction=direction):
            out.append(list(prefix) + [m, r.group, str(r.rank), _fmt(r.median), _fmt(r.a12_vs_next), _fmt(r.p)])
    return out


def variance_report(rows: list[dict], measures: Sequence[str]) -> list[list[str]]:
    """Median and interquartile range of per-project medians, per learner and mode."""
    out = []
    for m in measures:
        for g, vals in sorted(per_project_medians(rows, m, learner_mode).items()):
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            learner, mode = g.split("/", 1)
            out.append([learner.lower(), mode, m, _fmt(med), _fmt(q3 - q1), str(len(vals))])
    return out


def as_dicts(rows: list[list[str]], header: Sequence[str] = RESULT_HEADER) -> list[dict]:
    return [dict(zip(header, r)) for r in rows]


# ------------------------------------------------------------------ research questions


def rq3_granularity(cfg: ExperimentConfig, corpus: Corpus) -> tuple[list[list[str]], list[Skip]]:
    keep, skips = [], []
    for ds in corpus.datasets:
        if len({package_of(f) for f in ds.files}) < 2:
            skips.append(Skip(_project_name(ds), "rq3", "single package; no package structure"))
        else:
            keep.append(ds)
    sub = Corpus(cfg, keep)
    rows: list[list[str]] = []
    for gran in ("file", "package"):
        r, s = rq_performance(cfg, sub, granularity=gran)
        rows.extend(r)
        skips.extend(s)
    return rows, skips


def rq4_stability(cfg: ExperimentConfig, corpus: Corpus) -> tuple[list[list[str]], list[Skip]]:
    return rq_performance(cfg, corpus, split="release_based")


def stasis_pairs(ds: Dataset) -> tuple[list[tuple[str, str, str, float]], int, int]:
    """Spearman between the metric vectors of each file's consecutive appearances.

    Returns (file, from, to, rho) tuples plus counts of single-appearance
    files and of pairs with an undefined correlation.
    """
    by_file: dict[str, list[int]] = {}
    for i, f in enumerate(ds.files):
        by_file.setdefault(f, []).append(i)
    pairs, single, undefined = [], 0, 0
    for f, idx in by_file.items():
        if len(idx) < 2:
            single += 1
            continue
        for a, b in zip(idx, idx[1:]):
            rho, _ = spearman_test(ds.X[a], ds.X[b])
            if math.isnan(rho):
                undefined += 1
                continue
            tag = (lambda i: str(ds.releases[i]) if ds.level == "release" else str(ds.commits[i]))
            pairs.append((f, tag(a), tag(b), rho))
    return pairs, single, undefined


STASIS_CONFIGS = {"P_R": ("P", "file", "release"), "C_R": ("C", "file", "release"),
                  "P_J": ("P", "file", "jit"), "C_J": ("C", "file", "jit"), "P_P_J": ("P", "package", "jit")}


def rq5_stasis(datasets: Sequence[Dataset]) -> tuple[list[list[str]], list[list[str]], list[Skip]]:
    detail, summary, skips = [], [], []
    for cname, (mode, gran, level) in STASIS_CONFIGS.items():
        rhos, singles, undef = [], 0, 0
        for ds in datasets:
            if not _has_mode(ds, mode):
                skips.append(Skip(_project_name(ds), cname, f"dataset has no {canonical_mode(mode)} features"))
                continue
            view = prepare(ds, mode, gran, level)
            pairs, s, u = stasis_pairs(view)
            singles += s
            undef += u
            for f, a, b, rho in pairs:
                detail.append([cname, _project_name(ds), f, a, b, _fmt(rho)])
                rhos.append(rho)
        if rhos:
            q1, med, q3 = np.percentile(rhos, [25, 50, 75])
        else:
            q1 = med = q3 = math.nan
        summary.append([cname, str(len(rhos)), str(singles), str(undef), _fmt(q1), _fmt(med), _fmt(q3)])
    return detail, summary, skips


def _last_release_split(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    rels = np.unique(ds.releases)
    if len(rels) < 2:
        raise SplitError("needs at least 2 releases")
    return np.flatnonzero(ds.releases != rels[-1]), np.flatnonzero(ds.releases == rels[-1])


def _period_runs(cfg: ExperimentConfig, corpus: Corpus, mode: str, learner: str):
    """Yield (dataset, train idx, test idx, FoldResult) for the last-release split of each project."""
    for ds in corpus.datasets:
        name = _project_name(ds)
        if not _has_mode(ds, mode):
            yield name, None, Skip(name, mode, f"dataset has no {canonical_mode(mode)} features")
            continue
        view = prepare(ds, mode, cfg.granularity, cfg.level)
        try:
            tr, te = _last_release_split(view)
            res = train_and_test(view.subset(tr), view.subset(te), learner, derive_seed(cfg.seed, name, "period"),
                                 cfg.smote)
        except _RECOVERABLE as exc:
            yield name, None, Skip(name, f"{mode}/{learner}", str(exc))
            continue
        yield name, (view, tr, te, res), None


def rq6_stagnation(cfg: ExperimentConfig, corpus: Corpus) -> tuple[list[list[str]], list[Skip]]:
    """Correlate each file's training-period score with its test-period score, pooled over projects."""
    rows, skips = [], []
    for mode in cfg.modes:
        for learner in cfg.learners:
            train_s, test_s = [], []
            for name, run, skip in _period_runs(cfg, corpus, mode, learner):
                if skip:
                    skips.append(skip)
                    continue
                view, tr, te, res = run
                if cfg.rq6_score == "model":
                    tr_scores = score(res.model, res.train.X)
                else:
                    tr_scores = view.y[tr].astype(float)
                a = _mean_by_file(view.files[tr], tr_scores)
                b = _mean_by_file(view.files[te], res.scores)
                for f in sorted(set(a) & set(b)):
                    train_s.append(a[f])
                    test_s.append(b[f])
            flags = []
            if len(train_s) < 2:
                rho = p = math.nan
                flags.append(f"shared_files={len(train_s)}")
            else:
                rho, p = spearman_test(train_s, test_s)
                if math.isnan(rho):
                    flags.append("zero_rank_variance")
            rows.append([mode, learner, _fmt(rho), _fmt(p), str(len(train_s)), ";".join(flags)])
    return rows, skips


def _mean_by_file(files: np.ndarray, values: np.ndarray) -> dict[str, float]:
    acc: dict[str, list[float]] = {}
    for f, v in zip(files, values):
        acc.setdefault(f, []).append(float(v))
    return {f: float(np.mean(v)) for f, v in acc.items()}


def recurrence_partitions(train_files, train_y, test_files, test_y) -> dict[str, set]:
    """Split test files by where they were defective: both periods, training only, test only."""
    bad_train = {f for f, y in zip(train_files, train_y) if y}
    bad_test = {f for f, y in zip(test_files, test_y) if y}
    present = set(test_files)
    return {"recurrent": present & bad_train & bad_test,
            "train_only": (present & bad_train) - bad_test,
            "test_only": bad_test - bad_train}


def rq7_recurrence(cfg: ExperimentConfig, corpus: Corpus) -> tuple[list[list[str]], list[Skip]]:
    rows, skips = [], []
    for mode in cfg.modes:
        for learner in cfg.learners:
            cms = {k: ConfusionMatrix(0, 0, 0, 0) for k in ("recurrent", "train_only", "test_only")}
            sizes = dict.fromkeys(cms, 0)
            for name, run, skip in _period_runs(cfg, corpus, mode, learner):
                if skip:
                    skips.append(skip)
                    continue
                view, tr, te, res = run
                parts = recurrence_partitions(view.files[tr], view.y[tr], view.files[te], view.y[te])
                for part, files in parts.items():
                    sizes[part] += len(files)
                    mask = np.isin(view.files[te], list(files))
                    if mask.any():
                        cm = confusion(res.pred[mask], view.y[te][mask])
                        old = cms[part]
                        cms[part] = ConfusionMatrix(old.tp + cm.tp, old.fp + cm.fp, old.tn + cm.tn, old.fn + cm.fn)
            for part, measure, fn in (("recurrent", "recall", recall), ("train_only", "pf", pf),
                                      ("test_only", "recall", recall)):
                value = fn(cms[part])
                flag = "empty" if sizes[part] == 0 else ""
                rows.append([mode, learner, part, measure, _fmt(value), str(sizes[part]), flag])
    return rows, skips


@dataclass
class ImportanceReport:
    metrics: list[str]
    large_rank: dict[str, float]
    small_rank: dict[str, float]
    rho: float
    p: float


def _importance_ranks(names: Sequence[str], kept: Sequence[str], values: np.ndarray) -> dict[str, float]:
    full = dict.fromkeys(names, 0.0)
    full.update(zip(kept, (float(v) for v in values)))
    ranks = rankdata([-full[n] for n in names])
    return {n: float(r) for n, r in zip(names, ranks)}


def _pooled(datasets: Sequence[Dataset], mode: str) -> Dataset:
    pooled = concat([select_mode(d, mode) for d in datasets])
    tr, _ = preprocess(pooled, pooled.subset([0]))
    return tr


def rq8_importance(cfg: ExperimentConfig, corpus: Corpus) -> ImportanceReport:
    datasets = corpus.datasets
    if len(datasets) < cfg.small_size:
        raise ConfigError(f"corpus has {len(datasets)} projects, fewer than the sample size {cfg.small_size}")
    mode = "P+C" if all(_has_mode(d, "P+C") for d in datasets) else "P"
    names = select_mode(datasets[0], mode).feature_names
    big = _pooled(datasets, mode)
    forest = fit(ModelSpec("rf", derive_seed(cfg.seed, "rq8-large")), big.X, big.y)
    large = _importance_ranks(names, big.feature_names, feature_importance(forest))
    rng = np.random.default_rng([cfg.seed, 8])
    per_metric: dict[str, list[float]] = {n: [] for n in names}
    for s in range(cfg.small_samples):
        pick = sorted(rng.choice(len(datasets), size=cfg.small_size, replace=False))
        sample = _pooled([datasets[i] for i in pick], mode)
        lr = fit(ModelSpec("lr", derive_seed(cfg.seed, "rq8-small", s)), sample.X, sample.y)
        for n, r in _importance_ranks(names, sample.feature_names, feature_importance(lr)).items():
            per_metric[n].append(r)
    small = {n: float(np.median(v)) for n, v in per_metric.items()}
    rho, p = spearman_test([large[n] for n in names], [small[n] for n in names])
    return ImportanceReport(list(names), large, small, rho, p)


# ------------------------------------------------------------------ driver and manifest


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _run_rq(rq: int, cfg: ExperimentConfig, corpus: Corpus, out: Path) -> tuple[list[str], list[Skip]]:
    seed = cfg.seed
    if rq in (1, 2):
        rows, skips = rq_performance(cfg, corpus)
        _write_csv(out / f"rq{rq}_results.csv", RESULT_HEADER, rows)
        ranks = rank_rows(as_dicts(rows), cfg.measures, learner_mode, seed)
        _write_csv(out / f"rq{rq}_ranks.csv", ["measure"] + RANK_HEADER, ranks)
        files = [f"rq{rq}_results.csv", f"rq{rq}_ranks.csv"]
        if rq == 2:
            _write_csv(out / "rq2_variance.csv", ["learner", "mode", "measure", "median", "iqr", "projects"],
                       variance_report(as_dicts(rows), cfg.measures))
            files.append("rq2_variance.csv")
        return files, skips
    if rq == 3:
        rows, skips = rq3_granularity(cfg, corpus)
        _write_csv(out / "rq3_results.csv", RESULT_HEADER, rows)
        ranks = rank_rows(as_dicts(rows), cfg.measures, lambda r: f"{learner_mode(r)}/{r['granularity']}", seed)
        _write_csv(out / "rq3_ranks.csv", ["measure"] + RANK_HEADER, ranks)
        return ["rq3_results.csv", "rq3_ranks.csv"], skips
    if rq == 4:
        rows, skips = rq4_stability(cfg, corpus)
        _write_csv(out / "rq4_results.csv", RESULT_HEADER, rows)
        dicts = as_dicts(rows)
        ranks = []
        for mode in cfg.modes:
            for learner in cfg.learners:
                sel = [r for r in dicts if r["mode"] == mode and r["learner"] == learner]
                ranks += rank_rows(sel, cfg.measures, lambda r: r["fold_or_release"], seed, prefix=(mode, learner))
        _write_csv(out / "rq4_ranks.csv", ["mode", "learner", "measure"] + RANK_HEADER, ranks)
        return ["rq4_results.csv", "rq4_ranks.csv"], skips
    if rq == 5:
        detail, summary, skips = rq5_stasis(corpus.datasets)
        _write_csv(out / "rq5_stasis.csv", ["config", "project", "file", "from", "to", "rho"], detail)
        _write_csv(out / "rq5_summary.csv", ["config", "pairs", "single_appearance", "undefined", "q1", "median",
                                             "q3"], summary)
        return ["rq5_stasis.csv", "rq5_summary.csv"], skips
    if rq == 6:
        rows, skips = rq6_stagnation(cfg, corpus)
        _write_csv(out / "rq6_stagnation.csv", ["mode", "learner", "rho", "p", "files", "flags"], rows)
        return ["rq6_stagnation.csv"], skips
    if rq == 7:
        rows, skips = rq7_recurrence(cfg, corpus)
        _write_csv(out / "rq7_recurrence.csv", ["mode", "learner", "partition", "measure", "value", "files",
                                                "flags"], rows)
        return ["rq7_recurrence.csv"], skips
    if rq == 8:
        rep = rq8_importance(cfg, corpus)
        _write_csv(out / "rq8_importance.csv", ["metric", "large_rank", "small_rank"],
                   [[n, _fmt(rep.large_rank[n]), _fmt(rep.small_rank[n])] for n in rep.metrics])
        _write_csv(out / "rq8_summary.csv", ["rho", "p", "samples", "sample_size"],
                   [[_fmt(rep.rho), _fmt(rep.p), str(cfg.small_samples), str(cfg.small_size)]])
        return ["rq8_importance.csv", "rq8_summary.csv"], []
    raise ConfigError(f"unknown research question {rq}; expected 1..8")


def run_experiment(cfg: ExperimentConfig, rqs: Sequence[int], out: str | Path,
                   corpus: Corpus | None = None) -> dict:
    """Run the requested questions into ``out`` and update ``out/manifest.json``.

    A question whose recorded outputs are present and unchanged for the same
    config and inputs is not recomputed.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    inputs = {Path(os.path.relpath(p, out)).as_posix(): sha256_file(p) for p in cfg.projects}
    manifest = {"tool": "defectlab", "version": __version__, "config_hash": cfg.digest(), "seed": cfg.seed,
                "inputs": inputs, "splits": {"kind": cfg.split, "stratified": cfg.split == "cross_val"},
                "runs": {}}
    if manifest_path.exists():
        try:
            old = json.loads(manifest_path.read_text(encoding="utf-8"))
        except ValueError:
            old = {}
        if all(old.get(k) == manifest[k] for k in ("version", "config_hash", "inputs")):
            manifest["runs"] = old.get("runs", {})
    for rq in sorted(set(rqs)):
        key = f"rq{rq}"
        prev = manifest["runs"].get(key)
        if prev and all((out / f).is_file() and sha256_file(out / f) == d for f, d in prev["outputs"].items()):
            log.info("%s: outputs up to date, skipping", key)
            continue
        if corpus is None:
            corpus = Corpus(cfg)
        files, skips = _run_rq(rq, cfg, corpus, out)
        for s in skips:
            log.warning("skipped %s %s: %s", s.project, s.stage, s.reason)
        manifest["runs"][key] = {"outputs": {f: sha256_file(out / f) for f in files},
                                 "skips": [s.as_dict() for s in skips]}
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_results(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != RESULT_HEADER:
            raise ValidationError(f"{path}: not a results CSV")
        return list(reader)
