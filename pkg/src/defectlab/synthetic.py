"""Seeded generator of synthetic project datasets with planted structure.

Each project is a combined-mode, file-level, per-commit Dataset whose columns
are the real process and product metric names.  Knobs control which family
carries the defect signal and how:

signal         "process", "product" or "both"
strength       slope of the planted logit
shape_mix      fraction of projects whose signal is U-shaped rather than monotone
heterogeneity  if true each project picks its own informative metric
drift          how far the informative metric moves over the last three releases
stagnation     1.0 freezes product metrics for the project's lifetime
persistence    weight of the per-file component in process metrics
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, _empty_meta, write_dataset
from .process_metrics import PROCESS_FEATURES
from .product_metrics import PRODUCT_COLUMNS

FEATURES = PROCESS_FEATURES + PRODUCT_COLUMNS
N_PROC = len(PROCESS_FEATURES)
N_PROD = len(PRODUCT_COLUMNS)


@dataclass(frozen=True)
class Knobs:
    signal: str = "process"
    strength: float = 3.0
    shape_mix: float = 0.0
    heterogeneity: bool = False
    drift: float = 0.0
    stagnation: float = 0.0
    persistence: float = 0.5
    intercept: float = -1.5
    n_packages: int = 6
    files_per_package: int = 5
    n_releases: int = 5
    commits_per_release: int = 40
    max_files_per_commit: int = 3


def _shape(z: np.ndarray | float, u_shaped: bool):
    return (z * z - 1.0) / np.sqrt(2.0) if u_shaped else z


def make_project(name: str, knobs: Knobs = Knobs(), seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    n_files = knobs.n_packages * knobs.files_per_package
    files = [f"pkg{p}/F{k}.java" for p in range(knobs.n_packages) for k in range(knobs.files_per_package)]
    persist = rng.normal(size=(n_files, N_PROC))
    product = rng.normal(size=(n_files, N_PROD))
    if knobs.heterogeneity:
        proc_inf, prod_inf = int(rng.integers(N_PROC)), int(rng.integers(N_PROD))
    else:
        proc_inf, prod_inf = 0, 0
    proc_alt, prod_alt = (proc_inf + 1) % N_PROC, (prod_inf + 1) % N_PROD
    u_shaped = bool(rng.random() < knobs.shape_mix)
    R = knobs.n_releases
    rows_X, rows_y, meta_rows = [], [], []
    commit_no = 0
    for r in range(1, R + 1):
        if r > 1:
            product = product + (1.0 - knobs.stagnation) * rng.normal(size=product.shape)
        late = max(0.0, (r - (R - 3)) / 3.0) if R >= 4 else 0.0
        w_alt = knobs.drift * late
        for _ in range(knobs.commits_per_release):
            pkg = int(rng.integers(knobs.n_packages))
            k = 1 + int(rng.integers(knobs.max_files_per_commit))
            chosen = sorted(pkg * knobs.files_per_package
                            + rng.choice(knobs.files_per_package, size=k, replace=False))
            commit_no += 1
            for f in chosen:
                noise = rng.normal(size=N_PROC)
                proc = knobs.persistence * persist[f] + noise
                s_proc = (1 - w_alt) * _shape(noise[proc_inf], u_shaped) + w_alt * _shape(noise[proc_alt], u_shaped)
                s_prod = ((1 - w_alt) * _shape(product[f, prod_inf], u_shaped)
                          + w_alt * _shape(product[f, prod_alt], u_shaped))
                s = {"process": s_proc, "product": s_prod, "both": (s_proc + s_prod) / np.sqrt(2)}[knobs.signal]
                p = 1.0 / (1.0 + np.exp(-(knobs.intercept + knobs.strength * s)))
                rows_y.append(int(rng.random() < p))
                rows_X.append(np.concatenate([np.exp(0.5 * proc), np.exp(0.5 * product[f]) * 10.0]))
                meta_rows.append((files[f], r, f"{name}-c{commit_no}"))
    n = len(rows_y)
    meta = _empty_meta(n)
    meta["projects"][:] = name
    for i, (fname, rel, cm) in enumerate(meta_rows):
        meta["files"][i], meta["releases"][i], meta["commits"][i] = fname, rel, cm
    X = np.round(np.array(rows_X), 6)
    effort = X[:, FEATURES.index("CountLineCode")].copy()
    return Dataset(list(FEATURES), X, np.array(rows_y, dtype=int), effort, mode="combined", **meta)


def make_corpus(n_projects: int, knobs: Knobs = Knobs(), seed: int = 0, prefix: str = "proj") -> list[Dataset]:
    return [make_project(f"{prefix}{i:02d}", knobs, seed=int(np.random.default_rng([seed, i]).integers(2**31)))
            for i in range(n_projects)]


# Named corpora shipped for the experiments and the acceptance checks.
CORPORA: dict[str, tuple[int, Knobs]] = {
    # mixed monotone and U-shaped process signal: forests cope with both, linear models do not
    "rq2": (30, Knobs(signal="process", shape_mix=0.5, strength=5.0, persistence=0.0, intercept=-1.0)),
    # product metrics frozen per file, process metrics churn with a per-file component
    "stagnant": (30, Knobs(signal="both", stagnation=1.0, persistence=0.5, commits_per_release=20)),
    "drift": (10, Knobs(signal="process", drift=1.0, strength=4.0, commits_per_release=40)),
    "stationary": (30, Knobs(signal="process", drift=0.0, strength=4.0, commits_per_release=40)),
    "heterogeneous": (20, Knobs(signal="process", heterogeneity=True, commits_per_release=20)),
}


def write_corpus(out: str | Path, name: str, seed: int = 0, n_projects: int | None = None,
                 knobs: Knobs | None = None) -> list[Path]:
    """Write corpus ``name`` as one dataset CSV per project under ``out/name``."""
    count, default = CORPORA[name]
    base = Path(out) / name
    base.mkdir(parents=True, exist_ok=True)
    paths = []
    for ds in make_corpus(n_projects or count, knobs or default, seed=seed, prefix=f"{name}-"):
        p = base / f"{ds.projects[0]}.csv"
        write_dataset(ds, p)
        paths.append(p)
    return paths

