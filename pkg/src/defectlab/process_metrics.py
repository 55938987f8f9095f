"""Change-history ("process") metrics, one row per (file, commit), in a single pass.

Every metric for a commit is computed from the state accumulated over the
commits strictly before it; the state is updated afterwards.  Only files with
an analysed extension take part: they are the rows, the neighbourhood, and
the population for ns/nd/sctr.  Developer experience (exp, rexp) counts every
non-merge commit of the author.

Metric definitions (f = the file, c = the current commit, a = its author):

la, ld     lines added / deleted in c
lt         size of f before c (running sum of la - ld, floored at 0)
age        days since the previous change to f (0 on the first change)
nuc        number of prior commits touching f
ddev       distinct authors of prior commits touching f
adev       distinct authors of f's prior commits in the current release, plus a
own        largest share of f's added lines held by one author (0 if none)
minor      authors whose share is in (0, 0.05)
ncomm      prior commits touching f or any file ever co-committed with f
nddev      distinct authors of those commits
nadev      distinct authors of those commits that fall in the current release
avg_*      mean over neighbours of their ddev / release authors / commit counts
ns, nd     distinct top-level directories / parent directories changed in c
exp        prior commits by a
sexp       prior commits by a touching f's top-level directory
rexp       sum over a's prior commits of 1 / (1 + age in years of 365.25 days)
sctr       minus the normalized entropy of changed lines across c's files
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .labeling import InducingLabel
from .mining import ProjectHistory

DAY = 86400.0
YEAR = 365.25 * DAY
MINOR_SHARE = 0.05

PROCESS_FEATURES = ["la", "ld", "lt", "age", "adev", "ddev", "nuc", "own", "minor", "nddev", "ncomm",
                    "nadev", "avg_nddev", "avg_nadev", "avg_ncomm", "ns", "nd", "exp", "rexp", "sexp",
                    "sctr"]
CSV_HEADER = ["file", "commit", "release"] + PROCESS_FEATURES + ["defective"]


@dataclass
class ProcessRow:
    canonical_id: str
    commit_hash: str
    release_index: int
    la: int
    ld: int
    lt: int
    age: float
    adev: int
    ddev: int
    nuc: int
    own: float
    minor: int
    nddev: int
    ncomm: int
    nadev: int
    avg_nddev: float
    avg_nadev: float
    avg_ncomm: float
    ns: int
    nd: int
    exp: int
    rexp: float
    sexp: int
    sctr: float
    defective: int = 0

    def features(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in PROCESS_FEATURES}


def subsystem(path: str) -> str:
    return path.split("/", 1)[0] if "/" in path else ""


def directory(path: str) -> str:
    return path.rsplit("/", 1)[0] if "/" in path else ""


class _FileState:
    __slots__ = ("size", "last_time", "mask", "n_commits", "authors", "contrib", "release_authors")

    def __init__(self) -> None:
        self.size = 0
        self.last_time: int | None = None
        self.mask = 0
        self.n_commits = 0
        self.authors: set[str] = set()
        self.contrib: Counter[str] = Counter()
        self.release_authors: dict[int, set[str]] = defaultdict(set)


class MinerState:
    """Cumulative history up to (not including) the commit being scored."""

    def __init__(self) -> None:
        self.files: dict[str, _FileState] = defaultdict(_FileState)
        self.neighbors: dict[str, set[str]] = defaultdict(set)
        self.author_times: dict[str, list[int]] = defaultdict(list)
        self.author_subsys: dict[str, Counter[str]] = defaultdict(Counter)
        self.bit = 0

    def neighborhood(self, cid: str, release: int) -> dict[str, float]:
        fs = self.files.get(cid) or _FileState()
        nbrs = sorted(self.neighbors.get(cid, ()))
        mask = fs.mask
        devs = set(fs.authors)
        active = set(fs.release_authors.get(release, ()))
        for g in nbrs:
            gs = self.files[g]
            mask |= gs.mask
            devs |= gs.authors
            active |= gs.release_authors.get(release, set())
        out = {"ncomm": bin(mask).count("1"), "nddev": len(devs), "nadev": len(active)}
        if nbrs:
            k = len(nbrs)
            out["avg_nddev"] = sum(len(self.files[g].authors) for g in nbrs) / k
            out["avg_nadev"] = sum(len(self.files[g].release_authors.get(release, ())) for g in nbrs) / k
            out["avg_ncomm"] = sum(self.files[g].n_commits for g in nbrs) / k
        else:
            out["avg_nddev"] = out["avg_nadev"] = out["avg_ncomm"] = 0.0
        return out

    def experience(self, author: str, sub: str, now: int) -> tuple[int, float, int]:
        times = self.author_times.get(author)
        if not times:
            return 0, 0.0, 0
        ages = (now - np.asarray(times, dtype=float)) / YEAR
        rexp = float(np.sum(1.0 / (ages + 1.0)))
        return len(times), rexp, self.author_subsys[author][sub]


def neighborhood(file: str, state: MinerState, release: int = 1) -> dict[str, float]:
    return state.neighborhood(file, release)


def experience(author: str, file: str, state: MinerState, now: int) -> tuple[int, float, int]:
    """(exp, rexp, sexp) for ``author`` touching ``file`` at time ``now``."""
    return state.experience(author, subsystem(file), now)


def scattering(changed: list[int]) -> float:
    """Negative normalized Shannon entropy of a commit's per-file changed-line counts."""
    n = len(changed)
    total = sum(changed)
    if n <= 1 or total <= 0:
        return 0.0
    h = -sum((x / total) * math.log(x / total) for x in changed if x > 0)
    return -h / math.log(n)


def compute_rows(history: ProjectHistory, labels: Iterable[InducingLabel] = (),
                 extensions: tuple[str, ...] = (".java",)) -> Iterator[ProcessRow]:
    defective = {(lab.inducing_hash, lab.canonical_id) for lab in labels}
    st = MinerState()
    for c in history.non_merge():
        changes = [ch for ch in c.changes if ch.path.endswith(extensions)]
        release = history.release_of(c.hash)
        if changes:
            subs = {subsystem(ch.path) for ch in changes}
            ns, nd = len(subs), len({directory(ch.path) for ch in changes})
            sctr = scattering([ch.lines_added + ch.lines_deleted for ch in changes])
            for ch in changes:
                if ch.kind == "delete":
                    continue
                cid = ch.canonical_id
                fs = st.files.get(cid) or _FileState()
                total = sum(fs.contrib.values())
                shares = [v / total for v in fs.contrib.values()] if total > 0 else []
                exp, rexp, sexp = st.experience(c.author, subsystem(ch.path), c.timestamp)
                nb = st.neighborhood(cid, release)
                yield ProcessRow(
                    canonical_id=cid, commit_hash=c.hash, release_index=release,
                    la=ch.lines_added, ld=ch.lines_deleted, lt=fs.size,
                    age=0.0 if fs.last_time is None else (c.timestamp - fs.last_time) / DAY,
                    adev=len(fs.release_authors.get(release, set()) | {c.author}),
                    ddev=len(fs.authors), nuc=fs.n_commits,
                    own=max(shares, default=0.0),
                    minor=sum(1 for s in shares if 0 < s < MINOR_SHARE),
                    nddev=nb["nddev"], ncomm=nb["ncomm"], nadev=nb["nadev"],
                    avg_nddev=nb["avg_nddev"], avg_nadev=nb["avg_nadev"], avg_ncomm=nb["avg_ncomm"],
                    ns=ns, nd=nd, exp=exp, rexp=rexp, sexp=sexp, sctr=sctr,
                    defective=int((c.hash, cid) in defective),
                )
            # apply the commit
            bit = 1 << st.bit
            st.bit += 1
            ids = sorted({ch.canonical_id for ch in changes})
            for ch in changes:
                fs = st.files[ch.canonical_id]
                fs.size = max(0, fs.size + ch.lines_added - ch.lines_deleted)
                fs.last_time = c.timestamp
                if not fs.mask & bit:
                    fs.mask |= bit
                    fs.n_commits += 1
                fs.authors.add(c.author)
                fs.contrib[c.author] += ch.lines_added
                fs.release_authors[release].add(c.author)
            for a in ids:
                st.neighbors[a].update(x for x in ids if x != a)
            for s in subs:
                st.author_subsys[c.author][s] += 1
        st.author_times[c.author].append(c.timestamp)


# ------------------------------------------------------------------ CSV


def _fmt(v: object) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_process_csv(rows: Iterable[ProcessRow], out: str | Path) -> int:
    n = 0
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.canonical_id, r.commit_hash, r.release_index]
                       + [_fmt(getattr(r, k)) for k in PROCESS_FEATURES] + [r.defective])
            n += 1
    return n


_INT_FIELDS = {f.name for f in fields(ProcessRow) if f.type in ("int", int)}


def read_process_csv(path: str | Path) -> list[ProcessRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {k: (int(rec[k]) if k in _INT_FIELDS else float(rec[k])) for k in PROCESS_FEATURES}
            rows.append(ProcessRow(rec["file"], rec["commit"], int(rec["release"]),
                                   defective=int(rec["defective"]), **kw))
    return rows
