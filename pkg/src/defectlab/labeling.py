"""Fix-commit detection and SZZ tracing of bug-inducing (commit, file) pairs."""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

from . import gitcmd
from .errors import LabelingError, MiningError
from .mining import Commit, ProjectHistory
from .product_metrics import code_lines, tokenize, line_map

log = logging.getLogger(__name__)

DEFAULT_KEYWORDS = ("bug", "fix", "fixes", "fixed", "fixing", "defect", "error", "fail", "failure", "patch")
ISSUE_REF = re.compile(r"#\d+")
_HUNK = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+\d+(?:,\d+)? @@")


@dataclass
class FixCommit:
    hash: str
    matched_keywords: list[str]
    fixed_files: list[str]


@dataclass(frozen=True, order=True)
class InducingLabel:
    inducing_hash: str
    canonical_id: str
    fix_hash: str
    line_evidence: int


@dataclass(frozen=True)
class BlameRecord:
    file: str
    at_commit: str
    line_number: int
    origin_hash: str
    text: str | None = None


@dataclass
class SZZFilters:
    extensions: tuple[str, ...] = (".java",)
    line_filter: bool = True


def load_keywords(path: str | Path) -> list[str]:
    """One keyword per line; blank lines and '#' comments ignored."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.append(line)
    if not words:
        raise ValueError(f"{path}: no keywords")
    return words


def identify_fix_commits(history: ProjectHistory, keywords: Iterable[str] = DEFAULT_KEYWORDS,
                         extensions: tuple[str, ...] = (".java",)) -> list[FixCommit]:
    words = sorted({k.lower() for k in keywords}, key=lambda w: (-len(w), w))
    if not words:
        raise ValueError("keyword set must be nonempty")
    pattern = re.compile(r"\b(?:" + "|".join(re.escape(w) for w in words) + r")\b", re.IGNORECASE)
    fixes = []
    for c in history.non_merge():
        found = sorted({m.group().lower() for m in pattern.finditer(c.message)})
        found += sorted(set(ISSUE_REF.findall(c.message)))
        if not found:
            continue
        files = sorted({ch.canonical_id for ch in c.changes
                        if ch.path.endswith(extensions) or (ch.old_path or "").endswith(extensions)})
        fixes.append(FixCommit(c.hash, found, files))
    return fixes


# ------------------------------------------------------------------ blame providers


class BlameProvider(Protocol):
    def deleted_lines(self, fix: str, parent: str, old_path: str, new_path: str) -> list[int]: ...

    def blame(self, commit: str, path: str, lines: list[int]) -> dict[int, BlameRecord]: ...

    def text(self, commit: str, path: str) -> str | None: ...


def _ranges(lines: list[int]) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for ln in sorted(set(lines)):
        if out and ln == out[-1][1] + 1:
            out[-1] = (out[-1][0], ln)
        else:
            out.append((ln, ln))
    return out


def parse_unified_deletions(diff: str) -> list[int]:
    """Old-side line numbers removed or rewritten by a ``-U0`` diff."""
    lines: list[int] = []
    for row in diff.splitlines():
        m = _HUNK.match(row)
        if m:
            start = int(m.group(1))
            count = 1 if m.group(2) is None else int(m.group(2))
            lines.extend(range(start, start + count))
    return lines


def parse_porcelain(out: str, commit: str, path: str) -> dict[int, BlameRecord]:
    records: dict[int, BlameRecord] = {}
    current: tuple[str, int] | None = None
    for row in out.split("\n"):
        if row.startswith("\t"):
            if current is not None:
                sha, final = current
                records[final] = BlameRecord(path, commit, final, sha, row[1:])
            current = None
            continue
        parts = row.split(" ")
        if len(parts) >= 3 and len(parts[0]) == 40 and parts[1].isdigit() and parts[2].isdigit():
            current = (parts[0], int(parts[2]))
    return records


class GitBlameProvider:
    """Live ``git diff``/``git blame`` queries; safe to share between threads."""

    def __init__(self, repo: str | Path):
        self.repo = Path(repo)

    def deleted_lines(self, fix: str, parent: str, old_path: str, new_path: str) -> list[int]:
        paths = [old_path] if old_path == new_path else [old_path, new_path]
        out = gitcmd.run_git(self.repo, "diff", "-U0", "-M", "--no-color", "--no-ext-diff",
                             parent, fix, "--", *paths)
        return parse_unified_deletions(out.decode("utf-8", "replace"))

    def blame(self, commit: str, path: str, lines: list[int]) -> dict[int, BlameRecord]:
        if not lines:
            return {}
        args = ["blame", "--porcelain"]
        for a, b in _ranges(lines):
            args += ["-L", f"{a},{b}"]
        try:
            out = gitcmd.run_git(self.repo, *args, commit, "--", path)
        except MiningError as exc:
            raise LabelingError(path, commit, exc.diagnostic) from exc
        return parse_porcelain(out.decode("utf-8", "replace"), commit, path)

    def text(self, commit: str, path: str) -> str | None:
        out = gitcmd.run_git(self.repo, "cat-file", "blob", f"{commit}:{path}", check=False)
        return out.decode("utf-8", "replace") if out else None


class FileBlameProvider:
    """Offline provider backed by a JSON-lines dump.

    Three record shapes are accepted: blame lines
    ``{"file", "at_commit", "line_number", "origin_hash", "text"?}``,
    deletion lists ``{"fix", "file", "deleted": [line, ...]}`` where ``file``
    is the path in the fix's first parent, and optional file snapshots
    ``{"snapshot": commit, "file", "content"}`` used by the line filter.
    Without a snapshot the filter classifies each blamed line on its own.
    """

    def __init__(self, path: str | Path):
        self._blame: dict[tuple[str, str, int], BlameRecord] = {}
        self._deleted: dict[tuple[str, str], list[int]] = {}
        self._text: dict[tuple[str, str], str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "deleted" in rec:
                    self._deleted[(rec["fix"], rec["file"])] = [int(x) for x in rec["deleted"]]
                elif "snapshot" in rec:
                    self._text[(rec["snapshot"], rec["file"])] = rec["content"]
                else:
                    br = BlameRecord(rec["file"], rec["at_commit"], int(rec["line_number"]),
                                     rec["origin_hash"], rec.get("text"))
                    self._blame[(br.at_commit, br.file, br.line_number)] = br

    def deleted_lines(self, fix: str, parent: str, old_path: str, new_path: str) -> list[int]:
        return list(self._deleted.get((fix, old_path), []))

    def blame(self, commit: str, path: str, lines: list[int]) -> dict[int, BlameRecord]:
        out = {}
        for ln in lines:
            rec = self._blame.get((commit, path, ln))
            if rec is None:
                raise LabelingError(path, commit, f"no blame record for line {ln}")
            out[ln] = rec
        return out

    def text(self, commit: str, path: str) -> str | None:
        return self._text.get((commit, path))


def dump_blame(history: ProjectHistory, provider: BlameProvider, fixes: list[FixCommit],
               out: str | Path, filters: SZZFilters | None = None) -> int:
    """Materialize everything szz_trace needs for ``fixes`` into a FileBlameProvider dump."""
    filters = filters or SZZFilters()
    n = 0
    with open(out, "w", encoding="utf-8") as fh:
        for fix in fixes:
            commit = history.get(fix.hash)
            if not commit.parents:
                continue
            parent = commit.parents[0]
            for ch, old in _candidate_changes(commit, filters):
                deleted = provider.deleted_lines(fix.hash, parent, old, ch.path)
                fh.write(json.dumps({"fix": fix.hash, "file": old, "deleted": deleted}) + "\n")
                text = provider.text(parent, old)
                if text is not None:
                    fh.write(json.dumps({"snapshot": parent, "file": old, "content": text}) + "\n")
                for ln, rec in sorted(provider.blame(parent, old, deleted).items()):
                    fh.write(json.dumps({"file": old, "at_commit": parent, "line_number": ln,
                                         "origin_hash": rec.origin_hash, "text": rec.text}) + "\n")
                    n += 1
    return n


# ------------------------------------------------------------------ SZZ


def _candidate_changes(commit: Commit, filters: SZZFilters):
    for ch in commit.changes:
        if ch.kind == "add" or ch.binary or ch.lines_deleted == 0:
            continue
        old = ch.old_path or ch.path
        if not (old.endswith(filters.extensions) or ch.path.endswith(filters.extensions)):
            continue
        yield ch, old


def _is_code_line(text: str) -> bool:
    return bool(line_map(tokenize(text), text).code)


def szz_trace(fix: FixCommit, history: ProjectHistory, blame_provider: BlameProvider,
              filters: SZZFilters | None = None) -> list[InducingLabel]:
    filters = filters or SZZFilters()
    commit = history.get(fix.hash)
    if not commit.parents:
        log.warning("fix %s is a root commit; skipped", fix.hash[:12])
        return []
    parent = commit.parents[0]
    evidence: Counter[tuple[str, str]] = Counter()
    for ch, old in _candidate_changes(commit, filters):
        lines = blame_provider.deleted_lines(fix.hash, parent, old, ch.path)
        if not lines:
            continue
        code: set[int] | None = None
        if filters.line_filter:
            text = blame_provider.text(parent, old)
            if text is not None:
                code = code_lines(text)
                lines = [ln for ln in lines if ln in code]
        records = blame_provider.blame(parent, old, lines)
        for ln in lines:
            rec = records.get(ln)
            if rec is None:
                raise LabelingError(old, fix.hash, f"line {ln} not blamed")
            if filters.line_filter and code is None and not _is_code_line(rec.text or ""):
                continue
            evidence[(rec.origin_hash, ch.canonical_id)] += 1
    labels = []
    for (origin, cid), n in sorted(evidence.items()):
        if origin in history and history.get(origin).timestamp > commit.timestamp:
            log.warning("dropping %s: inducing commit dated after fix %s", origin[:12], fix.hash[:12])
            continue
        labels.append(InducingLabel(origin, cid, fix.hash, n))
    return labels


def label_history(history: ProjectHistory, provider: BlameProvider,
                  keywords: Iterable[str] = DEFAULT_KEYWORDS, filters: SZZFilters | None = None,
                  jobs: int = 1) -> list[InducingLabel]:
    filters = filters or SZZFilters()
    fixes = identify_fix_commits(history, keywords, filters.extensions)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda f: szz_trace(f, history, provider, filters), fixes))
    else:
        results = [szz_trace(f, history, provider, filters) for f in fixes]
    return sorted({lab for batch in results for lab in batch})


def label_rows(labels: Iterable[InducingLabel], history: ProjectHistory, level: str = "jit",
               extensions: tuple[str, ...] = (".java",)) -> dict[tuple[str, object], bool]:
    """Defective flag for every (file, period) row; period is a commit hash or release index."""
    if level not in ("jit", "release"):
        raise ValueError(f"unknown level {level!r}")
    inducing = {(lab.inducing_hash, lab.canonical_id) for lab in labels}
    rows: dict[tuple[str, object], bool] = {}
    for c in history.non_merge():
        for ch in c.changes:
            if ch.kind == "delete" or not ch.path.endswith(extensions):
                continue
            hit = (c.hash, ch.canonical_id) in inducing
            if level == "jit":
                rows[(ch.canonical_id, c.hash)] = hit
            else:
                key = (ch.canonical_id, history.release_of(c.hash))
                rows[key] = rows.get(key, False) or hit
    return rows


def defective_commits(labels: Iterable[InducingLabel]) -> set[str]:
    return {lab.inducing_hash for lab in labels}


LABEL_HEADER = ["inducing_hash", "canonical_id", "fix_hash", "line_evidence"]


def write_labels(labels: Iterable[InducingLabel], out: str | Path) -> int:
    n = 0
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_HEADER)
        for lab in sorted(labels):
            w.writerow([lab.inducing_hash, lab.canonical_id, lab.fix_hash, lab.line_evidence])
            n += 1
    return n


def read_labels(path: str | Path) -> list[InducingLabel]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [InducingLabel(r["inducing_hash"], r["canonical_id"], r["fix_hash"], int(r["line_evidence"]))
                for r in csv.DictReader(fh)]
