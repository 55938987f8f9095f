"""Commit history extraction: git log -> JSON-lines dump -> ProjectHistory."""

from __future__ import annotations

import bisect
import csv
import io
import json
import logging
import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable

from . import gitcmd
from .errors import ConfigError, MiningError, ParseError

log = logging.getLogger(__name__)

KINDS = ("add", "modify", "delete", "rename")
_HEX40 = re.compile(r"^[0-9a-f]{40}$")

# record / field / header-end separators for the log format
_RS, _FS, _HS = "\x1e", "\x1f", "\x1d"
_LOG_FORMAT = f"--format={_RS}%H{_FS}%P{_FS}%ae{_FS}%an{_FS}%at{_FS}%B{_HS}"


@dataclass
class FileChange:
    path: str
    lines_added: int
    lines_deleted: int
    kind: str
    old_path: str | None = None
    binary: bool = False
    canonical_id: str = ""


@dataclass
class Commit:
    hash: str
    parents: list[str]
    author: str
    timestamp: int
    message: str
    changes: list[FileChange] = field(default_factory=list)

    @property
    def is_merge(self) -> bool:
        return len(self.parents) > 1


@dataclass(frozen=True)
class Release:
    tag: str
    date: int
    index: int


@dataclass
class ProjectHistory:
    commits: list[Commit]
    releases: list[Release] = field(default_factory=list)
    commit_release: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._by_hash = {c.hash: c for c in self.commits}
        self._order = {c.hash: i for i, c in enumerate(self.commits)}

    def get(self, sha: str) -> Commit:
        return self._by_hash[sha]

    def __contains__(self, sha: str) -> bool:
        return sha in self._by_hash

    def position(self, sha: str) -> int:
        return self._order[sha]

    def non_merge(self) -> list[Commit]:
        return [c for c in self.commits if not c.is_merge]

    def release_of(self, sha: str) -> int:
        return self.commit_release.get(sha, 1)

    def with_releases(self, releases: list[Release]) -> "ProjectHistory":
        return ProjectHistory(self.commits, releases, assign_releases(self.commits, releases))

    def authors(self) -> set[str]:
        return {c.author for c in self.non_merge()}


def normalize_author(email: str, name: str) -> str:
    email = email.strip().lower()
    return email if email else name.strip().lower()


# ---------------------------------------------------------------- dumping


def _parse_log(raw: str) -> list[dict]:
    records = []
    for chunk in raw.split(_RS)[1:]:
        header, _, body = chunk.partition(_HS)
        sha, parents, email, name, ts, message = header.split(_FS, 5)
        raws, stats = [], []
        for line in body.splitlines():
            if not line.strip():
                continue
            if line.startswith(":"):
                raws.append(line)
            else:
                stats.append(line)
        if len(raws) != len(stats):
            raise MiningError(f"raw/numstat mismatch in {sha}",
                              f"{len(raws)} raw vs {len(stats)} numstat entries")
        changes = []
        for r, s in zip(raws, stats):
            meta, *paths = r.split("\t")
            status = meta.split()[-1]
            added, deleted, _ = s.split("\t", 2)
            binary = added == "-" or deleted == "-"
            paths = [gitcmd.unquote_path(p) for p in paths]
            ch: dict = {"path": paths[-1]}
            letter = status[0]
            if letter == "R":
                ch["old_path"] = paths[0]
                kind = "rename"
            elif letter == "A":
                kind = "add"
            elif letter == "D":
                kind = "delete"
            else:
                kind = "modify"
            ch["added"] = 0 if binary else int(added)
            ch["deleted"] = 0 if binary else int(deleted)
            ch["kind"] = kind
            ch["binary"] = binary
            changes.append(ch)
        records.append({
            "hash": sha,
            "parents": parents.split() if parents else [],
            "author": normalize_author(email, name),
            "timestamp": int(ts),
            "message": message.rstrip("\n"),
            "changes": changes,
        })
    return records


def dump_history(repo_path: str | Path, out_path: str | Path) -> int:
    """Write one JSON line per commit reachable from HEAD; returns the record count."""
    repo_path = Path(repo_path)
    if not gitcmd.is_git_repo(repo_path):
        raise MiningError(f"not a git repository: {repo_path}")
    records: list[dict] = []
    if gitcmd.has_head(repo_path):
        out = gitcmd.run_git(repo_path, "log", "HEAD", "--reverse", "--topo-order", "--root",
                             "-M", "--no-color", "--no-ext-diff", "--raw", "--numstat",
                             "--no-abbrev", _LOG_FORMAT)
        records = _parse_log(out.decode("utf-8", "replace"))
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    log.info("dumped %d commits from %s", len(records), repo_path)
    return len(records)


# ---------------------------------------------------------------- parsing


def _check_record(rec: object, lineno: int) -> Commit:
    if not isinstance(rec, dict):
        raise ParseError("record is not an object", lineno)
    for key in ("hash", "parents", "author", "timestamp", "message", "changes"):
        if key not in rec:
            raise ParseError(f"missing field {key!r}", lineno)
    sha = rec["hash"]
    if not isinstance(sha, str) or not _HEX40.match(sha):
        raise ParseError(f"bad hash {sha!r}", lineno)
    parents = rec["parents"]
    if not isinstance(parents, list) or not all(isinstance(p, str) for p in parents):
        raise ParseError("parents must be a list of hashes", lineno)
    ts = rec["timestamp"]
    if not isinstance(ts, int) or isinstance(ts, bool) or ts < 0:
        raise ParseError(f"bad timestamp {ts!r}", lineno)
    if not isinstance(rec["author"], str) or not isinstance(rec["message"], str):
        raise ParseError("author and message must be strings", lineno)
    changes = []
    if not isinstance(rec["changes"], list):
        raise ParseError("changes must be a list", lineno)
    for ch in rec["changes"]:
        if not isinstance(ch, dict) or not isinstance(ch.get("path"), str):
            raise ParseError("change without path", lineno)
        kind = ch.get("kind")
        if kind not in KINDS:
            raise ParseError(f"bad change kind {kind!r}", lineno)
        added, deleted = ch.get("added", 0), ch.get("deleted", 0)
        if not (isinstance(added, int) and isinstance(deleted, int)) or added < 0 or deleted < 0:
            raise ParseError("line counts must be non-negative integers", lineno)
        binary = bool(ch.get("binary", False))
        old_path = ch.get("old_path")
        if kind == "rename" and not isinstance(old_path, str):
            raise ParseError("rename without old_path", lineno)
        if binary:
            added = deleted = 0
        changes.append(FileChange(ch["path"], added, deleted, kind, old_path, binary))
    return Commit(sha, list(parents), rec["author"], ts, rec["message"], changes)


def _generations(commits: list[Commit]) -> dict[str, int]:
    """Longest distance from a root, counting only parents present in the list."""
    known = {c.hash for c in commits}
    children: dict[str, list[str]] = defaultdict(list)
    indeg = {}
    for c in commits:
        ps = [p for p in c.parents if p in known]
        indeg[c.hash] = len(ps)
        for p in ps:
            children[p].append(c.hash)
    gen = {h: 0 for h, d in indeg.items() if d == 0}
    queue = deque(sorted(gen))
    while queue:
        h = queue.popleft()
        for ch in children[h]:
            gen[ch] = max(gen.get(ch, 0), gen[h] + 1)
            indeg[ch] -= 1
            if indeg[ch] == 0:
                queue.append(ch)
    if len(gen) != len(commits):
        raise ParseError("parent links form a cycle")
    return gen


def _assign_canonical_ids(commits: list[Commit]) -> None:
    alive: dict[str, str] = {}
    last_id: dict[str, str] = {}
    created: dict[str, int] = defaultdict(int)

    def fresh(path: str) -> str:
        n = created[path]
        created[path] += 1
        cid = path if n == 0 else f"{path}#{n}"
        last_id[path] = cid
        return cid

    for c in commits:
        for ch in c.changes:
            if ch.kind == "add":
                cid = alive.get(ch.path) or fresh(ch.path)
                alive[ch.path] = cid
            elif ch.kind == "modify":
                cid = alive.get(ch.path) or last_id.get(ch.path) or fresh(ch.path)
                alive[ch.path] = cid
            elif ch.kind == "delete":
                cid = alive.pop(ch.path, None) or last_id.get(ch.path) or fresh(ch.path)
            else:
                old = ch.old_path or ch.path
                cid = alive.pop(old, None) or last_id.get(old) or fresh(old)
                alive[ch.path] = cid
                last_id[ch.path] = cid
            ch.canonical_id = cid


def parse_dump(stream: IO[str] | Iterable[str]) -> ProjectHistory:
    commits: list[Commit] = []
    seen: set[str] = set()
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        commit = _check_record(rec, lineno)
        if commit.hash in seen:
            raise ParseError(f"duplicate hash {commit.hash}", lineno)
        seen.add(commit.hash)
        commits.append(commit)
    gen = _generations(commits)
    commits.sort(key=lambda c: (c.timestamp, gen[c.hash], c.hash))
    _assign_canonical_ids(commits)
    return ProjectHistory(commits)


def load_history(path: str | Path, releases: list[Release] | None = None) -> ProjectHistory:
    with open(path, encoding="utf-8") as fh:
        history = parse_dump(fh)
    if releases:
        history = history.with_releases(releases)
    else:
        history = history.with_releases([Release("HEAD", 2**62, 1)])
    return history


# ---------------------------------------------------------------- releases


def _parse_date(text: str) -> int:
    text = text.strip()
    if text.isdigit():
        return int(text)
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def read_releases(path: str | Path | IO[str]) -> list[Release]:
    fh = open(path, encoding="utf-8", newline="") if not hasattr(path, "read") else path
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"tag", "date"} <= set(reader.fieldnames):
            raise ConfigError("releases file needs a 'tag,date' header")
        raw = []
        for row in reader:
            try:
                raw.append((_parse_date(row["date"]), row["tag"]))
            except ValueError as exc:
                raise ConfigError(f"bad release date {row['date']!r}: {exc}") from None
    finally:
        if fh is not path:
            fh.close()
    raw.sort()
    for (d1, t1), (d2, t2) in zip(raw, raw[1:]):
        if d1 == d2:
            raise ConfigError(f"releases {t1} and {t2} share a date")
    return [Release(tag, date, i) for i, (date, tag) in enumerate(raw, 1)]


def assign_releases(commits: Iterable[Commit], releases: list[Release]) -> dict[str, int]:
    """Map each commit to the earliest release dated at or after it (clamped to first/last)."""
    if not releases:
        raise ConfigError("at least one release is required")
    dates = [r.date for r in releases]
    if any(a >= b for a, b in zip(dates, dates[1:])):
        raise ConfigError("release dates must be strictly increasing")
    out = {}
    for c in commits:
        i = bisect.bisect_left(dates, c.timestamp)
        out[c.hash] = releases[min(i, len(releases) - 1)].index
    return out


# ---------------------------------------------------------------- sanity checks


@dataclass
class Thresholds:
    min_commits: int = 20  # strictly more than
    min_weeks: float = 50.0
    min_contributors: int = 8
    min_defective_commits: int = 10
    min_pull_requests: int = 1
    min_issues: int = 8  # strictly more than


@dataclass
class ValidationReport:
    checks: dict[str, str]
    reasons: dict[str, str]

    @property
    def passed(self) -> bool:
        return all(v != "fail" for v in self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if v == "fail"]

    @property
    def unchecked(self) -> list[str]:
        return [k for k, v in self.checks.items() if v == "unchecked"]


def validate_project(history: ProjectHistory, thresholds: Thresholds | None = None,
                     defective_commits: int | None = None,
                     metadata: dict | None = None) -> ValidationReport:
    th = thresholds or Thresholds()
    checks: dict[str, str] = {}
    reasons: dict[str, str] = {}

    def record(name: str, ok: bool | None, why: str) -> None:
        checks[name] = "unchecked" if ok is None else ("pass" if ok else "fail")
        reasons[name] = why

    commits = history.non_merge()
    record("Commits", len(commits) > th.min_commits, f"{len(commits)} non-merge commits")
    if commits:
        span = (max(c.timestamp for c in commits) - min(c.timestamp for c in commits)) / (7 * 86400)
    else:
        span = 0.0
    record("Duration", span >= th.min_weeks, f"{span:.1f} weeks of activity")
    devs = len(history.authors())
    record("Personal Purpose", devs >= th.min_contributors, f"{devs} contributors")
    if defective_commits is None:
        record("Defective Commits", None, "labels not supplied")
    else:
        record("Defective Commits", defective_commits >= th.min_defective_commits,
               f"{defective_commits} defective commits")
    if metadata is None:
        record("Collaboration", None, "no project metadata file")
        record("Issues", None, "no project metadata file")
    else:
        prs = int(metadata.get("pull_requests", 0))
        issues = int(metadata.get("issues", 0))
        record("Collaboration", prs >= th.min_pull_requests, f"{prs} pull requests")
        record("Issues", issues > th.min_issues, f"{issues} issues")
    return ValidationReport(checks, reasons)


def history_from_records(records: Iterable[dict]) -> ProjectHistory:
    """Build a history from in-memory dump records (test and fixture helper)."""
    buf = io.StringIO("".join(json.dumps(r) + "\n" for r in records))
    return parse_dump(buf)
