"""Thin wrapper around the git command line."""

from __future__ import annotations

import logging
import os
import subprocess
from pathlib import Path

from .errors import MiningError

log = logging.getLogger(__name__)

GIT_ENV_VAR = "DEFECTLAB_GIT"


def git_binary() -> str:
    return os.environ.get(GIT_ENV_VAR, "git")


def run_git(repo: str | os.PathLike, *args: str, check: bool = True, input: bytes | None = None) -> bytes:
    cmd = [git_binary(), "-C", str(repo), "-c", "core.quotepath=off", "-c", "log.showSignature=false", *args]
    try:
        proc = subprocess.run(cmd, input=input, capture_output=True, check=False)
    except OSError as exc:
        raise MiningError(f"cannot run {cmd[0]}", str(exc)) from exc
    if check and proc.returncode != 0:
        raise MiningError(f"git {args[0] if args else ''} failed (exit {proc.returncode})",
                          proc.stderr.decode("utf-8", "replace"))
    return proc.stdout


def is_git_repo(repo: str | os.PathLike) -> bool:
    if not Path(repo).is_dir():
        return False
    proc = subprocess.run([git_binary(), "-C", str(repo), "rev-parse", "--git-dir"], capture_output=True)
    return proc.returncode == 0


def has_head(repo: str | os.PathLike) -> bool:
    proc = subprocess.run([git_binary(), "-C", str(repo), "rev-parse", "--verify", "-q", "HEAD"],
                          capture_output=True)
    return proc.returncode == 0


def unquote_path(path: str) -> str:
    """Undo git's C-style quoting of unusual path names."""
    if len(path) < 2 or not (path.startswith('"') and path.endswith('"')):
        return path
    body = path[1:-1]
    out = bytearray()
    i = 0
    simple = {"n": b"\n", "t": b"\t", '"': b'"', "\\": b"\\", "a": b"\a", "b": b"\b",
              "f": b"\f", "r": b"\r", "v": b"\v"}
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt in simple:
                out += simple[nxt]
                i += 2
                continue
            if nxt.isdigit():
                out.append(int(body[i + 1:i + 4], 8))
                i += 4
                continue
        out += ch.encode("utf-8")
        i += 1
    return out.decode("utf-8", "replace")


class CatFile:
    """Persistent ``git cat-file --batch`` reader; avoids one process per snapshot."""

    def __init__(self, repo: str | os.PathLike):
        self.repo = str(repo)
        self._proc: subprocess.Popen | None = None

    def _start(self) -> subprocess.Popen:
        if self._proc is None:
            self._proc = subprocess.Popen(
                [git_binary(), "-C", self.repo, "cat-file", "--batch"],
                stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL)
        return self._proc

    def read(self, rev: str, path: str) -> bytes | None:
        """Blob contents of ``rev:path``, or None if missing."""
        proc = self._start()
        assert proc.stdin is not None and proc.stdout is not None
        proc.stdin.write(f"{rev}:{path}\n".encode("utf-8"))
        proc.stdin.flush()
        header = proc.stdout.readline().decode("utf-8", "replace").rstrip("\n")
        if header.endswith("missing") or header.endswith("ambiguous"):
            return None
        parts = header.split()
        if len(parts) != 3:
            raise MiningError("unexpected cat-file header", header)
        kind, size = parts[1], int(parts[2])
        data = proc.stdout.read(size)
        proc.stdout.read(1)
        if kind != "blob":
            return None
        return data

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait()
            self._proc = None

    def __enter__(self) -> "CatFile":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
