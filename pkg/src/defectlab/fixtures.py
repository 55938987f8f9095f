"""Scripted git repositories with known histories, used by tests and the ``fixtures`` command.

Every repository is built with pinned author identities and timestamps, so
commit hashes are identical on every machine with the same git version.
"""

from __future__ import annotations

import os
import random
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .gitcmd import git_binary

DAY = 86400
T0 = 1_600_000_000

AUTHORS = {
    "alice": ("Alice Adams", "Alice@Example.org"),
    "bob": ("Bob Brown", "bob@example.org"),
    "carol": ("Carol Chen", "carol@example.org"),
    "dave": ("Dave Diaz", "dave@example.org"),
    "erin": ("Erin Evans", "erin@example.org"),
    "frank": ("Frank Fox", "frank@example.org"),
    "grace": ("Grace Gray", "grace@example.org"),
    "heidi": ("Heidi Hill", "heidi@example.org"),
}


def author_id(who: str) -> str:
    """Normalized identity (lowercased email) for a fixture author key."""
    return AUTHORS[who][1].lower()


@dataclass
class RepoBuilder:
    path: Path
    files: dict[str, list[str]] = field(default_factory=dict)
    hashes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.path = Path(self.path)
        if self.path.exists():
            shutil.rmtree(self.path)
        self.path.mkdir(parents=True)
        self._git("init", "-q", "-b", "main")

    def _git(self, *args: str, env: dict | None = None) -> str:
        full_env = dict(os.environ)
        full_env.update({"GIT_CONFIG_GLOBAL": os.devnull, "GIT_CONFIG_NOSYSTEM": "1"})
        if env:
            full_env.update(env)
        proc = subprocess.run([git_binary(), "-C", str(self.path), "-c", "commit.gpgsign=false", *args],
                              capture_output=True, env=full_env, check=True)
        return proc.stdout.decode()

    def write(self, path: str, lines: list[str]) -> None:
        self.files[path] = list(lines)

    def delete(self, path: str) -> None:
        del self.files[path]

    def rename(self, old: str, new: str) -> None:
        self.files[new] = self.files.pop(old)

    def _sync(self) -> None:
        tracked = set(self._git("ls-files").split("\n")) - {""}
        for rel in tracked - set(self.files):
            (self.path / rel).unlink()
        for rel, lines in self.files.items():
            target = self.path / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            text = "".join(line + "\n" for line in lines)
            if not target.exists() or target.read_text() != text:
                target.write_text(text)

    def commit(self, who: str, ts: int, message: str) -> str:
        self._sync()
        self._git("add", "-A")
        name, email = AUTHORS[who]
        stamp = f"@{ts} +0000"
        env = {"GIT_AUTHOR_NAME": name, "GIT_AUTHOR_EMAIL": email, "GIT_AUTHOR_DATE": stamp,
               "GIT_COMMITTER_NAME": name, "GIT_COMMITTER_EMAIL": email, "GIT_COMMITTER_DATE": stamp}
        self._git("commit", "-q", "--allow-empty", "-m", message, env=env)
        sha = self._git("rev-parse", "HEAD").strip()
        self.hashes.append(sha)
        return sha

    def merge(self, branch: str, who: str, ts: int, message: str) -> str:
        name, email = AUTHORS[who]
        stamp = f"@{ts} +0000"
        env = {"GIT_AUTHOR_NAME": name, "GIT_AUTHOR_EMAIL": email, "GIT_AUTHOR_DATE": stamp,
               "GIT_COMMITTER_NAME": name, "GIT_COMMITTER_EMAIL": email, "GIT_COMMITTER_DATE": stamp}
        self._git("merge", "-q", "--no-ff", "-m", message, branch, env=env)
        sha = self._git("rev-parse", "HEAD").strip()
        self.hashes.append(sha)
        # reload working tree state
        self.files = {}
        for rel in self._git("ls-files").split("\n"):
            if rel:
                self.files[rel] = (self.path / rel).read_text().splitlines()
        return sha

    def branch(self, name: str, checkout: bool = True) -> None:
        self._git("checkout", "-q", "-b", name) if checkout else self._git("branch", name)

    def checkout(self, name: str) -> None:
        self._git("checkout", "-q", name)
        self.files = {}
        for rel in self._git("ls-files").split("\n"):
            if rel:
                self.files[rel] = (self.path / rel).read_text().splitlines()


def _java_body(prefix: str, n: int) -> list[str]:
    return [f"    int {prefix}_{i} = {i};" for i in range(n)]


# ------------------------------------------------------------------ small repos


def make_three_commit_repo(path: str | Path) -> dict:
    """Three linear commits with known numstat counts."""
    rb = RepoBuilder(Path(path))
    rb.write("src/App.java", ["class App {"] + _java_body("a", 8) + ["}"])
    c1 = rb.commit("alice", T0, "Initial import")
    lines = rb.files["src/App.java"]
    rb.write("src/App.java", lines[:3] + ["    int changed_1 = 1;", "    int changed_2 = 2;"] + lines[4:])
    c2 = rb.commit("bob", T0 + DAY, "Tweak app constants")
    rb.write("src/Util.java", ["class Util {", "}"])
    rb.write("logo.png", ["\x00\x01binary"])
    c3 = rb.commit("alice", T0 + 2 * DAY, "Add util class")
    return {"path": rb.path, "commits": [c1, c2, c3],
            "numstat": {c1: {"src/App.java": (10, 0)},
                        c2: {"src/App.java": (2, 1)},
                        c3: {"src/Util.java": (2, 0), "logo.png": (0, 0)}}}


def make_merge_repo(path: str | Path) -> dict:
    rb = RepoBuilder(Path(path))
    rb.write("Main.java", ["class Main {", "}"])
    c1 = rb.commit("alice", T0, "Start")
    rb.branch("feature")
    rb.write("Feature.java", ["class Feature {", "}"])
    c2 = rb.commit("bob", T0 + DAY, "Feature work")
    rb.checkout("main")
    rb.write("Main.java", ["class Main {", "  int x;", "}"])
    c3 = rb.commit("alice", T0 + 2 * DAY, "Main work")
    m = rb.merge("feature", "alice", T0 + 3 * DAY, "Merge pull request from feature")
    return {"path": rb.path, "commits": [c1, c2, c3, m], "merge": m}


def make_rename_repo(path: str | Path) -> dict:
    """A.java -> B.java -> lib/C.java with edits in between, plus a delete/re-create of D.java."""
    rb = RepoBuilder(Path(path))
    rb.write("A.java", ["class A {"] + _java_body("r", 12) + ["}"])
    rb.write("D.java", ["class D {", "}"])
    c1 = rb.commit("alice", T0, "Create A and D")
    rb.rename("A.java", "B.java")
    c2 = rb.commit("bob", T0 + DAY, "Rename A to B")
    lines = rb.files["B.java"]
    rb.write("B.java", lines + ["// tail"])
    rb.delete("D.java")
    c3 = rb.commit("alice", T0 + 2 * DAY, "Edit B, drop D")
    rb.rename("B.java", "lib/C.java")
    rb.write("D.java", ["class D {", "  int again;", "}"])
    c4 = rb.commit("carol", T0 + 3 * DAY, "Move B into lib, restore D")
    return {"path": rb.path, "commits": [c1, c2, c3, c4]}


# ------------------------------------------------------------------ SZZ fixture


def make_szz_repo(path: str | Path) -> dict:
    """Twelve commits; commit 5 injects an off-by-one into Parser.java, commit 11 fixes it.

    The fix also deletes one blank line and one comment line introduced by other
    commits, which the line filter must ignore.  No other commit message matches
    the default fix keywords.
    """
    rb = RepoBuilder(Path(path))
    parser = [
        "package demo;",
        "",
        "/**",
        " * Parses tokens.",
        " */",
        "public class Parser {",
        "    private int count;",
        "",
        "    public int sum(int[] xs, int n) {",
        "        int total = 0;",
        "        return total;",
        "    }",
        "}",
    ]
    rb.write("src/demo/Parser.java", parser)
    rb.write("README.md", ["demo project"])
    c1 = rb.commit("alice", T0, "Initial parser skeleton")

    rb.write("src/demo/Util.java", ["package demo;", "", "public class Util {",
                                   "    static int twice(int x) { return 2 * x; }", "}"])
    c2 = rb.commit("bob", T0 + 2 * DAY, "Add util helpers")

    p = rb.files["src/demo/Parser.java"]
    p = p[:12] + ["", "    public int size() {", "        return count;", "    }"] + p[12:]
    rb.write("src/demo/Parser.java", p)
    c3 = rb.commit("alice", T0 + 4 * DAY, "Add size accessor")

    u = rb.files["src/demo/Util.java"]
    rb.write("src/demo/Util.java", u[:4] + ["    static int thrice(int x) { return 3 * x; }"] + u[4:])
    c4 = rb.commit("carol", T0 + 6 * DAY, "Add thrice helper")

    p = rb.files["src/demo/Parser.java"]
    i = p.index("        int total = 0;")
    p = p[:i + 1] + ["        for (int i = 0; i <= n; i++) {", "            total += xs[i];", "        }"] + p[i + 1:]
    rb.write("src/demo/Parser.java", p)
    c5 = rb.commit("bob", T0 + 8 * DAY, "Accumulate values in sum")

    u = rb.files["src/demo/Util.java"]
    rb.write("src/demo/Util.java", u[:5] + ["    static int square(int x) { return x * x; }"] + u[5:])
    c6 = rb.commit("alice", T0 + 10 * DAY, "Add square helper")

    rb.write("README.md", ["demo project", "", "Usage notes."])
    c7 = rb.commit("dave", T0 + 12 * DAY, "Document usage")

    p = rb.files["src/demo/Parser.java"]
    i = p.index("    public int size() {")
    p = p[:i] + ["    // cached element count", "    public int length() {", "        return count;", "    }", ""] + p[i:]
    rb.write("src/demo/Parser.java", p)
    c8 = rb.commit("carol", T0 + 14 * DAY, "Add length alias")

    rb.write("src/demo/Lexer.java", ["package demo;", "", "public class Lexer {", "    int pos;", "}"])
    c9 = rb.commit("bob", T0 + 16 * DAY, "Introduce lexer")

    lx = rb.files["src/demo/Lexer.java"]
    rb.write("src/demo/Lexer.java", lx[:4] + ["    int line;"] + lx[4:])
    c10 = rb.commit("alice", T0 + 18 * DAY, "Track lexer line")

    p = rb.files["src/demo/Parser.java"]
    p = [("        for (int i = 0; i < n; i++) {" if ln == "        for (int i = 0; i <= n; i++) {" else ln)
         for ln in p]
    i = p.index("    // cached element count")
    del p[i]
    # drop the blank line between the two accessors (it came from commit 8)
    j = p.index("    public int size() {")
    assert p[j - 1] == ""
    del p[j - 1]
    rb.write("src/demo/Parser.java", p)
    c11 = rb.commit("carol", T0 + 20 * DAY, "Fix off-by-one in parser loop")

    lx = rb.files["src/demo/Lexer.java"]
    rb.write("src/demo/Lexer.java", lx[:5] + ["    int column;"] + lx[5:])
    c12 = rb.commit("dave", T0 + 22 * DAY, "Track lexer column")

    return {"path": rb.path,
            "commits": [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11, c12],
            "bug": c5, "fix": c11, "file": "src/demo/Parser.java",
            "filtered_origins": [c8]}


# ------------------------------------------------------------------ process-metric fixture

PROCESS_RELEASES = [("v1", T0 + 15 * DAY), ("v2", T0 + 100 * DAY)]


def make_process_repo(path: str | Path) -> dict:
    """Six commits by three authors over two releases (see tests for the hand-traced metrics)."""
    rb = RepoBuilder(Path(path))
    a = ["class A {"] + _java_body("a", 98) + ["}"]
    b = ["class B {"] + _java_body("b", 48) + ["}"]
    rb.write("core/A.java", a)
    rb.write("core/B.java", b)
    c1 = rb.commit("alice", T0, "Create core classes")

    a = rb.files["core/A.java"]
    rb.write("core/A.java", a[:10] + ["    int a2_0 = 0;", "    int a2_1 = 1;", "    int a2_2 = 2;"] + a[11:])
    c2 = rb.commit("bob", T0 + 10 * DAY, "Adjust A constants")

    a = rb.files["core/A.java"]
    rb.write("core/A.java", a[:30] + [f"    int a3_{i} = {i};" for i in range(4)] + a[34:])
    rb.write("util/C.java", ["class C {"] + _java_body("c", 28) + ["}"])
    c3 = rb.commit("alice", T0 + 20 * DAY, "Rework A and add C")

    b = rb.files["core/B.java"]
    rb.write("core/B.java", b[:20] + [f"    int b4_{i} = {i};" for i in range(20)] + b[30:])
    c4 = rb.commit("carol", T0 + 30 * DAY, "Expand B")

    c = rb.files["util/C.java"]
    rb.write("util/C.java", c[:-1] + [f"    int c5_{i} = {i};" for i in range(6)] + c[-1:])
    rb.write("README.md", ["one", "two", "three"])
    c5 = rb.commit("bob", T0 + 40 * DAY, "Extend C and add readme")

    a = rb.files["core/A.java"]
    rb.write("core/A.java", a[:50] + ["    int a6_0 = 0;"] + a[51:])
    c = rb.files["util/C.java"]
    rb.write("util/C.java", c[:5] + ["    int c6_0 = 0;", "    int c6_1 = 1;"] + c[7:])
    rb.delete("core/B.java")
    c6 = rb.commit("alice", T0 + 50 * DAY, "Touch A and C, remove B")
    return {"path": rb.path, "commits": [c1, c2, c3, c4, c5, c6], "releases": PROCESS_RELEASES}


# ------------------------------------------------------------------ pipeline fixture

_FIX_MESSAGES = ["Fix crash when input is empty", "fixed wrong index", "Bug: null handling",
                 "Repair error in parser state", "patch overflow in counter"]
_PLAIN_MESSAGES = ["Add feature", "Refactor module", "Update logic", "Improve naming",
                   "Extend handling", "Tidy code", "Rework internals", "Support option"]


def make_pipeline_repo(path: str | Path, seed: int = 7, n_commits: int = 90) -> dict:
    """Randomized but seeded Java project with regular fix commits, for end-to-end runs."""
    rng = random.Random(seed)
    rb = RepoBuilder(Path(path))
    files = [f"{d}/F{i}.java" for d, i in
             [("app", 0), ("app", 1), ("app", 2), ("core", 3), ("core", 4), ("core", 5),
              ("io", 6), ("io", 7), ("io", 8), ("ui", 9)]]
    people = list(AUTHORS)
    counter = 0

    def fresh_line() -> str:
        nonlocal counter
        counter += 1
        kind = rng.random()
        if kind < 0.15:
            return f"        if (v{counter} > {counter % 7}) {{ total += {counter}; }}"
        if kind < 0.25:
            return f"        // note {counter}"
        return f"        total += {counter};"

    for f in files[:4]:
        rb.write(f, ["class X {", "    int run(int total) {"] + [fresh_line() for _ in range(6)]
                 + ["        return total;", "    }", "}"])
    rb.commit("alice", T0, "Initial layout")
    ts = T0
    live = files[:4]
    releases = []
    for k in range(1, n_commits):
        ts += rng.randint(2, 6) * DAY
        if len(live) < len(files) and rng.random() < 0.12:
            new = files[len(live)]
            rb.write(new, ["class X {", "    int run(int total) {"] + [fresh_line() for _ in range(5)]
                     + ["        return total;", "    }", "}"])
            live.append(new)
        is_fix = rng.random() < 0.3
        touched = rng.sample(live, k=min(len(live), rng.choice([1, 1, 2, 3])))
        for f in touched:
            lines = rb.files[f]
            body = list(range(2, len(lines) - 3))
            if is_fix or rng.random() < 0.4:
                for idx in rng.sample(body, k=min(len(body), rng.randint(1, 2))):
                    lines[idx] = fresh_line()
            if not is_fix:
                at = rng.randint(2, len(lines) - 3)
                lines[at:at] = [fresh_line() for _ in range(rng.randint(1, 5))]
            if rng.random() < 0.1 and len(body) > 6:
                del lines[rng.choice(body)]
            rb.write(f, lines)
        msg = rng.choice(_FIX_MESSAGES) if is_fix else rng.choice(_PLAIN_MESSAGES)
        rb.commit(people[rng.randrange(len(people))], ts, msg)
        if k % 15 == 0:
            releases.append((f"r{len(releases) + 1}", ts))
    releases.append((f"r{len(releases) + 1}", ts))
    return {"path": rb.path, "commits": list(rb.hashes), "releases": releases}


def write_releases_csv(releases: list[tuple[str, int]], out: str | Path) -> None:
    from datetime import datetime, timezone

    with open(out, "w", encoding="utf-8") as fh:
        fh.write("tag,date\n")
        for tag, ts in releases:
            fh.write(f"{tag},{datetime.fromtimestamp(ts, timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')}\n")
