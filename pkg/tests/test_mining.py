import io
import json

import pytest

from defectlab.errors import ConfigError, MiningError, ParseError
from defectlab.fixtures import AUTHORS, DAY, T0, RepoBuilder, author_id
from defectlab.mining import (Commit, Release, Thresholds, assign_releases, dump_history, history_from_records,
                              parse_dump, read_releases, validate_project)


def rec(sha_char, ts, parents=(), changes=(), author="a@x", message="m"):
    return {"hash": sha_char * 40, "parents": [p * 40 for p in parents], "author": author,
            "timestamp": ts, "message": message, "changes": list(changes)}


def change(path, added=1, deleted=0, kind="modify", **kw):
    return {"path": path, "added": added, "deleted": deleted, "kind": kind, "binary": False, **kw}


def test_three_commit_dump_counts(three_commit):
    lines = three_commit["dump"].read_text().splitlines()
    assert len(lines) == 3
    h = three_commit["history"]
    assert [c.hash for c in h.commits] == three_commit["commits"]
    for c in h.commits:
        got = {ch.path: (ch.lines_added, ch.lines_deleted) for ch in c.changes}
        assert got == three_commit["numstat"][c.hash]
    logo = [ch for ch in h.commits[2].changes if ch.path == "logo.png"][0]
    assert logo.binary and logo.kind == "add"


def test_dump_record_schema(three_commit):
    first = json.loads(three_commit["dump"].read_text().splitlines()[0])
    assert set(first) == {"hash", "parents", "author", "timestamp", "message", "changes"}
    assert first["author"] == author_id("alice") == "alice@example.org"
    assert first["timestamp"] == T0
    assert first["parents"] == []
    assert set(first["changes"][0]) == {"path", "added", "deleted", "kind", "binary"}


def test_dump_is_deterministic(three_commit, tmp_path):
    out = tmp_path / "again.jsonl"
    dump_history(three_commit["path"], out)
    assert out.read_bytes() == three_commit["dump"].read_bytes()


def test_empty_repository_gives_empty_dump(tmp_path):
    RepoBuilder(tmp_path / "empty")
    out = tmp_path / "d.jsonl"
    assert dump_history(tmp_path / "empty", out) == 0
    assert out.read_text() == ""
    assert parse_dump(io.StringIO("")).commits == []


def test_missing_repository_raises(tmp_path):
    with pytest.raises(MiningError):
        dump_history(tmp_path / "nope", tmp_path / "d.jsonl")


def test_merge_commit_flagged_and_excluded(merge_repo):
    h = merge_repo["history"]
    merge = h.get(merge_repo["merge"])
    assert len(merge.parents) == 2 and merge.is_merge
    assert merge.hash not in {c.hash for c in h.non_merge()}
    assert len(h.non_merge()) == 3


def test_parse_sorts_by_timestamp():
    h = history_from_records([rec("b", 20, changes=[change("x.java")]), rec("a", 10)])
    assert [c.timestamp for c in h.commits] == [10, 20]


def test_parse_ties_parent_first_then_hash():
    h = history_from_records([rec("c", 5, parents="a"), rec("a", 5), rec("b", 5)])
    assert [c.hash[0] for c in h.commits] == ["a", "b", "c"]
    h = history_from_records([rec("1", 5, parents="f"), rec("f", 5)])
    assert [c.hash[0] for c in h.commits] == ["f", "1"]


@pytest.mark.parametrize("bad, line", [
    ({"parents": [], "author": "a", "timestamp": 1, "message": "", "changes": []}, 2),
    ({"hash": "zz", "parents": [], "author": "a", "timestamp": 1, "message": "", "changes": []}, 2),
    ({"hash": "a" * 40, "parents": [], "author": "a", "timestamp": -1, "message": "", "changes": []}, 2),
])
def test_malformed_record_reports_line(bad, line):
    text = json.dumps(rec("c", 1)) + "\n" + json.dumps(bad) + "\n"
    with pytest.raises(ParseError) as err:
        parse_dump(io.StringIO(text))
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_invalid_json_and_duplicates():
    with pytest.raises(ParseError, match="line 1"):
        parse_dump(io.StringIO("{not json\n"))
    text = json.dumps(rec("c", 1)) + "\n" + json.dumps(rec("c", 2)) + "\n"
    with pytest.raises(ParseError, match="duplicate"):
        parse_dump(io.StringIO(text))


def test_binary_change_has_zero_counts():
    h = history_from_records([rec("a", 1, changes=[{"path": "x.bin", "added": 5, "deleted": 2, "kind": "add",
                                                     "binary": True}])])
    ch = h.commits[0].changes[0]
    assert ch.binary and (ch.lines_added, ch.lines_deleted) == (0, 0)


def test_rename_chain_shares_identity(rename_repo):
    h = rename_repo["history"]
    ids = {}
    for c in h.commits:
        for ch in c.changes:
            ids.setdefault(ch.path, set()).add(ch.canonical_id)
    assert ids["A.java"] == ids["B.java"] == ids["lib/C.java"] == {"A.java"}
    assert ids["D.java"] == {"D.java", "D.java#1"}
    kinds = [ch.kind for ch in h.commits[1].changes]
    assert kinds == ["rename"]
    all_ids = {ch.canonical_id for c in h.commits for ch in c.changes}
    assert all_ids == {"A.java", "D.java", "D.java#1"}


def test_rename_then_edit_in_records():
    h = history_from_records([
        rec("a", 1, changes=[change("A.java", 5, kind="add")]),
        rec("b", 2, changes=[change("B.java", 0, kind="rename", old_path="A.java")]),
        rec("c", 3, changes=[change("B.java", 2, 1)]),
    ])
    assert {ch.canonical_id for c in h.commits for ch in c.changes} == {"A.java"}


def test_assign_releases_rule():
    rels = [Release("r1", 10, 1), Release("r2", 20, 2)]
    commits = [Commit(ch * 40, [], "a", ts, "") for ch, ts in zip("abcde", [3, 12, 21, 5, 25])]
    got = assign_releases(commits, rels)
    assert [got[c.hash] for c in commits] == [1, 2, 2, 1, 2]
    assert assign_releases([Commit("f" * 40, [], "a", 20, "")], rels)["f" * 40] == 2


def test_assign_releases_needs_one():
    with pytest.raises(ConfigError):
        assign_releases([], [])


def test_release_totality(process_repo):
    h = process_repo["history"]
    counts = {}
    for c in h.non_merge():
        counts[h.release_of(c.hash)] = counts.get(h.release_of(c.hash), 0) + 1
    assert sum(counts.values()) == len(h.non_merge())
    assert counts == {1: 2, 2: 4}


def test_read_releases(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("tag,date\nv2,2021-01-01T00:00:00Z\nv1,2020-01-01\n")
    rels = read_releases(p)
    assert [(r.tag, r.index) for r in rels] == [("v1", 1), ("v2", 2)]
    assert rels[0].date == 1577836800
    p.write_text("name,when\nv1,2020-01-01\n")
    with pytest.raises(ConfigError):
        read_releases(p)
    p.write_text("tag,date\na,2020-01-01\nb,2020-01-01\n")
    with pytest.raises(ConfigError):
        read_releases(p)


def _synthetic_history(n_commits, weeks, authors):
    step = weeks * 7 * DAY // max(1, n_commits - 1)
    return history_from_records([
        {"hash": f"{i + 1:040x}", "parents": [], "author": authors[i % len(authors)],
         "timestamp": T0 + i * step, "message": "m", "changes": []}
        for i in range(n_commits)])


def test_validate_commit_threshold():
    rep = validate_project(_synthetic_history(5, 60, ["x", "y"]), defective_commits=20,
                           thresholds=Thresholds(min_contributors=1))
    assert rep.failures == ["Commits"]


def test_validate_duration_threshold():
    rep = validate_project(_synthetic_history(30, 49, [f"d{i}" for i in range(8)]), defective_commits=20)
    assert rep.failures == ["Duration"]


def test_validate_all_git_checks_pass_with_two_unchecked():
    rep = validate_project(_synthetic_history(30, 52, [f"d{i}" for i in range(8)]), defective_commits=10)
    assert rep.passed
    assert rep.unchecked == ["Collaboration", "Issues"]
    meta = validate_project(_synthetic_history(30, 52, [f"d{i}" for i in range(8)]), defective_commits=10,
                            metadata={"pull_requests": 0, "issues": 9})
    assert meta.failures == ["Collaboration"]


def test_validate_contributors_and_defects():
    rep = validate_project(_synthetic_history(30, 52, ["x", "y"]), defective_commits=3,
                           thresholds=Thresholds())
    assert set(rep.failures) == {"Personal Purpose", "Defective Commits"}


def test_author_normalization(three_commit):
    assert three_commit["history"].authors() == {author_id("alice"), author_id("bob")}
    assert all(a == a.lower() for a in three_commit["history"].authors())
    assert set(AUTHORS) >= {"alice", "bob"}
