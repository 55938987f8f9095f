import csv
from collections import Counter

import pytest
from helpers import cli, run_pipeline

from defectlab.cli import dispatch


@pytest.fixture(scope="module")
def pipeline_out(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("cli"))


def test_unknown_command_is_usage_error(capsys):
    assert dispatch(["bogus"]) == 1
    assert "usage" in capsys.readouterr().err.lower()
    assert dispatch([]) == 1


def test_version_and_help(capsys):
    assert dispatch(["--version"]) == 0
    assert "defectlab" in capsys.readouterr().out
    assert dispatch(["experiment", "--help"]) == 0


def test_missing_input_exits_2(tmp_path, capsys):
    assert cli("mine", "--repo", tmp_path / "nope", "--out", tmp_path / "d.jsonl") == 2
    assert "failed" in capsys.readouterr().err


def test_bad_measure_is_validation_error(pipeline_out):
    assert cli("rank", "--results", pipeline_out / "results" / "rq1_results.csv", "--measure", "speed",
               "--out", pipeline_out / "x.csv") == 1


def test_pipeline_produces_25_rows_per_learner_and_mode(pipeline_out):
    with open(pipeline_out / "results" / "rq1_results.csv") as fh:
        rows = list(csv.DictReader(fh))
    counts = Counter((r["mode"], r["learner"]) for r in rows)
    assert len(counts) == 12 and set(counts.values()) == {25}
    with open(pipeline_out / "rank.csv") as fh:
        ranks = list(csv.DictReader(fh))
    assert len(ranks) == 12 and min(int(r["rank"]) for r in ranks) == 1


def test_validate_and_report(pipeline_out, capsys):
    assert cli("validate", "--history", pipeline_out / "dump.jsonl", "--labels", pipeline_out / "labels.csv") == 0
    assert capsys.readouterr().out.strip().splitlines()[-1] in ("PASS", "FAIL")
    assert cli("report", "--results", pipeline_out / "results" / "rq1_results.csv", "--measures", "auc,ifa",
               "--out", pipeline_out / "report.csv") == 0
    assert (pipeline_out / "report.csv").read_text().splitlines()[0] == "learner,mode,measure,median,iqr,projects"
    assert cli("releases", "--file", pipeline_out / "releases.csv", "--history", pipeline_out / "dump.jsonl") == 0


def test_offline_label_route(pipeline_out, tmp_path):
    assert cli("label", "--history", pipeline_out / "dump.jsonl", "--blame", tmp_path / "missing.jsonl",
               "--out", tmp_path / "l.csv") == 2


def test_fixtures_command(tmp_path):
    assert cli("fixtures", "--out", tmp_path, "--no-corpus") == 0
    for name in ("three_commit", "merge", "rename", "szz", "process", "pipeline"):
        assert (tmp_path / name / ".git").is_dir()
    assert (tmp_path / "process_releases.csv").is_file()
