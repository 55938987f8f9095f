import pytest

from defectlab import fixtures as fx
from defectlab.mining import Release, dump_history, load_history


def _mined(tmp_path_factory, name, builder, releases=None):
    base = tmp_path_factory.mktemp(name)
    info = builder(base / "repo")
    dump = base / "dump.jsonl"
    dump_history(info["path"], dump)
    rels = [Release(t, d, i) for i, (t, d) in enumerate(releases or [], 1)] or None
    info["dump"] = dump
    info["history"] = load_history(dump, rels)
    return info


@pytest.fixture(scope="session")
def three_commit(tmp_path_factory):
    return _mined(tmp_path_factory, "three", fx.make_three_commit_repo)


@pytest.fixture(scope="session")
def merge_repo(tmp_path_factory):
    return _mined(tmp_path_factory, "merge", fx.make_merge_repo)


@pytest.fixture(scope="session")
def rename_repo(tmp_path_factory):
    return _mined(tmp_path_factory, "rename", fx.make_rename_repo)


@pytest.fixture(scope="session")
def szz_repo(tmp_path_factory):
    return _mined(tmp_path_factory, "szz", fx.make_szz_repo)


@pytest.fixture(scope="session")
def process_repo(tmp_path_factory):
    return _mined(tmp_path_factory, "process", fx.make_process_repo, fx.PROCESS_RELEASES)


@pytest.fixture(scope="session")
def pipeline_repo(tmp_path_factory):
    info = fx.make_pipeline_repo(tmp_path_factory.mktemp("pipeline") / "repo")
    return info


# ------------------------------------------------------------------ acceptance reporting

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped:
            reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
            _CRITERIA[n] = ("SKIP", reason.removeprefix("Skipped: "))
        else:
            _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
