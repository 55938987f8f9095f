from pathlib import Path

from defectlab import fixtures as fx
from defectlab.cli import dispatch


def cli(*argv) -> int:
    return dispatch([str(a) for a in argv])


def run_pipeline(out: Path, rqs: str = "1") -> Path:
    """Fixture repository to ranked results, every step through the command line."""
    out.mkdir(parents=True, exist_ok=True)
    info = fx.make_pipeline_repo(out / "repo")
    fx.write_releases_csv(info["releases"], out / "releases.csv")
    repo = info["path"]
    steps = [
        ("mine", "--repo", repo, "--out", out / "dump.jsonl"),
        ("label", "--history", out / "dump.jsonl", "--repo", repo, "--out", out / "labels.csv"),
        ("metrics", "process", "--history", out / "dump.jsonl", "--labels", out / "labels.csv",
         "--releases", out / "releases.csv", "--out", out / "process.csv"),
        ("metrics", "product", "--history", out / "dump.jsonl", "--repo", repo, "--out", out / "product.csv"),
        ("assemble", "--process", out / "process.csv", "--product", out / "product.csv", "--mode", "P+C",
         "--project", "pipeline", "--out", out / "dataset.csv"),
    ]
    for step in steps:
        assert cli(*step) == 0, step
    (out / "exp.cfg").write_text("projects = dataset.csv\nseed = 0\n")
    assert cli("experiment", "--config", out / "exp.cfg", "--rq", rqs, "--out", out / "results") == 0
    assert cli("rank", "--results", out / "results" / "rq1_results.csv", "--measure", "recall",
               "--out", out / "rank.csv") == 0
    return out
