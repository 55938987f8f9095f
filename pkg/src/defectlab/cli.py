"""Command line entry point: one subcommand per pipeline stage, files in, files out.

Exit status is 0 on success, 1 for invalid input or usage, 2 for runtime
failures such as a git invocation that fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import DefectLabError, ValidationError

log = logging.getLogger("defectlab")

RQ_ALL = list(range(1, 9))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage problems are exit 1 here
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _rq_list(text: str) -> list[int]:
    if text == "all":
        return RQ_ALL
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out or any(r not in RQ_ALL for r in out):
        raise argparse.ArgumentTypeError(f"research questions must be within 1..8, got {text!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="defectlab", description="Defect prediction pipeline over git histories.")
    p.add_argument("--version", action="version", version=f"defectlab {__version__}")
    p.add_argument("--seed", type=int, help="seed overriding the config file")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    s = sub.add_parser("mine", help="dump a repository's commit history")
    s.add_argument("--repo", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("releases", help="check a releases file and show commit assignment")
    s.add_argument("--file", required=True)
    s.add_argument("--history")

    s = sub.add_parser("validate", help="run the project sanity checks")
    s.add_argument("--history", required=True)
    s.add_argument("--labels")
    s.add_argument("--metadata")

    s = sub.add_parser("label", help="find bug-inducing changes")
    s.add_argument("--history", required=True)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--repo")
    src.add_argument("--blame", help="pre-dumped blame file instead of a live repository")
    s.add_argument("--out", required=True)
    s.add_argument("--keywords")
    s.add_argument("--no-line-filter", action="store_true")

    s = sub.add_parser("metrics", help="compute process or product metrics")
    msub = s.add_subparsers(dest="family", metavar="family", parser_class=_Parser)
    mp = msub.add_parser("process")
    mp.add_argument("--history", required=True)
    mp.add_argument("--labels")
    mp.add_argument("--releases")
    mp.add_argument("--out", required=True)
    mc = msub.add_parser("product")
    mc.add_argument("--history", required=True)
    mc.add_argument("--repo", required=True)
    mc.add_argument("--import", dest="import_csv")
    mc.add_argument("--out", required=True)

    s = sub.add_parser("assemble", help="join metrics into a dataset")
    s.add_argument("--process", required=True)
    s.add_argument("--product")
    s.add_argument("--mode", default="P", choices=["P", "C", "P+C"])
    s.add_argument("--granularity", default="file", choices=["file", "package"])
    s.add_argument("--level", default="jit", choices=["jit", "release"])
    s.add_argument("--project")
    s.add_argument("--out", required=True)

    s = sub.add_parser("experiment", help="run research questions over datasets")
    s.add_argument("--config", dest="exp_config")
    s.add_argument("--rq", type=_rq_list, default=RQ_ALL, help="e.g. 1, 1,3 or 1-8 (default all)")
    s.add_argument("--out", required=True)

    s = sub.add_parser("rank", help="Scott-Knott ranks of learner/mode groups")
    s.add_argument("--results", required=True)
    s.add_argument("--measure", required=True)
    s.add_argument("--direction", choices=["max", "min"])
    s.add_argument("--out", required=True)

    s = sub.add_parser("report", help="median and IQR of per-project medians")
    s.add_argument("--results", required=True)
    s.add_argument("--measures", default="recall,precision,pf,auc,popt20,ifa")
    s.add_argument("--out", required=True)

    s = sub.add_parser("fixtures", help="create fixture repositories and synthetic corpora")
    s.add_argument("--out", required=True)
    s.add_argument("--no-corpus", action="store_true", help="skip the synthetic corpora")
    return p


# ------------------------------------------------------------------ commands


def cmd_mine(a) -> None:
    from .mining import dump_history

    n = dump_history(a.repo, a.out)
    print(f"{n} commits written to {a.out}")


def _history(path: str, releases: str | None = None):
    from .mining import load_history, read_releases

    return load_history(path, read_releases(releases) if releases else None)


def cmd_releases(a) -> None:
    from .mining import read_releases
    from collections import Counter

    rels = read_releases(a.file)
    counts = Counter()
    if a.history:
        h = _history(a.history, a.file)
        counts = Counter(h.release_of(c.hash) for c in h.non_merge())
    print("index,tag,date,commits")
    for r in rels:
        print(f"{r.index},{r.tag},{r.date},{counts.get(r.index, '') if a.history else ''}")


def cmd_validate(a) -> None:
    from .labeling import defective_commits, read_labels
    from .mining import validate_project

    h = _history(a.history)
    n_def = len(defective_commits(read_labels(a.labels))) if a.labels else None
    meta = None
    if a.metadata:
        try:
            meta = json.loads(Path(a.metadata).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read metadata {a.metadata}: {exc}") from None
    rep = validate_project(h, defective_commits=n_def, metadata=meta)
    for name, status in rep.checks.items():
        print(f"{name}: {status} ({rep.reasons[name]})")
    print("PASS" if rep.passed else "FAIL")


def cmd_label(a, jobs: int) -> None:
    from .labeling import (DEFAULT_KEYWORDS, FileBlameProvider, GitBlameProvider, SZZFilters, label_history,
                           load_keywords, write_labels)

    h = _history(a.history)
    provider = GitBlameProvider(a.repo) if a.repo else FileBlameProvider(a.blame)
    kw = load_keywords(a.keywords) if a.keywords else DEFAULT_KEYWORDS
    labels = label_history(h, provider, kw, SZZFilters(line_filter=not a.no_line_filter), jobs=jobs)
    n = write_labels(labels, a.out)
    print(f"{n} inducing (commit, file) labels written to {a.out}")


def cmd_metrics(a) -> None:
    if a.family == "process":
        from .labeling import read_labels
        from .process_metrics import compute_rows, write_process_csv

        h = _history(a.history, a.releases)
        labels = read_labels(a.labels) if a.labels else []
        n = write_process_csv(compute_rows(h, labels), a.out)
    elif a.family == "product":
        from .product_metrics import compute_product_rows, import_product_csv, write_product_csv

        h = _history(a.history)
        rows = {(r.commit_hash, r.canonical_id): r for r in compute_product_rows(h, a.repo)}
        if a.import_csv:
            rows = import_product_csv(a.import_csv, rows)
        n = write_product_csv(rows.values(), a.out)
    else:
        raise UsageError("metrics needs a family: process or product")
    print(f"{n} rows written to {a.out}")


def cmd_assemble(a) -> None:
    from .dataset import assemble, write_dataset
    from .process_metrics import read_process_csv
    from .product_metrics import read_product_csv

    proc = read_process_csv(a.process)
    prod = read_product_csv(a.product) if a.product else None
    name = a.project or Path(a.process).stem
    ds = assemble(proc, prod, mode=a.mode, granularity=a.granularity, level=a.level, project=name)
    write_dataset(ds, a.out)
    print(f"{len(ds)} rows written to {a.out} ({ds.notes.get('dropped', 0)} unmatched rows dropped)")


def cmd_experiment(args) -> None:
    from .experiments import load_config, run_experiment

    path = args.exp_config or args.config
    if not path:
        raise UsageError("experiment needs --config")
    cfg = load_config(path, {"seed": args.seed, "jobs": args.jobs})
    manifest = run_experiment(cfg, args.rq, args.out)
    for key, run in sorted(manifest["runs"].items()):
        print(f"{key}: {', '.join(sorted(run['outputs']))} ({len(run['skips'])} skips)")


def cmd_rank(a, seed: int) -> None:
    from .evaluation import LOWER_IS_BETTER, MEASURES
    from .experiments import RANK_HEADER, _write_csv, learner_mode, per_project_medians, read_results, _fmt
    from .stats import scott_knott_table

    if a.measure not in MEASURES:
        raise ValidationError(f"unknown measure {a.measure!r}")
    direction = a.direction or ("min" if a.measure in LOWER_IS_BETTER else "max")
    groups = per_project_medians(read_results(a.results), a.measure, learner_mode)
    rows = [[r.group, str(r.rank), _fmt(r.median), _fmt(r.a12_vs_next), _fmt(r.p)]
            for r in scott_knott_table(groups, seed=seed, direction=direction)]
    _write_csv(Path(a.out), RANK_HEADER, rows)
    for r in rows:
        print(",".join(r))


def cmd_report(a) -> None:
    from .evaluation import MEASURES
    from .experiments import _write_csv, read_results, variance_report

    measures = [m.strip() for m in a.measures.split(",") if m.strip()]
    if set(measures) - set(MEASURES):
        raise ValidationError(f"unknown measures: {sorted(set(measures) - set(MEASURES))}")
    rows = variance_report(read_results(a.results), measures)
    _write_csv(Path(a.out), ["learner", "mode", "measure", "median", "iqr", "projects"], rows)
    for r in rows:
        print(",".join(r))


def cmd_fixtures(a, seed: int) -> None:
    from . import fixtures as fx
    from .synthetic import CORPORA, write_corpus

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    made = {
        "three_commit": fx.make_three_commit_repo(out / "three_commit"),
        "merge": fx.make_merge_repo(out / "merge"),
        "rename": fx.make_rename_repo(out / "rename"),
        "szz": fx.make_szz_repo(out / "szz"),
        "process": fx.make_process_repo(out / "process"),
        "pipeline": fx.make_pipeline_repo(out / "pipeline"),
    }
    fx.write_releases_csv(made["process"]["releases"], out / "process_releases.csv")
    fx.write_releases_csv(made["pipeline"]["releases"], out / "pipeline_releases.csv")
    for name in made:
        print(f"repository {out / name}")
    if not a.no_corpus:
        for name in CORPORA:
            paths = write_corpus(out / "corpus", name, seed=seed)
            cfg = out / "corpus" / f"{name}.cfg"
            cfg.write_text(f"projects = {name}/*.csv\nseed = {seed}\n", encoding="utf-8")
            print(f"corpus {out / 'corpus' / name} ({len(paths)} projects, config {cfg})")


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("defectlab: error: a command is required")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    seed = args.seed if args.seed is not None else 0
    jobs = args.jobs or 1
    try:
        c = args.command
        if c == "mine":
            cmd_mine(args)
        elif c == "releases":
            cmd_releases(args)
        elif c == "validate":
            cmd_validate(args)
        elif c == "label":
            cmd_label(args, jobs)
        elif c == "metrics":
            cmd_metrics(args)
        elif c == "assemble":
            cmd_assemble(args)
        elif c == "experiment":
            cmd_experiment(args)
        elif c == "rank":
            cmd_rank(args, seed)
        elif c == "report":
            cmd_report(args)
        elif c == "fixtures":
            cmd_fixtures(args, seed)
    except UsageError as exc:
        print(f"defectlab: error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"defectlab: error: {exc}", file=sys.stderr)
        return 1
    except DefectLabError as exc:
        print(f"defectlab: failed: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"defectlab: failed: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
