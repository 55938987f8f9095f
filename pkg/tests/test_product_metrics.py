import pytest
from hypothesis import given, settings, strategies as st

from defectlab.errors import ProductImportError, SnapshotError
from defectlab.product_metrics import (NATIVE_COLUMNS, PRODUCT_COLUMNS, ProductRow, code_lines, compute_product_row,
                                       compute_product_rows, import_product_csv, method_complexities,
                                       read_product_csv, snapshot, tokenize, write_product_csv)

SRC = """class A {
    // comment
    private int x;
    static int y = 2;

    public int f(int a, int b) {
        if (a > 0 && b > 0) {
            return 1;
        }
        return 0;
    }
}
"""


def row(text):
    return compute_product_row(tokenize(text), text)


def test_table_has_45_columns():
    assert len(PRODUCT_COLUMNS) == 45 and len(set(PRODUCT_COLUMNS)) == 45
    assert set(NATIVE_COLUMNS) < set(PRODUCT_COLUMNS)


def test_tokenizer_kinds():
    toks = [t for t in tokenize('int s = "a // b"; /* c\n d */ x++; // e\n') if t.significant]
    assert [t.kind for t in toks] == ["keyword", "identifier", "punct", "string", "semicolon",
                                      "identifier", "punct", "punct", "semicolon"]
    assert toks[-1].line == 2


def test_code_lines_ignore_comments_and_blanks():
    text = "/* header\n * more */\nclass X {\n\n  // c\n  int a; /* tail */\n}\n"
    assert code_lines(text) == {3, 6, 7}


def test_example_file_metrics():
    r = row(SRC)
    assert (r["CountLine"], r["CountLineCode"], r["CountLineComment"], r["CountLineBlank"]) == (12, 10, 1, 1)
    assert r["CountSemicolon"] == 4 and r["CountStmt"] == 5
    assert r["CountDeclMethod"] == 1 and r["CountDeclMethodPublic"] == 1 and r["CountDeclInstanceMethod"] == 1
    assert r["CountDeclInstanceVariable"] == 1 and r["CountDeclClassVariable"] == 1
    assert (r["SumCyclomatic"], r["SumCyclomaticStrict"], r["SumCyclomaticModified"]) == (2, 3, 2)
    assert r["AvgLine"] == 6 and r["AvgLineCode"] == 6
    assert r["RatioCommentToCode"] == pytest.approx(0.1)


def test_switch_counts_once_in_modified():
    text = ("class S { int g(int k) { switch (k) { case 1: return 1; case 2: return 2; default: return 0; } } "
            "abstract void h(); }")
    (m,) = method_complexities(text)
    assert (m["cyclomatic"], m["modified"]) == (3, 2) and m["has_switch"]
    assert row(text)["CountDeclMethod"] == 2


def test_empty_file():
    r = row("")
    assert r["CountLine"] == 0 and r["CountLineCode"] == 0 and r["SumCyclomatic"] == 0
    assert r["AvgCyclomatic"] == 0.0


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("ab1 {};/*\"'\n\r\t=+&|.\\")), max_size=80))
def test_tokens_concatenate_to_source(text):
    toks = tokenize(text)
    assert "".join(t.text for t in toks) == text


def test_product_csv_roundtrip_and_import(tmp_path):
    native = {("c1", "F.java"): ProductRow("F.java", "c1", row(SRC))}
    write_product_csv(native.values(), tmp_path / "n.csv")
    assert (tmp_path / "n.csv").read_text().splitlines()[0].split(",")[2:] == PRODUCT_COLUMNS
    back = read_product_csv(tmp_path / "n.csv")
    assert back[("c1", "F.java")].metrics == pytest.approx(native[("c1", "F.java")].metrics)

    (tmp_path / "imp.csv").write_text("file,commit,%LackOfCohesion,CountLineCode,Unknown\n"
                                      "F.java,c1,40,99,1\nG.java,c2,10,,2\n")
    merged = import_product_csv(tmp_path / "imp.csv", native)
    f = merged[("c1", "F.java")].metrics
    assert f["PercentLackOfCohesion"] == 40 and f["CountLineCode"] == 99 and f["CountSemicolon"] == 4
    assert merged[("c2", "G.java")].metrics == {"PercentLackOfCohesion": 10}

    (tmp_path / "dup.csv").write_text("file,commit\nF.java,c1\nF.java,c1\n")
    with pytest.raises(ProductImportError):
        import_product_csv(tmp_path / "dup.csv")
    (tmp_path / "bad.csv").write_text("path,sha\nF.java,c1\n")
    with pytest.raises(ProductImportError):
        import_product_csv(tmp_path / "bad.csv")


def test_snapshot_rows(process_repo):
    h = process_repo["history"]
    rows = list(compute_product_rows(h, process_repo["path"]))
    assert len(rows) == 9
    first = {r.canonical_id: r.metrics for r in rows if r.commit_hash == process_repo["commits"][0]}
    assert first["core/A.java"]["CountLine"] == 100 and first["core/B.java"]["CountLine"] == 50
    with pytest.raises(SnapshotError):
        snapshot(process_repo["path"], process_repo["commits"][0], "util/C.java")


@pytest.mark.parametrize("text, code, comment, semis", [
    ("int a; // x", 1, 1, 1),
    ("/* a\nb */", 0, 2, 0),
    ('String s = "//x";', 1, 0, 1),
])
def test_tokenizer_line_rules(text, code, comment, semis):
    r = row(text)
    assert (r["CountLineCode"], r["CountLineComment"], r["CountSemicolon"]) == (code, comment, semis)


def test_branchless_method_has_complexity_one():
    (m,) = method_complexities("class K { void f() { int a = 1; } }")
    assert (m["cyclomatic"], m["strict"], m["modified"]) == (1, 1, 1)


methods = st.lists(st.sampled_from(["if (a) {}", "while (b) {}", "x = a && b;", "y = a || b ? 1 : 2;",
                                    "switch (k) { case 1: break; case 2: break; }", "for (;;) {}",
                                    "try {} catch (E e) {}", "z = 1;"]), max_size=6)


@settings(max_examples=100, deadline=None)
@given(st.lists(methods, min_size=1, max_size=3), st.sampled_from(["", "// note\n", "/* c */ "]))
def test_cyclomatic_ordering_and_line_conservation(bodies, comment):
    text = "class G {\n" + "".join(f"  {comment}int m{i}() {{\n    " + "\n    ".join(b) + "\n  }\n"
                                   for i, b in enumerate(bodies)) + "}\n"
    for m in method_complexities(text):
        assert 1 <= m["cyclomatic"] <= m["strict"]
        if m["has_switch"]:
            assert m["modified"] <= m["cyclomatic"]
        else:
            assert m["modified"] == m["cyclomatic"]
    r = row(text)
    assert r["CountLineBlank"] + r["CountLineComment"] + r["CountLineCode"] >= r["CountLine"]


def test_snapshot_history(process_repo):
    c1, c2 = process_repo["commits"][:2]
    before = snapshot(process_repo["path"], c1, "core/A.java")
    after = snapshot(process_repo["path"], c2, "core/A.java")
    assert before != after and "a2_0" in after and "a2_0" not in before


def test_full_import_populates_every_column(tmp_path):
    header = ["file", "commit"] + PRODUCT_COLUMNS
    (tmp_path / "full.csv").write_text(",".join(header) + "\n" + ",".join(["F.java", "c1"] + ["1"] * 45) + "\n")
    merged = import_product_csv(tmp_path / "full.csv")
    assert set(merged[("c1", "F.java")].metrics) == set(PRODUCT_COLUMNS)
