"""Lexical product metrics for Java-like sources, plus import of externally computed metrics.

Only the metrics that can be derived from a token stream are computed here.
Cross-file object-oriented metrics (cohesion, coupling, inheritance) and the
declarative/executable line splits have to come from an imported CSV.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from . import gitcmd
from .errors import ProductImportError, SnapshotError
from .mining import ProjectHistory

log = logging.getLogger(__name__)

PRODUCT_COLUMNS = [
    "AvgCyclomatic", "AvgCyclomaticModified", "AvgCyclomaticStrict", "AvgEssential",
    "AvgLine", "AvgLineBlank", "AvgLineCode", "AvgLineComment",
    "CountClassBase", "CountClassCoupled", "CountClassCoupledModified", "CountClassDerived",
    "CountDeclClassMethod", "CountDeclClassVariable", "CountDeclInstanceMethod",
    "CountDeclInstanceVariable", "CountDeclMethod", "CountDeclMethodAll", "CountDeclMethodDefault",
    "CountDeclMethodPrivate", "CountDeclMethodProtected", "CountDeclMethodPublic",
    "CountLine", "CountLineBlank", "CountLineCode", "CountLineCodeDecl", "CountLineCodeExe",
    "CountLineComment", "CountSemicolon", "CountStmt", "CountStmtDecl", "CountStmtExe",
    "MaxCyclomatic", "MaxCyclomaticModified", "MaxCyclomaticStrict", "MaxEssential",
    "MaxInheritanceTree", "MaxNesting", "PercentLackOfCohesion", "PercentLackOfCohesionModified",
    "RatioCommentToCode", "SumCyclomatic", "SumCyclomaticModified", "SumCyclomaticStrict",
    "SumEssential",
]

IMPORT_ONLY = frozenset({
    "AvgEssential", "SumEssential", "CountClassBase", "CountClassCoupled",
    "CountClassCoupledModified", "CountClassDerived", "CountDeclMethodAll",
    "CountLineCodeDecl", "CountLineCodeExe", "CountStmtDecl", "CountStmtExe",
    "MaxInheritanceTree", "PercentLackOfCohesion", "PercentLackOfCohesionModified",
})
NATIVE_COLUMNS = [c for c in PRODUCT_COLUMNS if c not in IMPORT_ONLY]

# Understand writes the cohesion columns with a percent sign.
_ALIASES = {"%LackOfCohesion": "PercentLackOfCohesion",
            "%LackOfCohesionModified": "PercentLackOfCohesionModified"}

JAVA_KEYWORDS = frozenset("""
abstract assert boolean break byte case catch char class const continue default do double else enum
extends final finally float for goto if implements import instanceof int interface long native new
package private protected public return short static strictfp super switch synchronized this throw
throws transient try void volatile while true false null var record yield
""".split())

_BRANCH = frozenset({"if", "for", "while", "case", "catch"})
_BLOCK_STMT = frozenset({"if", "for", "while", "do", "switch", "try", "synchronized"})
_TYPE_DECL = frozenset({"class", "interface", "enum", "record"})


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int

    @property
    def significant(self) -> bool:
        return self.kind not in ("whitespace", "newline", "line_comment", "block_comment")


_TOKEN_RE = re.compile(r"""
    (?P<newline>\r\n|\n|\r)
  | (?P<whitespace>[ \t\f\v]+)
  | (?P<line_comment>//[^\r\n]*)
  | (?P<block_comment>/\*)
  | (?P<textblock>\"\"\")
  | (?P<string>"(?:[^"\\\r\n]|\\.)*(?:"|(?=[\r\n])|$))
  | (?P<char>'(?:[^'\\\r\n]|\\.)*(?:'|(?=[\r\n])|$))
  | (?P<identifier>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<number>\d[\w.]*|\.\d[\w]*)
  | (?P<brace_open>\{)
  | (?P<brace_close>\})
  | (?P<semicolon>;)
  | (?P<punct>&&|\|\||->|::|.)
""", re.VERBOSE | re.DOTALL)


def tokenize(text: str) -> list[Token]:
    """Split source into tokens; whitespace is kept so the texts concatenate back to ``text``."""
    tokens: list[Token] = []
    pos, line, n = 0, 1, len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        assert m is not None
        kind = m.lastgroup
        end = m.end()
        if kind == "block_comment":
            close = text.find("*/", pos + 2)
            if close < 0:
                log.warning("unterminated block comment at line %d", line)
                end = n
            else:
                end = close + 2
        elif kind == "textblock":
            close = text.find('"""', pos + 3)
            end = n if close < 0 else close + 3
            kind = "string"
        elif kind == "identifier" and m.group() in JAVA_KEYWORDS:
            kind = "keyword"
        chunk = text[pos:end]
        tokens.append(Token(kind, chunk, line))
        line += chunk.count("\n") + chunk.count("\r") - chunk.count("\r\n")
        pos = end
    return tokens


def decode_source(data: bytes) -> str:
    return data.decode("utf-8", "replace")


@dataclass
class LineMap:
    total: int
    code: set[int]
    comment: set[int]

    def is_code(self, line: int) -> bool:
        return line in self.code


def line_map(tokens: list[Token], text: str | None = None) -> LineMap:
    code: set[int] = set()
    comment: set[int] = set()
    last_line = 0
    for tok in tokens:
        span = tok.text.count("\n") + tok.text.count("\r") - tok.text.count("\r\n")
        last = tok.line + span
        if tok.kind == "newline":
            last_line = max(last_line, tok.line)
            continue
        last_line = max(last_line, last)
        if tok.kind == "whitespace":
            continue
        target = comment if tok.kind in ("line_comment", "block_comment") else code
        target.update(range(tok.line, last + 1))
    if tokens:
        full = "".join(t.text for t in tokens) if text is None else text
        total = full.count("\n") + full.count("\r") - full.count("\r\n")
        if not full.endswith(("\n", "\r")):
            total += 1
    else:
        total = 0
    return LineMap(total, code, comment)


def code_lines(text: str) -> set[int]:
    """1-based numbers of lines that carry at least one code token."""
    return line_map(tokenize(text), text).code


# ------------------------------------------------------------------ structure


@dataclass
class _Method:
    name: str
    modifiers: frozenset[str]
    start_line: int
    start_index: int
    depth: int
    cyclomatic: int = 1
    strict_extra: int = 0
    cases: int = 0
    switches: int = 0
    max_nesting: int = 0
    returns: list[int] = field(default_factory=list)
    jumps: int = 0
    end_index: int = -1
    end_line: int = -1

    @property
    def cyclomatic_strict(self) -> int:
        return self.cyclomatic + self.strict_extra

    @property
    def cyclomatic_modified(self) -> int:
        return self.cyclomatic - self.cases + self.switches


def _paren_group_before(header: list[Token]) -> int | None:
    """Index of the '(' of the last top-level paren group in a declaration header."""
    depth = 0
    close = None
    i = len(header) - 1
    # skip a trailing throws clause
    while i >= 0:
        t = header[i]
        if t.text == ")":
            close = i
            break
        if not (t.kind == "identifier" or t.text in (",", ".", "throws", "<", ">")):
            return None
        i -= 1
    if close is None:
        return None
    for j in range(close, -1, -1):
        if header[j].text == ")":
            depth += 1
        elif header[j].text == "(":
            depth -= 1
            if depth == 0:
                return j
    return None


def _method_signature(header: list[Token]) -> tuple[str, frozenset[str]] | None:
    if not header or header[-1].text == "->":
        return None
    open_idx = _paren_group_before(header)
    if open_idx is None or open_idx == 0:
        return None
    name_tok = header[open_idx - 1]
    if name_tok.kind != "identifier":
        return None
    before = header[:open_idx - 1]
    if any(t.text in ("=", "new") for t in before):
        return None
    mods = frozenset(t.text for t in before if t.kind == "keyword")
    if mods & (_TYPE_DECL | {"return", "throw"}):
        return None
    return name_tok.text, mods


def _count_declarators(header: list[Token]) -> int:
    depth = 0
    n = 1
    for t in header:
        if t.text in ("(", "[", "<", "{"):
            depth += 1
        elif t.text in (")", "]", ">", "}"):
            depth -= 1
        elif t.text == "," and depth == 0:
            n += 1
    return n


@dataclass
class _Scope:
    kind: str  # class | method | block
    method: _Method | None = None


def analyze(tokens: list[Token]) -> tuple[list[_Method], dict[str, int]]:
    """Detect methods and field declarations with a brace-depth heuristic."""
    sig = [t for t in tokens if t.significant]
    stack: list[_Scope] = []
    header: list[Token] = []
    methods: list[_Method] = []
    counts = {"abstract_methods": 0, "instance_vars": 0, "class_vars": 0}
    abstract_mods: list[frozenset[str]] = []

    def in_class_body() -> bool:
        return bool(stack) and stack[-1].kind == "class"

    def current_method() -> _Method | None:
        for sc in reversed(stack):
            if sc.kind == "method":
                return sc.method
        return None

    for idx, tok in enumerate(sig):
        meth = current_method()
        if meth is not None:
            text = tok.text
            if tok.kind == "keyword":
                if text in _BRANCH:
                    meth.cyclomatic += 1
                    if text == "case":
                        meth.cases += 1
                elif text == "switch":
                    meth.switches += 1
                elif text in ("break", "continue"):
                    meth.jumps += 1
                elif text == "return":
                    meth.returns.append(idx)
            elif text in ("&&", "||"):
                meth.strict_extra += 1
            elif text == "?":
                nxt = sig[idx + 1].text if idx + 1 < len(sig) else ""
                if nxt not in (">", ",", "extends", "super"):
                    meth.cyclomatic += 1
        if tok.kind == "brace_open":
            if in_class_body() or not stack:
                header_words = {t.text for t in header if t.kind == "keyword"}
                if header_words & _TYPE_DECL and not any(t.text == "=" for t in header):
                    stack.append(_Scope("class"))
                elif in_class_body() and (sig_info := _method_signature(header)) is not None:
                    name, mods = sig_info
                    m = _Method(name, mods, header[0].line, idx, len(stack))
                    methods.append(m)
                    stack.append(_Scope("method", m))
                else:
                    stack.append(_Scope("block"))
            else:
                words = {t.text for t in header if t.kind == "keyword"}
                if words & _TYPE_DECL and "new" not in words and not any(t.text == "=" for t in header):
                    stack.append(_Scope("class"))
                else:
                    stack.append(_Scope("block"))
            meth = current_method()
            if meth is not None:
                depth = len(stack) - 1 - meth.depth
                meth.max_nesting = max(meth.max_nesting, depth)
            header = []
        elif tok.kind == "brace_close":
            if stack:
                sc = stack.pop()
                if sc.kind == "method" and sc.method is not None:
                    sc.method.end_index = idx
                    sc.method.end_line = tok.line
            header = []
        elif tok.kind == "semicolon":
            if in_class_body() and header:
                sig_info = _method_signature(header)
                if sig_info is not None:
                    counts["abstract_methods"] += 1
                    abstract_mods.append(sig_info[1])
                elif header[0].text not in ("import", "package") and header[-1].text != ")":
                    n = _count_declarators(header)
                    if any(t.text == "static" for t in header):
                        counts["class_vars"] += n
                    else:
                        counts["instance_vars"] += n
            header = []
        else:
            header.append(tok)
    counts["_abstract_mods"] = abstract_mods  # type: ignore[assignment]
    closed = [m for m in methods if m.end_index >= 0]
    for m in closed:
        for r in m.returns:
            semi = next((k for k in range(r, m.end_index) if sig[k].kind == "semicolon"), m.end_index)
            if all(sig[k].kind == "brace_close" for k in range(semi + 1, m.end_index)):
                continue
            m.jumps += 1
    return closed, counts


def compute_product_row(tokens: list[Token], text: str | None = None) -> dict[str, float]:
    """Native subset of the product metric columns for one file."""
    lines = line_map(tokens, text)
    methods, counts = analyze(tokens)
    abstract_mods: list[frozenset[str]] = counts.pop("_abstract_mods")  # type: ignore[assignment]
    row: dict[str, float] = {}
    code_n = len(lines.code)
    comment_n = len(lines.comment)
    blank_n = lines.total - len(lines.code | lines.comment)
    row["CountLine"] = lines.total
    row["CountLineCode"] = code_n
    row["CountLineComment"] = comment_n
    row["CountLineBlank"] = blank_n
    row["RatioCommentToCode"] = comment_n / max(1, code_n)
    semis = sum(1 for t in tokens if t.kind == "semicolon")
    row["CountSemicolon"] = semis
    row["CountStmt"] = semis + sum(1 for t in tokens if t.kind == "keyword" and t.text in _BLOCK_STMT)

    all_mods = [m.modifiers for m in methods] + abstract_mods
    row["CountDeclMethod"] = len(all_mods)
    row["CountDeclMethodPublic"] = sum("public" in m for m in all_mods)
    row["CountDeclMethodPrivate"] = sum("private" in m for m in all_mods)
    row["CountDeclMethodProtected"] = sum("protected" in m for m in all_mods)
    row["CountDeclMethodDefault"] = sum(not (m & {"public", "private", "protected"}) for m in all_mods)
    row["CountDeclClassMethod"] = sum("static" in m for m in all_mods)
    row["CountDeclInstanceMethod"] = sum("static" not in m for m in all_mods)
    row["CountDeclInstanceVariable"] = counts["instance_vars"]
    row["CountDeclClassVariable"] = counts["class_vars"]

    def agg(prefix: str, values: list[int]) -> None:
        row[f"Avg{prefix}"] = sum(values) / len(values) if values else 0.0
        row[f"Max{prefix}"] = max(values) if values else 0
        row[f"Sum{prefix}"] = sum(values)

    agg("Cyclomatic", [m.cyclomatic for m in methods])
    agg("CyclomaticModified", [m.cyclomatic_modified for m in methods])
    agg("CyclomaticStrict", [m.cyclomatic_strict for m in methods])
    row["MaxNesting"] = max((m.max_nesting for m in methods), default=0)
    row["MaxEssential"] = max((min(1 + m.jumps, m.cyclomatic) for m in methods), default=0)

    spans = [range(m.start_line, m.end_line + 1) for m in methods]
    if spans:
        per_code = [sum(1 for ln in s if ln in lines.code) for s in spans]
        per_comment = [sum(1 for ln in s if ln in lines.comment) for s in spans]
        per_blank = [sum(1 for ln in s if ln not in lines.code and ln not in lines.comment) for s in spans]
        k = len(spans)
        row["AvgLine"] = sum(len(s) for s in spans) / k
        row["AvgLineCode"] = sum(per_code) / k
        row["AvgLineComment"] = sum(per_comment) / k
        row["AvgLineBlank"] = sum(per_blank) / k
    else:
        row["AvgLine"] = row["AvgLineCode"] = row["AvgLineComment"] = row["AvgLineBlank"] = 0.0
    return {c: row[c] for c in NATIVE_COLUMNS}


def method_complexities(text: str) -> list[dict]:
    """Per-method cyclomatic family, for inspection and tests."""
    methods, _ = analyze(tokenize(text))
    return [{"name": m.name, "cyclomatic": m.cyclomatic, "strict": m.cyclomatic_strict,
             "modified": m.cyclomatic_modified, "nesting": m.max_nesting,
             "essential": min(1 + m.jumps, m.cyclomatic), "has_switch": m.switches > 0}
            for m in methods]


# ------------------------------------------------------------------ snapshots


def snapshot(repo: str | Path, commit: str, path: str) -> str:
    with gitcmd.CatFile(repo) as cat:
        data = cat.read(commit, path)
    if data is None:
        raise SnapshotError(f"{path} does not exist at {commit[:12]}")
    return decode_source(data)


@dataclass
class ProductRow:
    canonical_id: str
    commit_hash: str
    metrics: dict[str, float]


def compute_product_rows(history: ProjectHistory, repo: str | Path,
                         extensions: tuple[str, ...] = (".java",)) -> Iterator[ProductRow]:
    """One native row per (file, non-merge commit) change that leaves the file present."""
    with gitcmd.CatFile(repo) as cat:
        for c in history.non_merge():
            for ch in c.changes:
                if ch.kind == "delete" or ch.binary or not ch.path.endswith(extensions):
                    continue
                data = cat.read(c.hash, ch.path)
                if data is None:
                    log.warning("snapshot missing: %s at %s", ch.path, c.hash[:12])
                    continue
                text = decode_source(data)
                yield ProductRow(ch.canonical_id, c.hash, compute_product_row(tokenize(text), text))


# ------------------------------------------------------------------ CSV I/O


def _fmt(v: float | None) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 10)) if not v.is_integer() else str(int(v))
    return str(v)


def write_product_csv(rows: Iterable[ProductRow], out: str | Path) -> int:
    n = 0
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "commit"] + PRODUCT_COLUMNS)
        for r in rows:
            w.writerow([r.canonical_id, r.commit_hash] + [_fmt(r.metrics.get(c)) for c in PRODUCT_COLUMNS])
            n += 1
    return n


def read_product_csv(path: str | Path) -> dict[tuple[str, str], ProductRow]:
    return {(r.commit_hash, r.canonical_id): r for r in _read_rows(path)}


def _read_rows(path: str | Path) -> Iterator[ProductRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        cols = [_ALIASES.get(h.strip(), h.strip()) for h in header]
        lower = [c.lower() for c in cols]
        try:
            fi, ci = lower.index("file"), lower.index("commit")
        except ValueError:
            raise ProductImportError(f"{path}: header needs 'file' and 'commit' columns") from None
        known = set(PRODUCT_COLUMNS)
        for i, c in enumerate(cols):
            if i not in (fi, ci) and c not in known:
                log.warning("%s: ignoring unknown column %r", path, c)
        for rec in reader:
            metrics = {}
            for i, c in enumerate(cols):
                if c in known and i < len(rec) and rec[i].strip() != "":
                    metrics[c] = float(rec[i])
            yield ProductRow(rec[fi], rec[ci], metrics)


def import_product_csv(path: str | Path,
                       native: dict[tuple[str, str], ProductRow] | None = None
                       ) -> dict[tuple[str, str], ProductRow]:
    """Overlay imported metrics on native rows, keyed by (commit, file).

    Imported values win where present; native values survive for columns the
    import lacks.  A repeated (commit, file) key in the import is an error.
    """
    merged = {k: ProductRow(r.canonical_id, r.commit_hash, dict(r.metrics))
              for k, r in (native or {}).items()}
    seen: set[tuple[str, str]] = set()
    for row in _read_rows(path):
        key = (row.commit_hash, row.canonical_id)
        if key in seen:
            raise ProductImportError(f"duplicate key (commit={key[0]}, file={key[1]})")
        seen.add(key)
        if key in merged:
            merged[key].metrics.update(row.metrics)
        else:
            merged[key] = row
    return merged
