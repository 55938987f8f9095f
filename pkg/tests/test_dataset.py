import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from defectlab.dataset import (ResampleConfig, aggregate_packages, assemble, concat, dataset_from_arrays,
                               make_splits, package_of, preprocess, read_dataset, select_mode, smote,
                               to_release_level, write_dataset)
from defectlab.errors import DataError, ResampleError, SplitError
from defectlab.process_metrics import PROCESS_FEATURES, ProcessRow
from defectlab.product_metrics import ProductRow


def prow(cid, commit, release=1, defective=0, lt=10, la=1):
    vals = {k: 0 for k in PROCESS_FEATURES}
    vals.update(la=la, lt=lt)
    return ProcessRow(canonical_id=cid, commit_hash=commit, release_index=release, defective=defective, **vals)


def test_package_of():
    assert package_of("a/b/C.java") == "a/b"
    assert package_of("a/b/C.java#2") == "a/b"
    assert package_of("C.java") == "."


def test_package_median_and_any_label():
    ds = dataset_from_arrays([[2.0], [4.0], [7.0]], [0, 1, 0], ["m"], effort=[1, 2, 3],
                             files=["p/A.java", "p/B.java", "q/C.java"], commits=["c", "c", "c"])
    ds.level = "jit"
    pk = aggregate_packages(ds)
    assert list(pk.files) == ["p", "q"]
    assert pk.X[:, 0].tolist() == [3.0, 7.0] and pk.y.tolist() == [1, 0] and pk.effort.tolist() == [3, 3]
    assert aggregate_packages(pk) is pk


def test_assemble_join_and_modes():
    rows = [prow("A.java", "c1", lt=5, defective=1), prow("B.java", "c1", lt=7), prow("A.java", "c2", lt=6)]
    prod = {("c1", "A.java"): ProductRow("A.java", "c1", {"CountLineCode": 40.0}),
            ("c2", "A.java"): ProductRow("A.java", "c2", {"CountLineCode": 41.0})}
    p = assemble(rows, None, "P")
    assert p.feature_names == PROCESS_FEATURES and p.effort.tolist() == [5, 7, 6] and p.y.tolist() == [1, 0, 0]
    c = assemble(rows, prod, "P+C")
    assert len(c) == 2 and c.notes["dropped"] == 1 and c.effort.tolist() == [40, 41]
    assert np.isnan(c.X[0, c.feature_names.index("MaxNesting")])
    assert select_mode(c, "P").effort.tolist() == [5, 6]
    with pytest.raises(DataError, match="overlapping"):
        assemble(rows[1:2], prod, "C")
    with pytest.raises(DataError):
        assemble(rows, None, "C")
    with pytest.raises(DataError):
        assemble(rows, None, "X")


def test_release_level_keeps_last_row_and_any_label():
    rows = [prow("A.java", "c1", 1, 1, lt=1), prow("A.java", "c2", 1, 0, lt=2), prow("A.java", "c3", 2, 0, lt=3)]
    ds = assemble(rows, None, "P", level="release")
    assert ds.level == "release" and list(ds.commits) == ["c2", "c3"]
    assert ds.y.tolist() == [1, 0] and ds.effort.tolist() == [2, 3]
    assert to_release_level(ds) is ds


def test_preprocess_fits_on_train_only():
    tr = dataset_from_arrays([[0.0, 5, np.nan], [10, 5, np.nan], [np.nan, 5, np.nan]], [0, 1, 0])
    te = dataset_from_arrays([[20.0, 1, 3], [np.nan, 9, 3]], [0, 1])
    a, b = preprocess(tr, te)
    assert a.feature_names == ["x0"]
    assert a.notes["imputed"] == ["x0"] and a.notes["dropped_features"] == ["x1", "x2"]
    assert a.X[:, 0].tolist() == [0.0, 1.0, 0.5]
    assert b.X[:, 0].tolist() == [1.0, 0.5]


def test_smote_balances_and_appends():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 3))
    y = np.array([1] * 10 + [0] * 90)
    Xs, ys = smote(X, y, ResampleConfig(seed=3))
    assert np.bincount(ys).tolist() == [90, 90]
    assert np.array_equal(Xs[:100], X) and np.array_equal(ys[:100], y)
    Xs2, _ = smote(X, y, ResampleConfig(seed=3))
    assert np.array_equal(Xs, Xs2)


def test_smote_errors():
    with pytest.raises(ResampleError):
        smote(np.zeros((5, 2)), np.array([1, 0, 0, 0, 0]))
    with pytest.raises(ResampleError):
        smote(np.zeros((5, 2)), np.zeros(5, dtype=int))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(13, 40), st.integers(0, 10_000))
def test_smote_points_lie_on_minority_segments(m, n_maj, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m + n_maj, 2))
    y = np.array([1] * m + [0] * n_maj)
    Xs, ys = smote(X, y, ResampleConfig(k=5, seed=seed))
    pool = X[:m]
    for p in Xs[m + n_maj:]:
        # some pair of minority points brackets p on a straight segment
        ok = False
        for i in range(m):
            for j in range(m):
                d = pool[j] - pool[i]
                denom = d @ d
                u = 0.0 if denom == 0 else float((p - pool[i]) @ d / denom)
                if -1e-9 <= u <= 1 + 1e-9 and np.allclose(pool[i] + u * d, p, atol=1e-9):
                    ok = True
                    break
            if ok:
                break
        assert ok
    lo, hi = pool.min(axis=0), pool.max(axis=0)
    assert np.all(Xs[m + n_maj:] >= lo - 1e-12) and np.all(Xs[m + n_maj:] <= hi + 1e-12)


def test_cross_val_plan():
    y = np.array([1] * 20 + [0] * 80)
    ds = dataset_from_arrays(np.zeros((100, 1)), y)
    plan = make_splits(ds, "cross_val", seed=4)
    assert len(plan.pairs) == 25 and plan.labels[0] == "r1f1" and plan.labels[-1] == "r5f5"
    for r in range(5):
        seen = np.concatenate([plan.pairs[5 * r + f][1] for f in range(5)])
        assert sorted(seen.tolist()) == list(range(100))
    for tr, te in plan.pairs:
        assert len(te) == 20 and y[te].sum() == 4
        assert not set(tr) & set(te)
    again = make_splits(ds, "cross_val", seed=4)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(plan.pairs, again.pairs))
    with pytest.raises(SplitError):
        make_splits(dataset_from_arrays(np.zeros((10, 1)), [1] * 4 + [0] * 6), "cross_val")


def test_release_plan():
    rel = np.repeat(np.arange(1, 7), 5)
    ds = dataset_from_arrays(np.zeros((30, 1)), [0, 1] * 15, releases=rel)
    plan = make_splits(ds, "release_based")
    assert plan.labels == ["R-2", "R-1", "R"]
    for (tr, te), r in zip(plan.pairs, (4, 5, 6)):
        assert set(rel[tr]) == {1, 2, 3} and set(rel[te]) == {r}
    with pytest.raises(SplitError, match="insufficient"):
        make_splits(dataset_from_arrays(np.zeros((9, 1)), [0, 1, 0] * 3, releases=[1, 2, 3] * 3), "release_based")


def test_csv_roundtrip(tmp_path):
    ds = dataset_from_arrays([[1.5, np.nan], [0.1, 2.0]], [1, 0], ["a", "b"], effort=[3, 4],
                             files=["x/A.java", "x/B.java"], releases=[1, 2])
    write_dataset(ds, tmp_path / "d.csv")
    head = (tmp_path / "d.csv").read_text().splitlines()
    assert head[0].startswith("# defectlab-dataset")
    assert head[1] == "project,file,release,commit,effort,defective,a,b"
    back = read_dataset(tmp_path / "d.csv")
    assert back.feature_names == ds.feature_names
    np.testing.assert_array_equal(back.X, ds.X)
    assert back.y.tolist() == [1, 0] and list(back.files) == list(ds.files)
    assert concat([ds, back]).X.shape == (4, 2)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        read_dataset(tmp_path / "bad.csv")
