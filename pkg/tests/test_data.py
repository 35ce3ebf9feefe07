import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hhiss.data import (
    FeatureDataset,
    SplitPlan,
    concat_datasets,
    kfold_person_disjoint,
    load_feature_dataset,
    load_feature_datasets,
    manifest_path,
    person_disjoint_split,
    validation_split,
    write_feature_dataset,
)
from hhiss.errors import ConfigError, DataError


def _dataset(n_subjects=4, rows=5, d=3, seed=0, registry="reg-a"):
    rng = np.random.default_rng(seed)
    n = n_subjects * rows
    return FeatureDataset(
        rng.standard_normal((n, d)),
        rng.integers(0, 2, n),
        np.repeat([f"s{i:02d}" for i in range(n_subjects)], rows),
        np.repeat([f"s{i:02d}-a" for i in range(n_subjects)], rows),
        np.tile(15.0 * np.arange(rows), n_subjects),
        [f"f{j}" for j in range(d)],
        registry,
        "toy",
    )


def test_round_trip_is_identity(tmp_path):
    ds = _dataset()
    path = write_feature_dataset(ds, tmp_path / "toy.csv")
    back = load_feature_dataset(path)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)
    assert back.subjects.tolist() == ds.subjects.tolist()
    assert back.sessions.tolist() == ds.sessions.tolist()
    assert np.array_equal(back.window_start, ds.window_start)
    assert back.feature_names == ds.feature_names
    assert back.registry_hash == ds.registry_hash


def test_manifest_contents(tmp_path):
    ds = _dataset()
    path = write_feature_dataset(ds, tmp_path / "toy.csv", run_config={"seed": 1})
    m = json.loads(manifest_path(path).read_text())
    assert m["registry_hash"] == "reg-a"
    assert m["subjects"] == {f"s{i:02d}": 5 for i in range(4)}
    assert m["class_counts"]["calm"] + m["class_counts"]["stress"] == 20
    assert m["run_config"] == {"seed": 1}


def test_wrong_column_count_names_the_column(tmp_path):
    path = write_feature_dataset(_dataset(), tmp_path / "toy.csv")
    lines = path.read_text().splitlines()
    lines[3] = ",".join(lines[3].split(",")[:-1])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="'f2'"):
        load_feature_dataset(path)


def test_renamed_feature_column_fails_hash_check(tmp_path):
    path = write_feature_dataset(_dataset(), tmp_path / "toy.csv")
    path.write_text(path.read_text().replace("f1", "g1", 1))
    with pytest.raises(DataError, match="registry"):
        load_feature_dataset(path)


def test_non_finite_values_rejected(tmp_path):
    path = write_feature_dataset(_dataset(), tmp_path / "toy.csv")
    lines = path.read_text().splitlines()
    cells = lines[2].split(",")
    cells[-1] = "nan"
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError):
        load_feature_dataset(path)


def test_missing_manifest(tmp_path):
    path = write_feature_dataset(_dataset(), tmp_path / "toy.csv")
    manifest_path(path).unlink()
    with pytest.raises(DataError):
        load_feature_dataset(path)


def test_mixed_registries_refused(tmp_path):
    a = write_feature_dataset(_dataset(registry="reg-a"), tmp_path / "a.csv")
    b = write_feature_dataset(_dataset(registry="reg-b"), tmp_path / "b.csv")
    with pytest.raises(DataError, match="mix"):
        load_feature_datasets([a, b])
    assert len(concat_datasets([_dataset(), _dataset(seed=1)])) == 40


def test_invalid_labels_and_subjects():
    ds = _dataset()
    with pytest.raises(DataError):
        FeatureDataset(ds.X, np.full(len(ds), 2), ds.subjects, ds.sessions, ds.window_start, ds.feature_names, "r")
    bad = ds.subjects.copy()
    bad[0] = ""
    with pytest.raises(DataError):
        FeatureDataset(ds.X, ds.y, bad, ds.sessions, ds.window_start, ds.feature_names, "r")


def test_holdout_partition_sizes():
    ids = [f"p{i}" for i in range(46)]
    plan = person_disjoint_split(ids, 32, seed=0)
    assert (len(plan.train), len(plan.test)) == (32, 14)
    assert set(plan.train) | set(plan.test) == set(ids)
    assert not set(plan.train) & set(plan.test)
    assert person_disjoint_split(ids, 32, seed=0) == plan


@pytest.mark.parametrize("n", [0, 46])
def test_holdout_out_of_range(n):
    with pytest.raises(ConfigError):
        person_disjoint_split([f"p{i}" for i in range(46)], n, seed=0)


def test_kfold_fifteen_subjects():
    ids = [f"p{i}" for i in range(15)]
    folds = kfold_person_disjoint(ids, 5, seed=0)
    assert [len(f.test) for f in folds] == [3] * 5
    tested = [s for f in folds for s in f.test]
    assert sorted(tested) == sorted(ids)
    assert all(not set(f.train) & set(f.test) for f in folds)
    assert kfold_person_disjoint(ids, 5, seed=0) == folds
    with pytest.raises(ConfigError):
        kfold_person_disjoint(ids[:4], 5)


def test_split_frequency_is_unbiased():
    ids = [f"p{i:02d}" for i in range(20)]
    counts = dict.fromkeys(ids, 0)
    for seed in range(100):
        for s in person_disjoint_split(ids, 15, seed).test:
            counts[s] += 1
    expected = 100 * 5 / 20
    assert all(abs(c - expected) <= 0.1 * 100 for c in counts.values())


def test_plan_rejects_overlap_and_round_trips():
    with pytest.raises(DataError):
        SplitPlan(["a", "b"], ["b"])
    plan = SplitPlan(["a"], ["b"], ["c"], seed=3)
    assert SplitPlan.from_json(plan.to_json()) == plan


def test_session_keyed_split():
    ds = _dataset()
    plan = person_disjoint_split(ds, 2, seed=0, key="session")
    assert all(s.endswith("-a") for s in plan.train + plan.test)
    part = ds.select(plan.train, key="session")
    assert set(part.sessions) == set(plan.train)


@given(st.integers(3, 40), st.floats(0.01, 0.9), st.integers(0, 1000))
def test_validation_split_properties(n, frac, seed):
    ids = [f"p{i}" for i in range(n)]
    train, val = validation_split(ids, frac, seed)
    assert len(val) >= 1 and len(train) >= 2
    assert sorted(train + val) == sorted(ids)
