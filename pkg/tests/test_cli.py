import json

import numpy as np
import pytest

from hhiss.cli import main
from hhiss.data import FeatureDataset, load_feature_dataset, write_feature_dataset
from hhiss.features import simulate_session, write_session

FAST = [
    "--set", "train.hidden=8,8",
    "--set", "train.stage1_epochs=5",
    "--set", "train.finetune_epochs=2",
    "--set", "train.inner_epoch_cap=2",
    "--set", "train.learning_rate=0.01",
]


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def _fields(text):
    return dict(line.split("\t", 1) for line in text.strip().splitlines() if "\t" in line)


@pytest.fixture(scope="module")
def raw_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("raw")
    write_session(simulate_session("S01", "S01-a", duration_s=600.0, seed=0), d / "S01" / "a")
    return d


def _separable(path, n_subjects=6, per=20, seed=0, flip=False):
    rng = np.random.default_rng(seed)
    n = n_subjects * per
    y = np.tile([0, 1], n // 2)
    X = rng.standard_normal((n, 4))
    X[:, 0] += np.where(y == 1, 3.0, -3.0) * (-1 if flip else 1)
    subjects = np.repeat([f"P{i}" for i in range(n_subjects)], per)
    ds = FeatureDataset(X, y, subjects, subjects, np.zeros(n), ["a", "b", "c", "d"], "toy-registry", "toy")
    return write_feature_dataset(ds, path)


# --- extract -----------------------------------------------------------------


def test_extract_fixture(capsys, raw_dir, tmp_path):
    code, out = _run(capsys, "extract", raw_dir, "-o", tmp_path / "f.csv")
    assert code == 0
    f = _fields(out.out)
    assert f["rows"] == "36" and f["features"] == "340"
    ds = load_feature_dataset(tmp_path / "f.csv")
    assert ds.X.shape == (36, 340)


def test_extract_is_byte_identical_on_rerun(capsys, raw_dir, tmp_path):
    _run(capsys, "extract", raw_dir, "-o", tmp_path / "a.csv")
    _run(capsys, "extract", raw_dir, "-o", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_extract_empty_dir_is_data_error(capsys, tmp_path):
    (tmp_path / "empty").mkdir()
    code, out = _run(capsys, "extract", tmp_path / "empty", "-o", tmp_path / "f.csv")
    assert code == 2 and "data error" in out.err


# --- synth -------------------------------------------------------------------


def test_synth_writes_loadable_files(capsys, tmp_path):
    code, out = _run(capsys, "synth", "-o", tmp_path, "--set", "synth.n_subjects=4", "--set", "synth.n_ood_subjects=2")
    assert code == 0
    assert abs(float(_fields(out.out)["bayes_oracle_accuracy"]) - 0.8658) < 1e-3
    train, ood = load_feature_dataset(tmp_path / "train.csv"), load_feature_dataset(tmp_path / "ood.csv")
    assert len(train) == 160 and len(ood) == 80
    assert train.registry_hash == ood.registry_hash


# --- train and eval ----------------------------------------------------------


def test_train_erm_fits_separable_data(capsys, tmp_path):
    data = _separable(tmp_path / "sep.csv")
    code, out = _run(capsys, "train", data, "--method", "erm", "-o", tmp_path / "run", *FAST, "--set", "train.stage1_epochs=40")
    assert code == 0
    assert float(_fields(out.out)["train_ba"]) >= 0.99
    manifest = json.loads((tmp_path / "run" / "train_manifest.json").read_text())
    assert manifest["run_config"]["train"]["rounds"] == 50


def test_train_hhiss_writes_one_trace_line_per_round(capsys, tmp_path):
    data = _separable(tmp_path / "sep.csv")
    code, out = _run(capsys, "train", data, "-o", tmp_path / "run", *FAST, "--set", "train.rounds=4")
    assert code == 0
    lines = (tmp_path / "run" / "trace.jsonl").read_text().splitlines()
    assert [json.loads(s)["round"] for s in lines] == [1, 2, 3, 4]
    assert _fields(out.out)["rounds"] == "4"
    assert (tmp_path / "run" / "retention.png").exists()


def test_train_checkpoint_reproducible(capsys, tmp_path):
    data = _separable(tmp_path / "sep.csv")
    for run in ("a", "b"):
        _run(capsys, "train", data, "-o", tmp_path / run, *FAST, "--set", "train.rounds=2")
    assert (tmp_path / "a" / "model.ckpt").read_bytes() == (tmp_path / "b" / "model.ckpt").read_bytes()


def test_train_holdout_writes_split(capsys, tmp_path):
    data = _separable(tmp_path / "sep.csv")
    code, out = _run(
        capsys, "train", data, "--method", "erm", "-o", tmp_path / "run", *FAST,
        "--set", "split.protocol=holdout", "--set", "split.n_train=4",
    )
    assert code == 0 and "test_ba" in _fields(out.out)
    plan = json.loads((tmp_path / "run" / "split.json").read_text())
    assert len(plan["train"]) == 4 and not set(plan["train"]) & set(plan["test"])


@pytest.fixture
def trained(capsys, tmp_path):
    data = _separable(tmp_path / "sep.csv")
    _run(capsys, "train", data, "--method", "erm", "-o", tmp_path / "run", *FAST, "--set", "train.stage1_epochs=40")
    return tmp_path / "run" / "model.ckpt", data


def test_eval_report(capsys, tmp_path, trained):
    ckpt, data = trained
    flipped = _separable(tmp_path / "flip.csv", seed=1, flip=True)
    code, out = _run(
        capsys, "eval", ckpt, f"mem={data}", f"flip={flipped}", f"again={data}",
        "--ood", "flip,again", "--name", "ERM", "--saliency", "-o", tmp_path / "rep",
    )
    assert code == 0
    head, row = out.out.strip().splitlines()
    assert head.split("\t") == [
        "Approach", "mem Accuracy", "mem Macro F1", "flip Accuracy", "flip Macro F1",
        "again Accuracy", "again Macro F1", "OOD Mean",
    ]
    cells = row.split("\t")
    assert cells[0] == "ERM"
    mem, flip, again, mean = float(cells[1]), float(cells[3]), float(cells[5]), float(cells[7])
    assert mem >= 0.99 and flip <= 0.05
    assert mean == pytest.approx((flip + again) / 2, abs=1e-4)
    for name in ("report.tsv", "metrics.json", "scores.png", "saliency.csv", "saliency.png"):
        assert (tmp_path / "rep" / name).exists()
    assert np.loadtxt(tmp_path / "rep" / "saliency.csv", delimiter=",", skiprows=1).shape == (360, 4)


def test_eval_refuses_other_registry(capsys, tmp_path, trained, raw_dir):
    ckpt, _ = trained
    _run(capsys, "extract", raw_dir, "-o", tmp_path / "f.csv")
    code, out = _run(capsys, "eval", ckpt, f"x={tmp_path / 'f.csv'}")
    assert code == 2 and "registry hash" in out.err


def test_usage_errors_exit_one(capsys, tmp_path):
    assert _run(capsys, "train", tmp_path / "x.csv")[0] == 1  # missing -o
    assert _run(capsys, "frobnicate")[0] == 1
    assert _run(capsys, "synth", "-o", tmp_path, "--set", "train.rounds=zero")[0] == 1


def test_missing_feature_file_is_data_error(capsys, tmp_path):
    assert _run(capsys, "train", tmp_path / "absent.csv", "-o", tmp_path / "r")[0] == 2


# --- bench -------------------------------------------------------------------


def test_bench_small(capsys, tmp_path):
    code, out = _run(
        capsys, "bench", "--seeds", "0,1", "--methods", "erm,hhiss", "-o", tmp_path, *FAST,
        "--set", "train.rounds=2",
        "--set", "synth.n_subjects=6", "--set", "synth.n_ood_subjects=2", "--set", "synth.d_noise=20",
    )
    assert code == 0
    rows = [line.split("\t") for line in out.out.splitlines()[1:5]]
    assert [(r[0], r[1]) for r in rows] == [("0", "erm"), ("0", "hhiss"), ("1", "erm"), ("1", "hhiss")]
    assert "below_oracle_ceiling\t" in out.out
    for name in ("bench.tsv", "run_config.ini", "bench.png", "retention_hhiss_seed0.png"):
        assert (tmp_path / name).exists()
