"""Feature datasets, their on-disk format and person-disjoint split protocols.

A feature file is delimited text: a header ``subject_id, session_id,
window_start_s, label, <feature names...>`` followed by one row per window.
A JSON manifest sits next to it (``<stem>.manifest.json``) carrying the
registry hash, roster and class counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

META_COLUMNS = ("subject_id", "session_id", "window_start_s", "label")
FORMAT_TAG = "hhiss-features"
FORMAT_VERSION = 1


def names_digest(names) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()


@dataclass
class FeatureDataset:
    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    sessions: np.ndarray
    window_start: np.ndarray
    feature_names: list[str]
    registry_hash: str
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64).ravel()
        self.subjects = np.asarray(self.subjects).astype(str)
        self.sessions = np.asarray(self.sessions).astype(str)
        self.window_start = np.asarray(self.window_start, dtype=np.float64)
        n = len(self.y)
        if self.X.ndim != 2 or self.X.shape[0] != n:
            raise DataError(f"feature matrix shape {self.X.shape} does not match {n} labels")
        if self.X.shape[1] != len(self.feature_names):
            raise DataError(f"{self.X.shape[1]} feature columns but {len(self.feature_names)} names")
        if not (len(self.subjects) == len(self.sessions) == len(self.window_start) == n):
            raise DataError("per-row metadata lengths disagree")
        if n and np.any(self.subjects == ""):
            raise DataError("every row needs a subject id")
        if n and not np.all(np.isin(self.y, (0, 1))):
            raise DataError("labels must be 0 (calm) or 1 (stress)")
        if not np.all(np.isfinite(self.X)):
            raise DataError("feature matrix contains non-finite values")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def subject_ids(self) -> list[str]:
        return sorted(np.unique(self.subjects).tolist())

    def group_ids(self, key: str = "subject") -> np.ndarray:
        if key == "subject":
            return self.subjects
        if key == "session":
            return self.sessions
        raise ConfigError(f"unknown split key {key!r}")

    def class_counts(self) -> dict[str, int]:
        return {"calm": int(np.sum(self.y == 0)), "stress": int(np.sum(self.y == 1))}

    def take(self, idx, name: str | None = None) -> "FeatureDataset":
        idx = np.asarray(idx)
        return FeatureDataset(
            self.X[idx],
            self.y[idx],
            self.subjects[idx],
            self.sessions[idx],
            self.window_start[idx],
            list(self.feature_names),
            self.registry_hash,
            self.name if name is None else name,
            dict(self.extra),
        )

    def select(self, groups, key: str = "subject", name: str | None = None) -> "FeatureDataset":
        return self.take(np.flatnonzero(np.isin(self.group_ids(key), list(groups))), name)

    def manifest(self, run_config: dict | None = None) -> dict:
        roster = {s: int(np.sum(self.subjects == s)) for s in self.subject_ids}
        out = {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "name": self.name,
            "registry_hash": self.registry_hash,
            "n_features": self.n_features,
            "feature_names_sha256": names_digest(self.feature_names),
            "subjects": roster,
            "class_counts": self.class_counts(),
        }
        out.update(self.extra)
        if run_config is not None:
            out["run_config"] = run_config
        return out


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def write_feature_dataset(ds: FeatureDataset, path, run_config: dict | None = None, delimiter: str = ",") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow([*META_COLUMNS, *ds.feature_names])
        for i in range(len(ds)):
            w.writerow(
                [ds.subjects[i], ds.sessions[i], repr(float(ds.window_start[i])), int(ds.y[i])]
                + [repr(float(v)) for v in ds.X[i]]
            )
    with open(manifest_path(path), "w") as fh:
        json.dump(ds.manifest(run_config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_feature_dataset(path, delimiter: str = ",") -> FeatureDataset:
    """Load and validate a feature file against its manifest."""
    path = Path(path)
    mpath = manifest_path(path)
    if not path.exists():
        raise DataError(f"{path}: no such feature file")
    if not mpath.exists():
        raise DataError(f"{path}: manifest {mpath.name} is missing")
    with open(mpath) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT_TAG:
        raise DataError(f"{mpath}: not a feature manifest")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if tuple(header[:4]) != META_COLUMNS:
        raise DataError(f"{path}: header must start with {', '.join(META_COLUMNS)}")
    names = header[4:]
    if names_digest(names) != manifest.get("feature_names_sha256") or len(names) != manifest.get("n_features"):
        raise DataError(f"{path}: feature columns do not match registry hash {manifest.get('registry_hash')}")
    ncol = len(header)
    subj, sess, start, lab, feats = [], [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != ncol:
            missing = header[len(row)] if len(row) < ncol else "<extra>"
            raise DataError(f"{path}:{lineno}: expected {ncol} columns, got {len(row)} (column {missing!r})")
        subj.append(row[0])
        sess.append(row[1])
        try:
            start.append(float(row[2]))
            lab.append(int(row[3]))
            feats.append([float(v) for v in row[4:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    X = np.array(feats, dtype=np.float64).reshape(len(feats), len(names))
    extra = {k: v for k, v in manifest.items() if k not in _MANIFEST_DERIVED}
    return FeatureDataset(X, lab, subj, sess, start, names, manifest["registry_hash"], manifest.get("name", ""), extra)


_MANIFEST_DERIVED = {
    "format",
    "version",
    "name",
    "registry_hash",
    "n_features",
    "feature_names_sha256",
    "subjects",
    "class_counts",
    "run_config",
}


def concat_datasets(datasets: list[FeatureDataset], name: str = "") -> FeatureDataset:
    if not datasets:
        raise DataError("nothing to concatenate")
    hashes = {d.registry_hash for d in datasets}
    if len(hashes) > 1:
        raise DataError(f"refusing to mix feature registries: {sorted(hashes)}")
    first = datasets[0]
    if any(d.feature_names != first.feature_names for d in datasets):
        raise DataError("feature columns differ between datasets")
    return FeatureDataset(
        np.concatenate([d.X for d in datasets]),
        np.concatenate([d.y for d in datasets]),
        np.concatenate([d.subjects for d in datasets]),
        np.concatenate([d.sessions for d in datasets]),
        np.concatenate([d.window_start for d in datasets]),
        list(first.feature_names),
        first.registry_hash,
        name or first.name,
    )


def load_feature_datasets(paths) -> FeatureDataset:
    return concat_datasets([load_feature_dataset(p) for p in paths])


@dataclass
class SplitPlan:
    train: list[str]
    test: list[str]
    validation: list[str] = field(default_factory=list)
    seed: int = 0
    protocol: str = "holdout"
    fold: int = 0
    key: str = "subject"

    def __post_init__(self):
        sets = [set(self.train), set(self.test), set(self.validation)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise DataError("split plan is not person-disjoint")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        return cls(**json.loads(text))


def _groups(dataset_or_ids, key: str) -> list[str]:
    if isinstance(dataset_or_ids, FeatureDataset):
        return sorted(np.unique(dataset_or_ids.group_ids(key)).tolist())
    return sorted(str(s) for s in set(dataset_or_ids))


def person_disjoint_split(dataset, n_train: int, seed: int, key: str = "subject") -> SplitPlan:
    """Uniformly random seeded partition into ``n_train`` training and the remaining test groups."""
    ids = _groups(dataset, key)
    if not 1 <= n_train < len(ids):
        raise ConfigError(f"n_train must be in [1, {len(ids)}), got {n_train}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    train = sorted(ids[i] for i in perm[:n_train])
    test = sorted(ids[i] for i in perm[n_train:])
    return SplitPlan(train, test, seed=seed, protocol="holdout", key=key)


def kfold_person_disjoint(dataset, k: int = 5, seed: int = 0, key: str = "subject") -> list[SplitPlan]:
    ids = _groups(dataset, key)
    if k < 2 or k > len(ids):
        raise ConfigError(f"k must be in [2, {len(ids)}], got {k}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    groups = [sorted(ids[i] for i in g) for g in np.array_split(perm, k)]
    plans = []
    for i, test in enumerate(groups):
        train = sorted(s for j, g in enumerate(groups) if j != i for s in g)
        plans.append(SplitPlan(train, test, seed=seed, protocol=f"kfold{k}", fold=i, key=key))
    return plans


def validation_split(ids, fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Carve a person-disjoint validation subset from training groups.

    At least one group is held out when ``fraction > 0``, and at least two
    groups stay on the training side.
    """
    ids = sorted(str(s) for s in set(ids))
    if fraction <= 0.0:
        return ids, []
    n_val = int(round(fraction * len(ids)))
    n_val = min(max(n_val, 1), len(ids) - 2)
    if n_val < 1:
        return ids, []
    perm = np.random.default_rng(seed).permutation(len(ids))
    val = sorted(ids[i] for i in perm[:n_val])
    train = sorted(ids[i] for i in perm[n_val:])
    return train, val
