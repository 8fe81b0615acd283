"""Dataset directories and run configuration files.

A dataset directory holds four files:

``features.csv``
    headerless CSV, one sample per row
``labels.txt``
    one class name per line, aligned with ``features.csv``
``semantics.csv``
    headerless CSV, one class per row, ordered as ``split.json``'s seen
    list followed by its unseen list
``split.json``
    ``{"seen": [...], "unseen": [...]}`` with an optional
    ``"test_seen_samples"`` list of row indices of seen-class samples held
    out from training for generalised evaluation
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hierzsl.errors import ConfigError, DataError, HZSLError
from hierzsl.graph import DEFAULT_NEIGHBOURS
from hierzsl.hierarchy import SemanticTable
from hierzsl.inference import DEFAULT_FSL_LAMBDA, DEFAULT_TOP_K
from hierzsl.projection import LayerParams

FEATURES = "features.csv"
LABELS = "labels.txt"
SEMANTICS = "semantics.csv"
SPLIT = "split.json"
MODES = ("zsl", "gzsl", "fsl")


@dataclass(frozen=True)
class DatasetFiles:
    root: Path

    @property
    def features_path(self) -> Path:
        return self.root / FEATURES

    @property
    def labels_path(self) -> Path:
        return self.root / LABELS

    @property
    def semantics_path(self) -> Path:
        return self.root / SEMANTICS

    @property
    def split_path(self) -> Path:
        return self.root / SPLIT


@dataclass
class Dataset:
    sem: SemanticTable
    features: np.ndarray
    labels: np.ndarray
    test_seen: np.ndarray

    @property
    def train_idx(self) -> np.ndarray:
        seen = self.labels < self.sem.seen_count
        seen[self.test_seen] = False
        return np.flatnonzero(seen)

    @property
    def unseen_idx(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= self.sem.seen_count)


def _read_csv(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"{path}: file not found")
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    return arr


def write_csv(path: Path, X: np.ndarray) -> None:
    np.savetxt(path, X, fmt="%.17g", delimiter=",")


def load_dataset(root) -> Dataset:
    files = DatasetFiles(Path(root))
    if not files.split_path.exists():
        raise DataError(f"{files.split_path}: file not found")
    try:
        split = json.loads(files.split_path.read_text())
        seen, unseen = list(split["seen"]), list(split["unseen"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{files.split_path}: malformed split ({exc})") from None
    if set(seen) & set(unseen):
        raise DataError(f"{files.split_path}: seen and unseen classes overlap")
    vectors = _read_csv(files.semantics_path)
    if vectors.shape[0] != len(seen) + len(unseen):
        raise DataError(
            f"{files.semantics_path}: {vectors.shape[0]} rows but split names {len(seen) + len(unseen)} classes"
        )
    try:
        sem = SemanticTable(seen + unseen, vectors, seen_count=len(seen))
    except HZSLError as exc:
        raise DataError(f"{files.split_path}: {exc}") from None
    features = _read_csv(files.features_path)
    if not files.labels_path.exists():
        raise DataError(f"{files.labels_path}: file not found")
    names = files.labels_path.read_text().splitlines()
    if len(names) != features.shape[0]:
        raise DataError(f"{files.labels_path}: {len(names)} labels but {features.shape[0]} feature rows")
    lookup = {n: i for i, n in enumerate(sem.names)}
    try:
        labels = np.array([lookup[n] for n in names], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"{files.labels_path}: class {exc.args[0]!r} not in {SPLIT}") from None
    test_seen = np.asarray(split.get("test_seen_samples", []), dtype=np.int64)
    if test_seen.size and (
        test_seen.min() < 0 or test_seen.max() >= labels.size or np.any(labels[test_seen] >= sem.seen_count)
    ):
        raise DataError(f"{files.split_path}: test_seen_samples must index seen-class samples")
    return Dataset(sem, features, labels, np.unique(test_seen))


def write_dataset(root, sem: SemanticTable, features: np.ndarray, labels: np.ndarray, test_seen=()) -> DatasetFiles:
    files = DatasetFiles(Path(root))
    files.root.mkdir(parents=True, exist_ok=True)
    write_csv(files.features_path, features)
    files.labels_path.write_text("".join(sem.names[i] + "\n" for i in labels))
    write_csv(files.semantics_path, sem.vectors)
    split = {
        "seen": list(sem.names[: sem.seen_count]),
        "unseen": list(sem.names[sem.seen_count:]),
        "test_seen_samples": [int(i) for i in test_seen],
    }
    files.split_path.write_text(json.dumps(split, indent=1) + "\n")
    return files


@dataclass
class RunConfig:
    t: int = 5
    k: int = DEFAULT_NEIGHBOURS
    layer: LayerParams = field(default_factory=LayerParams)
    class_params: LayerParams | None = None
    top_k: int = DEFAULT_TOP_K
    fsl_lambda: float = DEFAULT_FSL_LAMBDA
    seed: int = 0
    mode: str = "zsl"
    max_train_samples: int | None = None

    def __post_init__(self):
        if self.t < 2:
            raise ConfigError(f"t={self.t} must be >= 2")
        if self.k < 1:
            raise ConfigError(f"k={self.k} must be >= 1")
        if self.top_k < 1:
            raise ConfigError(f"top_k={self.top_k} must be >= 1")
        if not 0.0 <= self.fsl_lambda <= 1.0:
            raise ConfigError(f"fsl_lambda={self.fsl_lambda} must lie in [0, 1]")
        if self.mode not in MODES:
            raise ConfigError(f"mode={self.mode!r} must be one of {MODES}")
        if self.max_train_samples is not None and self.max_train_samples < 2:
            raise ConfigError(f"max_train_samples={self.max_train_samples} must be >= 2")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        known = {"t", "k", "layer", "class", "top_k", "fsl_lambda", "seed", "mode", "max_train_samples"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config field(s) {sorted(unknown)}")
        try:
            layer = LayerParams.from_dict(doc.pop("layer", {}))
            cls_doc = doc.pop("class", None)
            class_params = LayerParams.from_dict(cls_doc) if cls_doc is not None else None
            return cls(layer=layer, class_params=class_params, **doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = {
            "t": self.t,
            "k": self.k,
            "layer": self.layer.to_dict(),
            "top_k": self.top_k,
            "fsl_lambda": self.fsl_lambda,
            "seed": self.seed,
            "mode": self.mode,
            "max_train_samples": self.max_train_samples,
        }
        if self.class_params is not None:
            out["class"] = self.class_params.to_dict()
        return out


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DataError(f"{path}: config must be a JSON object")
    try:
        return RunConfig.from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
