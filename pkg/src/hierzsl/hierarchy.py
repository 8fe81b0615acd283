"""Data-driven class hierarchy built by repeated k-means over semantic vectors.

Layer indices are zero-based throughout: layer 0 is the first superclass layer
directly above the leaf classes, layer ``n_r - 1`` the top.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hierzsl.errors import ShapeError
from hierzsl.linalg import as_matrix

KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class SemanticTable:
    """Class names with their semantic vectors, seen classes first."""

    names: tuple[str, ...]
    vectors: np.ndarray
    seen_count: int

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        vectors = as_matrix(self.vectors, "semantic vectors")
        object.__setattr__(self, "vectors", vectors)
        if len(set(self.names)) != len(self.names):
            raise ShapeError("class names must be unique")
        if vectors.shape[0] != len(self.names):
            raise ShapeError(f"{len(self.names)} names but {vectors.shape[0]} semantic vectors")
        if not 0 <= self.seen_count <= len(self.names):
            raise ShapeError(f"seen_count {self.seen_count} out of range")

    @property
    def n_classes(self) -> int:
        return len(self.names)

    @property
    def unseen_count(self) -> int:
        return len(self.names) - self.seen_count

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def seen(self) -> np.ndarray:
        return np.arange(self.seen_count)

    @property
    def unseen(self) -> np.ndarray:
        return np.arange(self.seen_count, self.n_classes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ShapeError(f"unknown class name {name!r}") from None


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...] = ()
    n_iter: int = 0


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a chosen centre
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(X, X[idx:idx + 1])[:, 0])
    return X[chosen].copy()


def _repair_empty(X, labels, C, d2_own, k):
    counts = np.bincount(labels, minlength=k)
    for e in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        cand = np.where(movable, d2_own, -1.0)
        p = int(np.argmax(cand))
        counts[labels[p]] -= 1
        labels[p] = e
        counts[e] = 1
        C[e] = X[p]
        d2_own[p] = 0.0
    return labels


def kmeans(points, k: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Deterministic for a fixed ``seed``; assignment ties go to the lowest
    cluster index and emptied clusters take over the point farthest from its
    current centroid.
    """
    X = as_matrix(points, "points")
    n = X.shape[0]
    if n == 0:
        raise ShapeError("kmeans needs at least one point")
    if not 1 <= k <= n:
        raise ShapeError(f"cluster count k={k} must satisfy 1 <= k <= {n}")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, C)
        new = np.argmin(d2, axis=1)
        new = _repair_empty(X, new, C, d2[np.arange(n), new].copy(), k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
        diff = X - C[labels]
        history.append(float(np.einsum("ij,ij->", diff, diff)))
    diff = X - C[labels]
    inertia = float(np.einsum("ij,ij->", diff, diff))
    return KMeansResult(labels, C, inertia, tuple(history), it)


def layer_sizes_for(n_classes: int, t: int) -> list[int]:
    """``floor(n/t)``, then repeated division by ``t`` while a layer keeps ``>= t`` nodes."""
    if t < 2:
        raise ShapeError(f"branching parameter t={t} must be >= 2")
    if n_classes < t:
        raise ShapeError(f"need at least t={t} classes, got {n_classes}")
    sizes = [n_classes // t]
    while sizes[-1] // t >= t:
        sizes.append(sizes[-1] // t)
    return sizes


@dataclass
class ClassHierarchy:
    """Tree over all classes with ``n_r`` superclass layers.

    ``parent_of[0]`` maps each leaf class to its layer-0 superclass;
    ``parent_of[l]`` maps each layer ``l - 1`` node to its layer ``l`` parent.
    ``prototypes[l]`` holds one semantic vector per layer-``l`` superclass.
    """

    t: int
    layer_sizes: tuple[int, ...]
    parent_of: list[np.ndarray]
    prototypes: list[np.ndarray]
    class_names: tuple[str, ...] | None = None
    ancestors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.layer_sizes = tuple(int(r) for r in self.layer_sizes)
        self.parent_of = [np.asarray(p, dtype=np.int64) for p in self.parent_of]
        self.prototypes = [as_matrix(p, "prototypes") for p in self.prototypes]
        if self.class_names is not None:
            self.class_names = tuple(self.class_names)
        n_r = len(self.layer_sizes)
        if n_r == 0 or len(self.parent_of) != n_r or len(self.prototypes) != n_r:
            raise ShapeError("hierarchy needs matching layer_sizes, parent_of and prototypes")
        lower = len(self.parent_of[0])
        for l, (r, parents, protos) in enumerate(zip(self.layer_sizes, self.parent_of, self.prototypes)):
            if len(parents) != lower:
                raise ShapeError(f"parent_of[{l}] has {len(parents)} entries, expected {lower}")
            if parents.size and (parents.min() < 0 or parents.max() >= r):
                raise ShapeError(f"parent_of[{l}] refers to a superclass outside 0..{r - 1}")
            if np.any(np.bincount(parents, minlength=r) == 0):
                raise ShapeError(f"layer {l} has a superclass without children")
            if protos.shape[0] != r:
                raise ShapeError(f"prototypes[{l}] has {protos.shape[0]} rows, expected {r}")
            lower = r
        if self.class_names is not None and len(self.class_names) != self.n_classes:
            raise ShapeError("class_names length does not match the leaf count")
        anc = [self.parent_of[0]]
        for l in range(1, n_r):
            anc.append(self.parent_of[l][anc[-1]])
        self.ancestors = np.stack(anc)

    @property
    def n_r(self) -> int:
        return len(self.layer_sizes)

    @property
    def n_classes(self) -> int:
        return len(self.parent_of[0])

    @property
    def dim(self) -> int:
        return self.prototypes[0].shape[1]

    def ancestors_of(self, class_index: int) -> list[int]:
        if not 0 <= class_index < self.n_classes:
            raise IndexError(f"class index {class_index} out of range 0..{self.n_classes - 1}")
        return [int(a) for a in self.ancestors[:, class_index]]

    def members(self, layer: int, node: int) -> np.ndarray:
        """Leaf classes under superclass ``node`` of ``layer``."""
        return np.flatnonzero(self.ancestors[layer] == node)

    def children(self, layer: int, node: int) -> np.ndarray:
        """Nodes of the layer below (leaf classes when ``layer == 0``)."""
        return np.flatnonzero(self.parent_of[layer] == node)

    def to_dict(self) -> dict:
        out = {
            "t": self.t,
            "n_r": self.n_r,
            "layer_sizes": list(self.layer_sizes),
            "parent_of": [p.tolist() for p in self.parent_of],
            "prototypes": [p.tolist() for p in self.prototypes],
        }
        if self.class_names is not None:
            out["class_names"] = list(self.class_names)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ClassHierarchy":
        try:
            h = cls(
                t=int(doc["t"]),
                layer_sizes=doc["layer_sizes"],
                parent_of=doc["parent_of"],
                prototypes=doc["prototypes"],
                class_names=doc.get("class_names"),
            )
        except KeyError as exc:
            raise ShapeError(f"hierarchy document is missing field {exc.args[0]!r}") from None
        if "n_r" in doc and int(doc["n_r"]) != h.n_r:
            raise ShapeError(f"n_r={doc['n_r']} disagrees with {h.n_r} layers")
        return h

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ClassHierarchy":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _leaf_means(vectors: np.ndarray, leaf_groups: np.ndarray, r: int) -> np.ndarray:
    return np.stack([vectors[leaf_groups == j].mean(axis=0) for j in range(r)])


def build_hierarchy(sem: SemanticTable, t: int = 5, seed: int = 0) -> ClassHierarchy:
    """Cluster classes into superclasses, then superclasses into coarser ones.

    The first layer has ``floor((p+q)/t)`` superclasses and every further layer
    ``floor(previous/t)``, stopping before a layer would fall below ``t`` nodes.
    Each layer clusters the prototypes of the layer below; a superclass
    prototype is the plain mean of its member leaves' semantic vectors.
    """
    sizes = layer_sizes_for(sem.n_classes, t)
    rng = np.random.default_rng(seed)
    parent_of = []
    prototypes = []
    nodes = sem.vectors
    leaf_anc = np.arange(sem.n_classes)
    for r in sizes:
        result = kmeans(nodes, r, seed=int(rng.integers(2**31)))
        parent_of.append(result.assignments)
        leaf_anc = result.assignments[leaf_anc]
        nodes = _leaf_means(sem.vectors, leaf_anc, r)
        prototypes.append(nodes)
    return ClassHierarchy(t, sizes, parent_of, prototypes, class_names=sem.names)


def expand_superclass_matrix(h: ClassHierarchy, layer: int, labels, seen_count: int | None = None) -> np.ndarray:
    """Per-sample superclass prototype matrix for ``layer`` (one row per label)."""
    labels = np.asarray(labels, dtype=np.int64)
    limit = h.n_classes if seen_count is None else seen_count
    bad = np.flatnonzero((labels < 0) | (labels >= limit))
    if bad.size:
        raise ShapeError(f"invalid class label {int(labels[bad[0]])} at sample {int(bad[0])}")
    if not 0 <= layer < h.n_r:
        raise IndexError(f"layer {layer} out of range 0..{h.n_r - 1}")
    return h.prototypes[layer][h.ancestors[layer][labels]]
