"""Top-down hierarchical label inference for zero-shot, generalised and few-shot use."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from hierzsl.errors import ShapeError
from hierzsl.hierarchy import ClassHierarchy, SemanticTable
from hierzsl.linalg import as_matrix, l2_normalize_rows
from hierzsl.projection import ProjectionModel

DEFAULT_TOP_K = 3
DEFAULT_FSL_LAMBDA = 0.5


@dataclass(frozen=True)
class CandidateSet:
    """Superclasses kept per layer (index 0 = lowest) and the surviving leaves."""

    layer_top: tuple[np.ndarray, ...]
    leaf_candidates: np.ndarray
    fallback: bool = False


@dataclass(frozen=True)
class Prediction:
    label: int
    distance: float
    candidates: CandidateSet
    # candidates by distance, then the rest of the allowed classes by distance
    ranking: np.ndarray


def embed_prototypes(W, P) -> np.ndarray:
    """Map semantic prototypes into feature space: row ``i`` is ``P[i] @ W.T``."""
    W = as_matrix(W, "W")
    P = as_matrix(P, "prototypes")
    if P.shape[1] != W.shape[1]:
        raise ShapeError(f"prototypes have {P.shape[1]} columns but W maps {W.shape[1]}-dim semantics")
    return P @ W.T


def unit_rows(X: np.ndarray) -> np.ndarray:
    # Prototypes mapped to zero get a zero row, i.e. cosine distance 1 to everything.
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def _unit(f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64).ravel()
    nrm = np.linalg.norm(f)
    if nrm == 0 or not np.isfinite(nrm):
        raise ShapeError("feature vector has zero or non-finite norm")
    return f / nrm


def _rank(f_unit: np.ndarray, protos_unit: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dist = 1.0 - protos_unit @ f_unit
    order = np.argsort(dist, kind="stable")
    return order, dist[order]


def topk_superclasses(f, proto_feat, k: int = DEFAULT_TOP_K) -> np.ndarray:
    """Indices of the ``k`` rows of ``proto_feat`` closest to ``f`` in cosine distance."""
    P = as_matrix(proto_feat, "prototypes")
    if P.shape[0] == 0:
        raise ShapeError("need at least one candidate prototype")
    order, _ = _rank(_unit(f), unit_rows(P))
    return order[:k]


class HierarchicalClassifier:
    """Feature-space prototypes for every layer plus the leaf classes.

    Immutable after construction, so ``predict`` may be called from several
    threads at once.
    """

    def __init__(self, model: ProjectionModel, h: ClassHierarchy, sem: SemanticTable, top_k: int = DEFAULT_TOP_K):
        if model.n_r != h.n_r:
            raise ShapeError(f"model has {model.n_r} layer projections, hierarchy has {h.n_r} layers")
        if model.d_z != h.dim or sem.dim != h.dim or sem.n_classes != h.n_classes:
            raise ShapeError("model, hierarchy and semantic table dimensions disagree")
        if top_k < 1:
            raise ShapeError(f"top_k={top_k} must be >= 1")
        self.model = model
        self.h = h
        self.sem = sem
        self.top_k = top_k
        self.layer_protos = [
            unit_rows(embed_prototypes(W, P)) for W, P in zip(model.layer_W, h.prototypes)
        ]
        self.class_protos = unit_rows(embed_prototypes(model.class_W, sem.vectors))

    def derive_candidates(self, f_unit: np.ndarray, restrict_to: np.ndarray) -> CandidateSet:
        h = self.h
        tops: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * h.n_r
        cand = np.arange(h.layer_sizes[-1])
        for l in reversed(range(h.n_r)):
            order, _ = _rank(f_unit, self.layer_protos[l][cand])
            tops[l] = np.sort(cand[order[: self.top_k]])
            if l > 0:
                cand = np.flatnonzero(np.isin(h.parent_of[l], tops[l]))
        leaves = np.flatnonzero(np.isin(h.ancestors[0], tops[0]))
        kept = np.intersect1d(leaves, restrict_to)
        if kept.size == 0:
            return CandidateSet(tuple(tops), np.array(restrict_to, dtype=np.int64), fallback=True)
        return CandidateSet(tuple(tops), kept)

    def _predict_one(self, f_unit, restrict_to, class_protos, hierarchical) -> Prediction:
        if hierarchical:
            cs = self.derive_candidates(f_unit, restrict_to)
        else:
            cs = CandidateSet((), restrict_to)
        order, dist = _rank(f_unit, class_protos[cs.leaf_candidates])
        ranked = cs.leaf_candidates[order]
        rest = np.setdiff1d(restrict_to, ranked)
        if rest.size:
            r_order, _ = _rank(f_unit, class_protos[rest])
            ranking = np.concatenate([ranked, rest[r_order]])
        else:
            ranking = ranked
        return Prediction(int(ranked[0]), float(dist[0]), cs, ranking)

    def predict(
        self,
        F,
        restrict_to,
        class_protos: np.ndarray | None = None,
        hierarchical: bool = True,
    ) -> list[Prediction]:
        """Nearest allowed class for every row of ``F``.

        ``class_protos`` optionally replaces the unit feature-space class
        prototypes (one row per class); ``hierarchical=False`` skips the
        superclass pruning and searches all of ``restrict_to``.
        """
        F = l2_normalize_rows(F)
        if F.shape[1] != self.model.d_f:
            raise ShapeError(f"features have dimension {F.shape[1]}, model expects {self.model.d_f}")
        restrict_to = np.unique(np.asarray(restrict_to, dtype=np.int64))
        if restrict_to.size == 0:
            raise ShapeError("restrict_to must name at least one class")
        if restrict_to[0] < 0 or restrict_to[-1] >= self.h.n_classes:
            raise ShapeError("restrict_to names a class outside the hierarchy")
        protos = self.class_protos if class_protos is None else class_protos
        return [self._predict_one(f, restrict_to, protos, hierarchical) for f in F]


def derive_candidates(
    h: ClassHierarchy,
    model: ProjectionModel,
    f,
    restrict_to,
    sem: SemanticTable,
    top_k: int = DEFAULT_TOP_K,
) -> CandidateSet:
    clf = HierarchicalClassifier(model, h, sem, top_k)
    restrict_to = np.unique(np.asarray(restrict_to, dtype=np.int64))
    if restrict_to.size == 0:
        raise ShapeError("restrict_to must name at least one class")
    return clf.derive_candidates(_unit(f), restrict_to)


def predict_zsl(model, h, F_u, sem: SemanticTable, top_k: int = DEFAULT_TOP_K, hierarchical: bool = True) -> list[Prediction]:
    """Label unseen-class test samples, searching unseen classes only."""
    if sem.unseen_count == 0:
        raise ShapeError("zero-shot prediction needs at least one unseen class")
    return HierarchicalClassifier(model, h, sem, top_k).predict(F_u, sem.unseen, hierarchical=hierarchical)


def predict_gzsl(model, h, F_test, sem: SemanticTable, top_k: int = DEFAULT_TOP_K, hierarchical: bool = True) -> list[Prediction]:
    """Label test samples drawn from seen and unseen classes alike."""
    return HierarchicalClassifier(model, h, sem, top_k).predict(
        F_test, np.arange(sem.n_classes), hierarchical=hierarchical
    )


def fsl_class_prototypes(
    clf: HierarchicalClassifier,
    support: Mapping[int, np.ndarray],
    lam: float = DEFAULT_FSL_LAMBDA,
) -> np.ndarray:
    """Unit class prototypes with support-set means mixed in for the novel classes."""
    if not 0.0 <= lam <= 1.0:
        raise ShapeError(f"mixing weight {lam} must lie in [0, 1]")
    protos = clf.class_protos.copy()
    for c, feats in support.items():
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ShapeError(f"class {c} has an empty support set")
        mean = l2_normalize_rows(feats).mean(axis=0)
        mixed = lam * mean + (1.0 - lam) * clf.class_protos[c]
        nrm = np.linalg.norm(mixed)
        protos[c] = mixed / nrm if nrm > 0 else mixed
    return protos


def predict_fsl(
    model,
    h,
    support: Mapping[int, np.ndarray],
    F_test,
    sem: SemanticTable,
    lam: float = DEFAULT_FSL_LAMBDA,
    top_k: int = DEFAULT_TOP_K,
    clf: HierarchicalClassifier | None = None,
) -> list[Prediction]:
    """Few-shot prediction over the classes present in ``support``.

    Each novel-class prototype mixes the mean of its l2-normalised support
    features (weight ``lam``) with its projected semantic prototype.
    """
    if not support:
        raise ShapeError("support set is empty")
    clf = clf or HierarchicalClassifier(model, h, sem, top_k)
    protos = fsl_class_prototypes(clf, support, lam)
    return clf.predict(F_test, sorted(support), class_protos=protos)


def write_predictions_csv(path, predictions: Sequence[Prediction], class_names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "predicted_class", "distance", "fallback_flag"])
        for i, p in enumerate(predictions):
            writer.writerow([i, class_names[p.label], repr(p.distance), int(p.candidates.fallback)])
