"""Grid search of (alpha, beta, epsilon) by class-wise cross-validation on seen classes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from hierzsl.errors import ConfigError
from hierzsl.evalbench import mean_per_class_accuracy
from hierzsl.graph import DEFAULT_NEIGHBOURS, build_similarity, normalized_laplacian
from hierzsl.hierarchy import SemanticTable
from hierzsl.inference import embed_prototypes, unit_rows
from hierzsl.linalg import l2_normalize_rows, schur_decompose
from hierzsl.projection import LayerParams, learn_class_projection

DEFAULT_GRID = {
    "alpha": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "beta": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "epsilon": [0.0, 1e-4, 1e-3, 1e-2, 1e-1],
}


@dataclass
class TuningResult:
    best: LayerParams
    best_score: float
    scores: list[tuple[dict, float]]


def _validate_grid(grid: dict) -> dict:
    missing = {"alpha", "beta", "epsilon"} - set(grid)
    if missing:
        raise ConfigError(f"grid is missing {sorted(missing)}")
    unknown = set(grid) - {"alpha", "beta", "epsilon"}
    if unknown:
        raise ConfigError(f"grid has unknown keys {sorted(unknown)}")
    if any(len(grid[k]) == 0 for k in grid):
        raise ConfigError("every grid axis needs at least one value")
    return {k: [float(v) for v in grid[k]] for k in ("alpha", "beta", "epsilon")}


def class_folds(classes, folds: int, seed: int) -> list[np.ndarray]:
    classes = np.unique(classes)
    if not 2 <= folds <= classes.size:
        raise ConfigError(f"folds={folds} must lie in 2..{classes.size} (number of seen classes)")
    perm = np.random.default_rng(seed).permutation(classes)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cross_validate(
    F,
    labels,
    sem: SemanticTable,
    grid: dict | None = None,
    folds: int = 5,
    neighbours: int = DEFAULT_NEIGHBOURS,
    seed: int = 0,
    base: LayerParams | None = None,
) -> TuningResult:
    """Pick the grid point with the best held-out class-level top-1 accuracy.

    Seen classes are split into ``folds`` disjoint groups; each group in turn
    plays the part of unseen classes.  Held-out samples are labelled by
    nearest projected prototype among the held-out classes only.  Ties keep
    the earliest grid point.
    """
    grid = _validate_grid(grid or DEFAULT_GRID)
    base = base or LayerParams()
    F = l2_normalize_rows(F)
    labels = np.asarray(labels, dtype=np.int64)
    combos = list(itertools.product(grid["alpha"], grid["beta"], grid["epsilon"]))
    params = [
        LayerParams(a, b, e, base.gamma, base.max_iters, base.rel_tol) for a, b, e in combos
    ]
    totals = np.zeros(len(params))
    for held in class_folds(labels, folds, seed):
        test = np.isin(labels, held)
        F_tr, y_tr = F[~test], labels[~test]
        L = normalized_laplacian(build_similarity(F_tr, min(neighbours, F_tr.shape[0] - 1)))
        lap_schur = schur_decompose(L.matrix)
        for i, p in enumerate(params):
            res = learn_class_projection(F_tr, sem.vectors[y_tr], L, p, lap_schur)
            protos = unit_rows(embed_prototypes(res.W, sem.vectors[held]))
            pred = held[np.argmin(1.0 - F[test] @ protos.T, axis=1)]
            totals[i] += mean_per_class_accuracy(pred, labels[test])
    scores = totals / folds
    best = int(np.argmax(scores))
    table = [(p.to_dict(), float(s)) for p, s in zip(params, scores)]
    return TuningResult(params[best], float(scores[best]), table)
