"""k-nearest-neighbour cosine graph over samples and its normalised Laplacian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hierzsl.errors import IsolatedVertexError, ShapeError
from hierzsl.linalg import as_matrix

DEFAULT_NEIGHBOURS = 10


@dataclass(frozen=True)
class SimilarityGraph:
    weights: np.ndarray
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_weights(cls, weights) -> "SimilarityGraph":
        """Validate a hand-built weight matrix (symmetric, nonnegative, zero diagonal)."""
        W = as_matrix(weights, "weights")
        if W.shape[0] != W.shape[1]:
            raise ShapeError(f"weight matrix must be square, got {W.shape}")
        if not np.array_equal(W, W.T):
            raise ShapeError("weight matrix must be symmetric")
        if np.any(W < 0):
            raise ShapeError("weight matrix must be nonnegative")
        if np.any(np.diag(W) != 0):
            raise ShapeError("weight matrix must have a zero diagonal")
        degrees = W.sum(axis=1)
        _reject_isolated(degrees)
        return cls(W, degrees)


@dataclass(frozen=True)
class Laplacian:
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _reject_isolated(degrees: np.ndarray) -> None:
    isolated = np.flatnonzero(degrees <= 0)
    if isolated.size:
        raise IsolatedVertexError(
            f"isolated vertex: {isolated.size} vertices have zero degree (first: {int(isolated[0])})"
        )


def build_similarity(F, k: int = DEFAULT_NEIGHBOURS) -> SimilarityGraph:
    """Connect each row of ``F`` to its ``k`` most cosine-similar rows.

    Similarities are clamped to ``[0, 1]``, the graph is symmetrised with an
    elementwise maximum and the diagonal is zero.  Neighbour ties go to the
    lower row index.
    """
    F = as_matrix(F, "features")
    n = F.shape[0]
    if n < 2:
        raise ShapeError(f"need at least 2 samples to build a graph, got {n}")
    if not 1 <= k < n:
        raise ShapeError(f"neighbour count k={k} must satisfy 1 <= k < {n}")
    norms = np.linalg.norm(F, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ShapeError(f"zero-norm feature row {int(zero[0])}")
    U = F / norms[:, None]
    S = np.clip(U @ U.T, 0.0, 1.0)
    ranked = S.copy()
    np.fill_diagonal(ranked, -np.inf)
    order = np.argsort(-ranked, axis=1, kind="stable")[:, :k]
    W = np.zeros_like(S)
    rows = np.repeat(np.arange(n), k)
    W[rows, order.ravel()] = S[rows, order.ravel()]
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    degrees = W.sum(axis=1)
    _reject_isolated(degrees)
    return SimilarityGraph(W, degrees)


def normalized_laplacian(g: SimilarityGraph) -> Laplacian:
    """``L = I - D^{-1/2} W D^{-1/2}`` for the graph's weight matrix ``W``."""
    _reject_isolated(g.degrees)
    inv_sqrt = 1.0 / np.sqrt(g.degrees)
    L = -(inv_sqrt[:, None] * g.weights * inv_sqrt[None, :])
    L[np.diag_indices_from(L)] += 1.0
    # Exact symmetry keeps the symmetric eigensolver route available downstream.
    L = 0.5 * (L + L.T)
    return Laplacian(L)
