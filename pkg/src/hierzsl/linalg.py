"""Dense real Schur decomposition and a Bartels-Stewart Sylvester solver.

The general (nonsymmetric) path is a Householder Hessenberg reduction
followed by Francis double-shift QR (compiled loops in ``_qr_kernel``).  Symmetric inputs, whose real Schur form
is simply an eigendecomposition, are routed to LAPACK's symmetric eigensolver
(``numpy.linalg.eigh``) because that is the case the projection learner hits
with an ``N x N`` graph Laplacian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hierzsl import _qr_kernel
from hierzsl.errors import ConvergenceError, ShapeError, SylvesterError

_EPS = np.finfo(np.float64).eps
ABS_FLOOR = 1e-12
RESIDUAL_RTOL = 1e-8
ORACLE_MAX_SIZE = 400


@dataclass(frozen=True)
class SchurForm:
    """``A = Q @ T @ Q.T`` with ``Q`` orthogonal and ``T`` quasi-upper-triangular."""

    Q: np.ndarray
    T: np.ndarray
    # True when T is known to be diagonal (symmetric input)
    diagonal: bool = False

    @property
    def n(self) -> int:
        return self.T.shape[0]

    def blocks(self) -> list[tuple[int, int]]:
        return diagonal_blocks(self.T)

    def eigenvalues(self) -> np.ndarray:
        return block_eigenvalues(self.T)

    def scaled(self, c: float) -> "SchurForm":
        """Schur form of ``c * A`` for the same orthogonal factor."""
        return SchurForm(self.Q, c * self.T, self.diagonal)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validated 2-D float64 view of ``a`` (copied only when conversion requires it)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


def diagonal_blocks(T: np.ndarray) -> list[tuple[int, int]]:
    """(start, size) of each 1x1 or 2x2 diagonal block of a quasi-triangular matrix."""
    n = T.shape[0]
    out = []
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            out.append((i, 2))
            i += 2
        else:
            out.append((i, 1))
            i += 1
    return out


def block_eigenvalues(T: np.ndarray) -> np.ndarray:
    if not np.any(np.diag(T, -1)):
        return np.diag(T).astype(np.complex128)
    vals = []
    for i, size in diagonal_blocks(T):
        if size == 1:
            vals.append(complex(T[i, i]))
        else:
            a, b, c, d = T[i, i], T[i, i + 1], T[i + 1, i], T[i + 1, i + 1]
            half_tr = 0.5 * (a + d)
            disc = complex(0.25 * (a - d) ** 2 + b * c)
            root = np.sqrt(disc)
            vals.extend([half_tr + root, half_tr - root])
    return np.array(vals, dtype=np.complex128)


def hessenberg(A) -> tuple[np.ndarray, np.ndarray]:
    """Householder reduction ``A = Q @ H @ Q.T`` with ``H`` upper Hessenberg."""
    H = as_matrix(A, "A").copy()
    if H.shape[0] != H.shape[1]:
        raise ShapeError(f"hessenberg needs a square matrix, got {H.shape}")
    Q = np.eye(H.shape[0])
    _qr_kernel.hessenberg_inplace(H, Q)
    return H, Q


def schur_decompose(A, symmetric: bool | None = None, max_iter: int | None = None) -> SchurForm:
    """Real Schur decomposition of a square matrix.

    Parameters
    ----------
    A : (n, n) array_like
    symmetric : bool, optional
        Force (True) or forbid (False) the symmetric eigensolver route.  By
        default it is used when ``A`` equals its transpose exactly.
    max_iter : int, optional
        Total Francis iteration budget; defaults to ``30 * n``.

    Raises
    ------
    ShapeError
        Non-square, empty or non-finite input.
    ConvergenceError
        The QR iteration budget was exhausted.
    """
    A = as_matrix(A, "A")
    n, m = A.shape
    if n != m or n == 0:
        raise ShapeError(f"schur_decompose needs a non-empty square matrix, got {A.shape}")
    if symmetric is None:
        symmetric = bool(np.array_equal(A, A.T))
    if symmetric:
        w, Q = np.linalg.eigh(A)
        return SchurForm(Q, np.diag(w), diagonal=True)
    H, Q = hessenberg(A)
    budget = 30 * n if max_iter is None else max_iter
    stuck = _qr_kernel.francis_inplace(H, Q, budget)
    if stuck >= 0:
        raise ConvergenceError(
            f"QR iteration did not converge within {budget} iterations "
            f"(unreduced block ending at row {stuck})"
        )
    return SchurForm(Q, H)


def _check_gap(ev_a: np.ndarray, ev_b: np.ndarray, scale: float) -> None:
    gaps = np.abs(ev_a[:, None] + ev_b[None, :])
    idx = np.unravel_index(int(np.argmin(gaps)), gaps.shape)
    gap = float(gaps[idx])
    if gap <= max(ABS_FLOOR, ABS_FLOOR * scale):
        raise SylvesterError(
            "no unique solution: eigenvalue "
            f"{ev_a[idx[0]]:.6g} of A is the negative of eigenvalue {ev_b[idx[1]]:.6g} "
            f"of B (gap {gap:.3g})",
            gap=gap,
        )


def _local_solve(Sii: np.ndarray, Tjj: np.ndarray, r: np.ndarray) -> np.ndarray:
    # (I kron Sii + Tjj^T kron I) vec(Y) = vec(r) for a 1x2, 2x1 or 2x2 block pair.
    ni, nj = r.shape
    K = np.zeros((ni * nj, ni * nj))
    for b in range(nj):
        K[b * ni:(b + 1) * ni, b * ni:(b + 1) * ni] = Sii
        for a in range(nj):
            K[b * ni:(b + 1) * ni, a * ni:(a + 1) * ni] += Tjj[a, b] * np.eye(ni)
    y = np.linalg.solve(K, r.ravel(order="F"))
    return y.reshape((ni, nj), order="F")


def _is_diagonal(f: SchurForm) -> bool:
    T = f.T
    return f.diagonal or not (np.count_nonzero(np.triu(T, 1)) or np.count_nonzero(np.diag(T, -1)))


def _quasi_triangular_solve(S: np.ndarray, T: np.ndarray, F: np.ndarray, diagonal: bool = False) -> np.ndarray:
    # Solve S Y + Y T = F for quasi-upper-triangular S, T.
    m, n = F.shape
    if diagonal:
        return F / (np.diag(S)[:, None] + np.diag(T)[None, :])
    Y = np.zeros((m, n))
    s_blocks = diagonal_blocks(S)[::-1]
    for j, nj in diagonal_blocks(T):
        rhs = F[:, j:j + nj] - Y[:, :j] @ T[:j, j:j + nj]
        Tjj = T[j:j + nj, j:j + nj]
        for i, ni in s_blocks:
            r = rhs[i:i + ni] - S[i:i + ni, i + ni:] @ Y[i + ni:, j:j + nj]
            Sii = S[i:i + ni, i:i + ni]
            if ni == 1 and nj == 1:
                Y[i, j] = r[0, 0] / (Sii[0, 0] + Tjj[0, 0])
            else:
                Y[i:i + ni, j:j + nj] = _local_solve(Sii, Tjj, r)
    return Y


def sylvester_residual(A, B, C, X) -> float:
    """Relative residual ``||AX + XB - C||_F / max(1, ||C||_F)``."""
    R = A @ X + X @ B - C
    return float(np.linalg.norm(R) / max(1.0, np.linalg.norm(C)))


def solve_sylvester(
    A,
    B,
    C,
    schur_a: SchurForm | None = None,
    schur_b: SchurForm | None = None,
    check: bool = True,
) -> np.ndarray:
    """Solve ``A X + X B = C`` by the Bartels-Stewart method.

    Precomputed Schur forms of ``A`` or ``B`` may be supplied to skip the
    decomposition; they must describe the ``A``/``B`` passed in.

    Raises
    ------
    SylvesterError
        The spectra of ``A`` and ``-B`` overlap, or the a-posteriori residual
        exceeds ``1e-8 * max(1, ||C||_F)``.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    C = as_matrix(C, "C")
    m, n = C.shape
    if A.shape != (m, m) or B.shape != (n, n):
        raise ShapeError(f"incompatible shapes A{A.shape} B{B.shape} C{C.shape}")
    sa = schur_a if schur_a is not None else schur_decompose(A)
    sb = schur_b if schur_b is not None else schur_decompose(B)
    if sa.n != m or sb.n != n:
        raise ShapeError("supplied Schur form does not match operand size")
    scale = float(np.linalg.norm(A) + np.linalg.norm(B))
    _check_gap(sa.eigenvalues(), sb.eigenvalues(), scale)

    F = sa.Q.T @ C @ sb.Q
    Y = _quasi_triangular_solve(sa.T, sb.T, F, _is_diagonal(sa) and _is_diagonal(sb))
    X = sa.Q @ Y @ sb.Q.T
    if not np.all(np.isfinite(X)):
        raise SylvesterError("no unique solution: non-finite entries in the solution")
    if check:
        res = sylvester_residual(A, B, C, X)
        if res > RESIDUAL_RTOL:
            raise SylvesterError(f"no unique solution: relative residual {res:.3g} exceeds {RESIDUAL_RTOL}")
    return X


def _gauss_solve(K: np.ndarray, b: np.ndarray) -> np.ndarray:
    M = K.copy()
    x = b.copy()
    N = M.shape[0]
    tol = max(ABS_FLOOR, N * _EPS * float(np.abs(M).sum(axis=1).max()))
    for k in range(N):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if abs(M[p, k]) <= tol:
            raise SylvesterError(f"no unique solution: pivot {M[p, k]:.3g} at column {k}")
        if p != k:
            M[[k, p]] = M[[p, k]]
            x[[k, p]] = x[[p, k]]
        f = M[k + 1:, k] / M[k, k]
        M[k + 1:, k:] -= np.outer(f, M[k, k:])
        x[k + 1:] -= f * x[k]
    for k in range(N - 1, -1, -1):
        x[k] = (x[k] - M[k, k + 1:] @ x[k + 1:]) / M[k, k]
    return x


def sylvester_oracle(A, B, C) -> np.ndarray:
    """Reference solve of ``A X + X B = C`` through the Kronecker system.

    Solves ``(I kron A + B.T kron I) vec(X) = vec(C)`` by Gaussian elimination
    with partial pivoting.  Only for ``m * n <= 400``.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    C = as_matrix(C, "C")
    m, n = C.shape
    if A.shape != (m, m) or B.shape != (n, n):
        raise ShapeError(f"incompatible shapes A{A.shape} B{B.shape} C{C.shape}")
    if m * n > ORACLE_MAX_SIZE:
        raise ShapeError(f"oracle limited to m*n <= {ORACLE_MAX_SIZE}, got {m * n}")
    K = np.kron(np.eye(n), A) + np.kron(B.T, np.eye(m))
    x = _gauss_solve(K, C.ravel(order="F"))
    return x.reshape((m, n), order="F")


def l2_normalize_rows(X) -> np.ndarray:
    """Scale each row to unit Euclidean norm; zero rows are rejected."""
    X = as_matrix(X, "rows")
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ShapeError(f"zero-norm row {int(zero[0])} cannot be normalised")
    return X / norms[:, None]
