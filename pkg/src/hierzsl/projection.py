"""Graph-regularised self-reconstruction projections, learned by alternation.

For a feature matrix ``F`` (N x d_f) and target semantics ``E0`` (N x d_z)
the learner minimises

    ||F W - E||^2 + mu ||F - E W^T||^2 + eps_raw tr(E^T L E)
        + nu ||E - E0||^2 + eta ||W||^2

over the projection ``W`` and the refined semantics ``E``.  Users set the
normalised weights ``alpha = mu/(1+mu)``, ``beta = 1/(1+nu)``,
``gamma = eta/(1+mu)`` and ``epsilon = eps_raw / ((1+mu)(1+nu))``; each
half-step is an exact Sylvester solve.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from hierzsl.errors import ConfigError, NumericalError, ShapeError
from hierzsl.graph import DEFAULT_NEIGHBOURS, Laplacian, build_similarity, normalized_laplacian
from hierzsl.hierarchy import ClassHierarchy, SemanticTable, expand_superclass_matrix
from hierzsl.linalg import SchurForm, as_matrix, l2_normalize_rows, schur_decompose, solve_sylvester

MODEL_MAGIC = b"HZSLPM01"


@dataclass(frozen=True)
class LayerParams:
    alpha: float = 0.5
    beta: float = 0.5
    epsilon: float = 1e-3
    gamma: float = 0.01
    max_iters: int = 50
    rel_tol: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha={self.alpha} must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta={self.beta} must lie in (0, 1)")
        if not self.epsilon >= 0.0:
            raise ConfigError(f"epsilon={self.epsilon} must be >= 0")
        if not self.gamma > 0.0:
            raise ConfigError(f"gamma={self.gamma} must be > 0")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters={self.max_iters} must be a positive integer")
        if not self.rel_tol >= 0.0:
            raise ConfigError(f"rel_tol={self.rel_tol} must be >= 0")

    @property
    def mu(self) -> float:
        return self.alpha / (1.0 - self.alpha)

    @property
    def nu(self) -> float:
        return (1.0 - self.beta) / self.beta

    @property
    def eta(self) -> float:
        return self.gamma * (1.0 + self.mu)

    @property
    def raw_epsilon(self) -> float:
        """Weight of the graph term in the unnormalised objective."""
        return self.epsilon * (1.0 + self.mu) * (1.0 + self.nu)

    @classmethod
    def from_dict(cls, doc: dict) -> "LayerParams":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown parameter(s) {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def _laplacian_matrix(L) -> np.ndarray:
    return L.matrix if isinstance(L, Laplacian) else as_matrix(L, "Laplacian")


def objective(F, W, E_tilde, E0, L, params: LayerParams) -> float:
    """Value of the unnormalised five-term objective."""
    F = as_matrix(F, "F")
    W = as_matrix(W, "W")
    E = as_matrix(E_tilde, "E_tilde")
    E0 = as_matrix(E0, "E0")
    L = _laplacian_matrix(L)
    n, d_f = F.shape
    d_z = E.shape[1]
    if W.shape != (d_f, d_z) or E.shape != (n, d_z) or E0.shape != E.shape or L.shape != (n, n):
        raise ShapeError(
            f"shape mismatch: F{F.shape} W{W.shape} E_tilde{E.shape} E0{E0.shape} L{L.shape}"
        )
    fit = F @ W - E
    recon = F - E @ W.T
    anchor = E - E0
    return float(
        np.sum(fit * fit)
        + params.mu * np.sum(recon * recon)
        + params.raw_epsilon * np.sum(E * (L @ E))
        + params.nu * np.sum(anchor * anchor)
        + params.eta * np.sum(W * W)
    )


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def solve_w_step(F, E_tilde, alpha: float, gamma: float) -> np.ndarray:
    """Exact minimiser over ``W`` for fixed refined semantics.

    Solves ``[(1-alpha) F^T F + gamma I] W + W (alpha E^T E) = F^T E``.
    """
    F = as_matrix(F, "F")
    E = as_matrix(E_tilde, "E_tilde")
    if F.shape[0] != E.shape[0]:
        raise ShapeError(f"F has {F.shape[0]} rows but E_tilde has {E.shape[0]}")
    d_f = F.shape[1]
    A = _sym((1.0 - alpha) * (F.T @ F)) + gamma * np.eye(d_f)
    B = _sym(alpha * (E.T @ E))
    return solve_sylvester(A, B, F.T @ E)


def solve_e_step(
    F,
    W,
    E0,
    L,
    alpha: float,
    beta: float,
    epsilon: float,
    laplacian_schur: SchurForm | None = None,
) -> np.ndarray:
    """Exact minimiser over the refined semantics for fixed ``W``.

    Solves ``epsilon L E + E [alpha beta W^T W + (1-alpha) I]
    = beta F W + (1-alpha)(1-beta) E0``.  Passing the Schur form of ``L``
    avoids refactorising the ``N x N`` operator on every call.
    """
    F = as_matrix(F, "F")
    W = as_matrix(W, "W")
    E0 = as_matrix(E0, "E0")
    L = _laplacian_matrix(L)
    n, d_f = F.shape
    d_z = W.shape[1]
    if W.shape[0] != d_f or E0.shape != (n, d_z) or L.shape != (n, n):
        raise ShapeError(f"shape mismatch: F{F.shape} W{W.shape} E0{E0.shape} L{L.shape}")
    A = epsilon * L
    B = _sym(alpha * beta * (W.T @ W)) + (1.0 - alpha) * np.eye(d_z)
    C = beta * (F @ W) + (1.0 - alpha) * (1.0 - beta) * E0
    schur_a = laplacian_schur.scaled(epsilon) if laplacian_schur is not None else None
    return solve_sylvester(A, B, C, schur_a=schur_a)


@dataclass
class ProjectionResult:
    W: np.ndarray
    E_tilde: np.ndarray
    trace: list[float]
    converged: bool


def learn_projection(F, E0, L, params: LayerParams, laplacian_schur: SchurForm | None = None) -> ProjectionResult:
    """Alternate exact W- and E-steps starting from ``E_tilde = E0``.

    Stops once the relative objective decrease falls below ``params.rel_tol``
    or after ``params.max_iters`` rounds.  ``trace`` holds the objective after
    each round.
    """
    F = as_matrix(F, "F")
    E0 = as_matrix(E0, "E0")
    Lm = _laplacian_matrix(L)
    if laplacian_schur is None and params.epsilon > 0:
        laplacian_schur = schur_decompose(Lm)
    E = E0.copy()
    trace: list[float] = []
    converged = False
    W = None
    for _ in range(int(params.max_iters)):
        W = solve_w_step(F, E, params.alpha, params.gamma)
        E = solve_e_step(F, W, E0, Lm, params.alpha, params.beta, params.epsilon, laplacian_schur)
        value = objective(F, W, E, E0, Lm, params)
        if not np.isfinite(value):
            raise NumericalError(f"objective became non-finite after {len(trace) + 1} rounds")
        trace.append(value)
        if len(trace) > 1 and trace[-2] - value <= params.rel_tol * abs(trace[-2]):
            converged = True
            break
    return ProjectionResult(W, E, trace, converged)


def learn_class_projection(F, Z_s, L, params: LayerParams, laplacian_schur: SchurForm | None = None) -> ProjectionResult:
    """Class-level projection: the same learner with per-sample class semantics."""
    return learn_projection(F, Z_s, L, params, laplacian_schur)


@dataclass
class ProjectionModel:
    layer_W: list[np.ndarray]
    class_W: np.ndarray
    layer_params: list[LayerParams]
    class_params: LayerParams
    traces: dict[str, list[float]] = field(default_factory=dict)
    final_E: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        self.class_W = as_matrix(self.class_W, "class_W")
        self.layer_W = [as_matrix(W, "layer_W") for W in self.layer_W]
        for W in self.layer_W:
            if W.shape != self.class_W.shape:
                raise ShapeError(f"layer projection {W.shape} differs from class projection {self.class_W.shape}")
        if len(self.layer_params) != len(self.layer_W):
            raise ShapeError("one LayerParams per layer projection is required")

    @property
    def n_r(self) -> int:
        return len(self.layer_W)

    @property
    def d_f(self) -> int:
        return self.class_W.shape[0]

    @property
    def d_z(self) -> int:
        return self.class_W.shape[1]

    def sidecar(self, extra: dict | None = None) -> dict:
        doc = {
            "format": MODEL_MAGIC.decode(),
            "n_r": self.n_r,
            "d_f": self.d_f,
            "d_z": self.d_z,
            "layer_params": [p.to_dict() for p in self.layer_params],
            "class_params": self.class_params.to_dict(),
            "traces": self.traces,
        }
        if extra:
            doc.update(extra)
        return doc


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_model(model: ProjectionModel, path, extra: dict | None = None) -> None:
    """Write the binary matrices file and its JSON sidecar."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<III", model.n_r, model.d_f, model.d_z))
        for W in [*model.layer_W, model.class_W]:
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes(order="C"))
    sidecar_path(path).write_text(json.dumps(model.sidecar(extra), indent=1, sort_keys=True) + "\n")


def load_model(path) -> tuple[ProjectionModel, dict]:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 20 or blob[:8] != MODEL_MAGIC:
        raise ShapeError(f"{path} is not a projection model file (bad magic or truncated header)")
    n_r, d_f, d_z = struct.unpack("<III", blob[8:20])
    size = d_f * d_z * 8
    if len(blob) != 20 + (n_r + 1) * size:
        raise ShapeError(f"{path} has {len(blob)} bytes, expected {20 + (n_r + 1) * size}")
    mats = [
        np.frombuffer(blob, dtype="<f8", count=d_f * d_z, offset=20 + i * size).reshape(d_f, d_z).astype(np.float64)
        for i in range(n_r + 1)
    ]
    side_file = sidecar_path(path)
    meta = json.loads(side_file.read_text()) if side_file.exists() else {}
    layer_params = [LayerParams.from_dict(p) for p in meta.get("layer_params", [])] or [LayerParams()] * n_r
    class_params = LayerParams.from_dict(meta["class_params"]) if "class_params" in meta else LayerParams()
    model = ProjectionModel(mats[:n_r], mats[n_r], layer_params, class_params, traces=meta.get("traces", {}))
    return model, meta


def train_model(
    F_s,
    labels,
    h: ClassHierarchy,
    sem: SemanticTable,
    layer_params: LayerParams,
    class_params: LayerParams | None = None,
    neighbours: int = DEFAULT_NEIGHBOURS,
    keep_E: bool = False,
) -> ProjectionModel:
    """Learn every superclass-layer projection plus the class-level one.

    Feature rows are l2-normalised first.  All layers share ``layer_params``
    and one similarity graph; ``class_params`` defaults to ``layer_params``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    F = l2_normalize_rows(F_s)
    if F.shape[0] != labels.shape[0]:
        raise ShapeError(f"{F.shape[0]} feature rows but {labels.shape[0]} labels")
    if h.n_classes != sem.n_classes or h.dim != sem.dim:
        raise ShapeError("hierarchy does not match the semantic table")
    class_params = class_params or layer_params
    L = normalized_laplacian(build_similarity(F, neighbours))
    lap_schur = schur_decompose(L.matrix)
    layer_W, traces, finals = [], {}, {}
    for l in range(h.n_r):
        E0 = expand_superclass_matrix(h, l, labels, seen_count=sem.seen_count)
        res = learn_projection(F, E0, L, layer_params, lap_schur)
        layer_W.append(res.W)
        traces[f"layer_{l + 1}"] = res.trace
        finals[f"layer_{l + 1}"] = res.E_tilde
    Z_s = sem.vectors[labels]
    res = learn_class_projection(F, Z_s, L, class_params, lap_schur)
    traces["class"] = res.trace
    finals["class"] = res.E_tilde
    return ProjectionModel(
        layer_W,
        res.W,
        [layer_params] * h.n_r,
        class_params,
        traces=traces,
        final_E=finals if keep_E else None,
    )
