"""Accuracy metrics, report formatting, synthetic data and few-shot episodes."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from hierzsl.errors import ConfigError, ShapeError
from hierzsl.hierarchy import SemanticTable


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ShapeError(f"prediction/truth length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ShapeError("cannot score an empty prediction list")
    return pred, truth


def top1_accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(pred == truth))


def per_class_accuracy(pred, truth) -> dict:
    """Accuracy within each true class, keyed by class label."""
    pred, truth = _pair(pred, truth)
    out = {}
    for c in np.unique(truth):
        mask = truth == c
        out[c.item()] = float(np.mean(pred[mask] == c))
    return out


def mean_per_class_accuracy(pred, truth) -> float:
    return float(np.mean(list(per_class_accuracy(pred, truth).values())))


def hit_at_k(ranked_preds: Sequence[Sequence], truth, k: int = 5) -> float:
    """Fraction of samples whose true label is among the first ``k`` ranked labels."""
    truth = np.asarray(truth)
    if len(ranked_preds) == 0:
        raise ShapeError("cannot score an empty prediction list")
    if len(ranked_preds) != truth.shape[0]:
        raise ShapeError(f"{len(ranked_preds)} rankings but {truth.shape[0]} truths")
    if k < 1:
        raise ShapeError(f"k={k} must be >= 1")
    hits = sum(1 for ranked, t in zip(ranked_preds, truth) if t in list(ranked)[:k])
    return hits / len(ranked_preds)


def harmonic_mean(acc_s: float, acc_u: float) -> float:
    total = acc_s + acc_u
    return 2.0 * acc_s * acc_u / total if total > 0 else 0.0


@dataclass
class EvalReport:
    mode: str
    n_test: int
    top1: float
    overall_top1: float | None = None
    per_class_top1: dict[str, float] = field(default_factory=dict)
    hit_at_k: float | None = None
    hit_k: int | None = None
    acc_s: float | None = None
    acc_u: float | None = None
    hm: float | None = None
    ci95: float | None = None
    n_episodes: int | None = None
    fallback_count: int | None = None

    def __post_init__(self):
        for name in ("top1", "overall_top1", "hit_at_k", "acc_s", "acc_u", "hm"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ShapeError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_table(self) -> str:
        """Aligned plain-text rendering: summary metrics, then per-class accuracy."""
        rows = [("metric", "value")]
        for key in ("mode", "n_test", "top1", "overall_top1", "hit_at_k", "hit_k",
                    "acc_s", "acc_u", "hm", "ci95", "n_episodes", "fallback_count"):
            v = getattr(self, key)
            if v is not None:
                rows.append((key, f"{v:.4f}" if isinstance(v, float) else str(v)))
        lines = _align(rows)
        if self.per_class_top1:
            lines.append("")
            lines.extend(_align([("class", "top1")] + [(c, f"{a:.4f}") for c, a in self.per_class_top1.items()]))
        return "\n".join(lines) + "\n"


def _align(rows: list[tuple[str, str]]) -> list[str]:
    width = max(len(r[0]) for r in rows)
    vwidth = max(len(r[1]) for r in rows)
    out = [f"{a:<{width}}  {b:>{vwidth}}" for a, b in rows]
    out.insert(1, "-" * (width + 2 + vwidth))
    return out


def _named(per_class: Mapping, names: Sequence[str] | None) -> dict[str, float]:
    return {(names[c] if names is not None else str(c)): a for c, a in per_class.items()}


def zsl_report(pred, truth, names: Sequence[str] | None = None, ranked=None, k: int = 5, mode: str = "zsl") -> EvalReport:
    pred, truth = _pair(pred, truth)
    per_class = per_class_accuracy(pred, truth)
    return EvalReport(
        mode=mode,
        n_test=int(truth.size),
        top1=float(np.mean(list(per_class.values()))),
        overall_top1=top1_accuracy(pred, truth),
        per_class_top1=_named(per_class, names),
        hit_at_k=hit_at_k(ranked, truth, k) if ranked is not None else None,
        hit_k=k if ranked is not None else None,
    )


def gzsl_report(pred, truth, seen_set, names: Sequence[str] | None = None) -> EvalReport:
    """Per-class accuracy on seen and unseen partitions and their harmonic mean."""
    pred, truth = _pair(pred, truth)
    seen_mask = np.isin(truth, np.asarray(list(seen_set)))
    if not seen_mask.any() or seen_mask.all():
        raise ShapeError("generalised evaluation needs test samples from both seen and unseen classes")
    acc_s = mean_per_class_accuracy(pred[seen_mask], truth[seen_mask])
    acc_u = mean_per_class_accuracy(pred[~seen_mask], truth[~seen_mask])
    per_class = per_class_accuracy(pred, truth)
    return EvalReport(
        mode="gzsl",
        n_test=int(truth.size),
        top1=float(np.mean(list(per_class.values()))),
        overall_top1=top1_accuracy(pred, truth),
        per_class_top1=_named(per_class, names),
        acc_s=acc_s,
        acc_u=acc_u,
        hm=harmonic_mean(acc_s, acc_u),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    p: int = 40
    q: int = 10
    d_f: int = 32
    d_z: int = 16
    n_per_class: int = 30
    noise_sigma: float = 0.05
    seed: int = 0
    # superclusters of roughly t classes each, class spread around its centre
    t: int = 5
    spread: float = 0.35
    n_holdout: int | None = None

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ConfigError(f"need p >= 1 and q >= 1, got p={self.p} q={self.q}")
        if self.n_per_class < 1:
            raise ConfigError(f"n_per_class={self.n_per_class} must be >= 1")
        if self.d_z < 1:
            raise ConfigError(f"d_z={self.d_z} must be >= 1")
        if self.d_f < self.d_z:
            raise ConfigError(f"d_f < d_z ({self.d_f} < {self.d_z}): planted orthonormal map impossible")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma={self.noise_sigma} must be >= 0")
        if self.t < 2:
            raise ConfigError(f"t={self.t} must be >= 2")

    @property
    def holdout(self) -> int:
        return max(1, self.n_per_class // 5) if self.n_holdout is None else self.n_holdout


@dataclass
class SyntheticData:
    sem: SemanticTable
    train_F: np.ndarray
    train_y: np.ndarray
    test_F: np.ndarray
    test_y: np.ndarray
    holdout_F: np.ndarray
    holdout_y: np.ndarray
    M: np.ndarray
    supercluster: np.ndarray


def gen_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Planted linear model over two-level Gaussian-mixture class semantics.

    Class semantic vectors are unit-norm perturbations of supercluster
    centres; unseen classes are picked one per supercluster where possible.
    A sample of class ``c`` is ``z_c @ M.T + noise`` with ``M`` (d_f x d_z)
    having orthonormal columns.  Seen classes get ``n_per_class`` training
    samples plus ``spec.holdout`` held-out ones; unseen classes get
    ``n_per_class`` test samples.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.p + spec.q
    n_super = max(1, n // spec.t)
    centres = rng.standard_normal((n_super, spec.d_z)) / math.sqrt(spec.d_z)
    group = np.arange(n) % n_super
    raw = centres[group] + spec.spread * rng.standard_normal((n, spec.d_z)) / math.sqrt(spec.d_z)
    vectors = raw / np.linalg.norm(raw, axis=1, keepdims=True)

    unseen: list[int] = []
    order = rng.permutation(n_super)
    for i in range(spec.q):
        pool = [c for c in np.flatnonzero(group == order[i % n_super]) if c not in unseen]
        if not pool:
            pool = [c for c in range(n) if c not in unseen]
        unseen.append(int(rng.choice(pool)))
    seen = [c for c in range(n) if c not in unseen]
    unseen.sort()
    table_order = np.array(seen + unseen)

    G = rng.standard_normal((spec.d_f, spec.d_z))
    M, R = np.linalg.qr(G)
    M = M * np.sign(np.diag(R))[None, :]

    names = [f"class_{c:03d}" for c in table_order]
    sem = SemanticTable(names, vectors[table_order], seen_count=spec.p)

    def draw(count: int, classes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = np.repeat(classes, count)
        noise = spec.noise_sigma * rng.standard_normal((y.size, spec.d_f))
        return sem.vectors[y] @ M.T + noise, y

    train_F, train_y = draw(spec.n_per_class, sem.seen)
    test_F, test_y = draw(spec.n_per_class, sem.unseen)
    holdout_F, holdout_y = draw(spec.holdout, sem.seen)
    return SyntheticData(sem, train_F, train_y, test_F, test_y, holdout_F, holdout_y, M, group[table_order])


@dataclass(frozen=True)
class EpisodeResult:
    mean: float
    ci95: float
    accuracies: np.ndarray
    n_queries: int = 0


@dataclass(frozen=True)
class Episode:
    classes: np.ndarray
    support: dict[int, np.ndarray]
    query_idx: np.ndarray
    query_y: np.ndarray


def draw_episodes(labels, classes, n_way: int, k_shot: int, n_query: int, n_episodes: int, seed: int) -> list[Episode]:
    """Sample ``n_way``-way episodes: ``k_shot`` support and up to ``n_query`` queries per class.

    ``support`` maps class -> sample indices.
    """
    labels = np.asarray(labels)
    classes = np.unique(np.asarray(classes))
    if classes.size < n_way:
        raise ShapeError(f"need at least {n_way} novel classes, have {classes.size}")
    if k_shot < 1 or n_query < 1 or n_episodes < 1:
        raise ShapeError("k_shot, n_query and n_episodes must all be >= 1")
    by_class = {int(c): np.flatnonzero(labels == c) for c in classes}
    short = [c for c, idx in by_class.items() if idx.size < k_shot + 1]
    if short:
        raise ShapeError(f"class {short[0]} has fewer than k_shot + 1 = {k_shot + 1} samples")
    rng = np.random.default_rng(seed)
    episodes = []
    for _ in range(n_episodes):
        chosen = np.sort(rng.choice(classes, size=n_way, replace=False))
        support, q_idx, q_y = {}, [], []
        for c in chosen:
            idx = rng.permutation(by_class[int(c)])
            support[int(c)] = idx[:k_shot]
            q = idx[k_shot:k_shot + n_query]
            q_idx.append(q)
            q_y.append(np.full(q.size, c))
        episodes.append(Episode(chosen, support, np.concatenate(q_idx), np.concatenate(q_y)))
    return episodes


Classifier = Callable[[Mapping[int, np.ndarray], np.ndarray], np.ndarray]


def fsl_episode_eval(
    classify: Classifier,
    features,
    labels,
    novel_classes,
    n_way: int = 5,
    k_shot: int = 1,
    n_query: int = 15,
    n_episodes: int = 600,
    seed: int = 0,
) -> EpisodeResult:
    """Mean episode accuracy with a 95% interval (``1.96 * stderr``).

    ``classify(support, queries)`` receives a mapping class -> support
    feature rows and the query rows, and returns one predicted class each.
    """
    features = np.asarray(features, dtype=np.float64)
    episodes = draw_episodes(labels, novel_classes, n_way, k_shot, n_query, n_episodes, seed)
    accs = np.empty(len(episodes))
    n_queries = 0
    for i, ep in enumerate(episodes):
        support = {c: features[idx] for c, idx in ep.support.items()}
        pred = np.asarray(classify(support, features[ep.query_idx]))
        accs[i] = np.mean(pred == ep.query_y)
        n_queries += ep.query_y.size
    ci = 1.96 * accs.std(ddof=1) / math.sqrt(accs.size) if accs.size > 1 else 0.0
    return EpisodeResult(float(accs.mean()), float(ci), accs, n_queries)
