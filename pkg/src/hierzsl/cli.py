"""Command-line entry point: gen-synth, build-hierarchy, train, tune, eval.

Exit codes: 0 success, 2 usage or validation error, 1 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from hierzsl import __version__
from hierzsl.dataio import RunConfig, load_config, load_dataset, write_dataset
from hierzsl.errors import DataError
from hierzsl.evalbench import EvalReport, SyntheticSpec, fsl_episode_eval, gen_synthetic, gzsl_report, zsl_report
from hierzsl.hierarchy import ClassHierarchy, build_hierarchy
from hierzsl.inference import HierarchicalClassifier, fsl_class_prototypes, write_predictions_csv
from hierzsl.projection import load_model, save_model, train_model


def _load_hierarchy(path, sem) -> ClassHierarchy:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    try:
        h = ClassHierarchy.load(path)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if h.n_classes != sem.n_classes or h.dim != sem.dim:
        raise DataError(
            f"{path}: hierarchy covers {h.n_classes} classes of dimension {h.dim}, "
            f"dataset has {sem.n_classes} of dimension {sem.dim}"
        )
    if h.class_names is not None and tuple(h.class_names) != sem.names:
        raise DataError(f"{path}: class names differ from the dataset's split.json order")
    return h


def cmd_gen_synth(args) -> int:
    spec = SyntheticSpec(
        p=args.p, q=args.q, d_f=args.df, d_z=args.dz, n_per_class=args.n,
        noise_sigma=args.sigma, seed=args.seed,
    )
    data = gen_synthetic(spec)
    features = np.vstack([data.train_F, data.holdout_F, data.test_F])
    labels = np.concatenate([data.train_y, data.holdout_y, data.test_y])
    n_train = data.train_y.size
    holdout = np.arange(n_train, n_train + data.holdout_y.size)
    write_dataset(args.out, data.sem, features, labels, holdout)
    print(f"wrote {labels.size} samples of {data.sem.n_classes} classes "
          f"({spec.p} seen, {spec.q} unseen) to {args.out}")
    return 0


def cmd_build_hierarchy(args) -> int:
    ds = load_dataset(args.data)
    h = build_hierarchy(ds.sem, args.t, args.seed)
    h.save(args.out)
    print(f"layer sizes {list(h.layer_sizes)} (n_r={h.n_r}) -> {args.out}")
    return 0


def _training_rows(ds, cfg: RunConfig) -> np.ndarray:
    idx = ds.train_idx
    if cfg.max_train_samples is not None and idx.size > cfg.max_train_samples:
        rng = np.random.default_rng(cfg.seed)
        idx = np.sort(rng.choice(idx, size=cfg.max_train_samples, replace=False))
    return idx


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    h = _load_hierarchy(args.hierarchy, ds.sem)
    cfg = load_config(args.config) if args.config else RunConfig()
    idx = _training_rows(ds, cfg)
    if idx.size < 2:
        raise DataError(f"{args.data}: need at least two seen-class training samples")
    k = min(cfg.k, idx.size - 1)
    model = train_model(ds.features[idx], ds.labels[idx], h, ds.sem, cfg.layer, cfg.class_params, k)
    save_model(model, args.out, extra={"config": cfg.to_dict(), "n_train": int(idx.size)})
    for name, trace in model.traces.items():
        print(f"objective {name}: " + " ".join(f"{v:.12g}" for v in trace))
    if args.figures:
        from hierzsl.plotting import plot_objective_traces

        out = Path(args.out)
        plot_objective_traces(model.traces, out.with_name(out.stem + "_objective.png"))
    print(f"saved {model.n_r + 1} projection matrices to {args.out}")
    return 0


def cmd_tune(args) -> int:
    from hierzsl.tuning import DEFAULT_GRID, cross_validate

    ds = load_dataset(args.data)
    cfg = load_config(args.config) if args.config else RunConfig()
    grid = DEFAULT_GRID
    if args.grid:
        try:
            grid = json.loads(Path(args.grid).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"{args.grid}: {exc}") from None
    idx = _training_rows(ds, cfg)
    result = cross_validate(
        ds.features[idx], ds.labels[idx], ds.sem, grid, folds=args.folds,
        neighbours=cfg.k, seed=cfg.seed, base=cfg.layer,
    )
    cfg.layer = result.best
    cfg.class_params = None
    Path(args.out).write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    ranked = sorted(result.scores, key=lambda s: -s[1])[:5]
    for p, s in ranked:
        print(f"{s:.4f}  alpha={p['alpha']:g} beta={p['beta']:g} epsilon={p['epsilon']:g}")
    print(f"best held-out top-1 {result.best_score:.4f}; config written to {args.out}")
    return 0


def _write_report(out: Path, report: EvalReport, figures: bool) -> None:
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_table())
    if figures and report.per_class_top1:
        from hierzsl.plotting import plot_per_class_accuracy

        plot_per_class_accuracy(report.per_class_top1, out / "per_class_accuracy.png", title=report.mode)


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    h = _load_hierarchy(args.hierarchy, ds.sem)
    model, meta = load_model(args.model)
    cfg = RunConfig.from_dict(meta["config"]) if "config" in meta else RunConfig()
    clf = HierarchicalClassifier(model, h, ds.sem, cfg.top_k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ds.sem.names

    if args.mode in ("zsl", "gzsl"):
        if args.mode == "zsl":
            rows = ds.unseen_idx
            allowed = ds.sem.unseen
        else:
            if ds.test_seen.size == 0:
                raise DataError(f"{args.data}: gzsl needs test_seen_samples in split.json")
            rows = np.concatenate([ds.test_seen, ds.unseen_idx])
            allowed = np.arange(ds.sem.n_classes)
        if rows.size == 0:
            raise DataError(f"{args.data}: no test samples for mode {args.mode}")
        preds = clf.predict(ds.features[rows], allowed)
        pred = np.array([p.label for p in preds])
        truth = ds.labels[rows]
        if args.mode == "zsl":
            report = zsl_report(pred, truth, names, ranked=[p.ranking for p in preds], k=5)
        else:
            report = gzsl_report(pred, truth, ds.sem.seen, names)
        report.fallback_count = sum(p.candidates.fallback for p in preds)
        write_predictions_csv(out / "predictions.csv", preds, names)
        _write_report(out, report, args.figures)
    else:
        novel = ds.sem.unseen
        if novel.size < args.nway:
            raise DataError(f"{args.data}: fsl needs at least {args.nway} unseen classes, found {novel.size}")

        def classify(support, queries):
            protos = fsl_class_prototypes(clf, support, cfg.fsl_lambda)
            return [p.label for p in clf.predict(queries, sorted(support), class_protos=protos)]

        res = fsl_episode_eval(
            classify, ds.features, ds.labels, novel, n_way=args.nway, k_shot=args.kshot,
            n_query=args.nquery, n_episodes=args.episodes, seed=cfg.seed,
        )
        report = EvalReport(
            mode="fsl", n_test=res.n_queries, top1=res.mean, ci95=res.ci95, n_episodes=args.episodes,
        )
        with open(out / "episodes.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["episode", "accuracy"])
            for i, a in enumerate(res.accuracies):
                writer.writerow([i, repr(float(a))])
        _write_report(out, report, args.figures)
        if args.figures:
            from hierzsl.plotting import plot_episode_accuracies

            plot_episode_accuracies(res.accuracies, out / "episode_accuracy.png",
                                    title=f"{args.nway}-way {args.kshot}-shot")
    sys.stdout.write(report.to_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierzsl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="write a synthetic planted-model dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--p", type=int, default=40, help="seen classes")
    g.add_argument("--q", type=int, default=10, help="unseen classes")
    g.add_argument("--df", type=int, default=32, help="feature dimension")
    g.add_argument("--dz", type=int, default=16, help="semantic dimension")
    g.add_argument("--n", type=int, default=30, help="samples per class")
    g.add_argument("--sigma", type=float, default=0.05, help="feature noise")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_synth)

    b = sub.add_parser("build-hierarchy", help="cluster class semantics into a hierarchy")
    b.add_argument("--data", required=True)
    b.add_argument("--t", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_hierarchy)

    t = sub.add_parser("train", help="learn layer and class projections")
    t.add_argument("--data", required=True)
    t.add_argument("--hierarchy", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--no-figures", dest="figures", action="store_false")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("tune", help="cross-validate alpha/beta/epsilon on seen classes")
    c.add_argument("--data", required=True)
    c.add_argument("--config", help="base config whose other fields are kept")
    c.add_argument("--grid", help="JSON object with alpha, beta and epsilon lists")
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_tune)

    e = sub.add_parser("eval", help="evaluate a trained model")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--hierarchy", required=True)
    e.add_argument("--mode", choices=["zsl", "gzsl", "fsl"], default="zsl")
    e.add_argument("--kshot", type=int, default=1)
    e.add_argument("--nway", type=int, default=5)
    e.add_argument("--nquery", type=int, default=15)
    e.add_argument("--episodes", type=int, default=600)
    e.add_argument("--out", default="report")
    e.add_argument("--no-figures", dest="figures", action="store_false")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
