"""Report figures written next to the JSON/CSV outputs."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}

# no timestamps or version strings, so reruns give identical bytes
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_objective_traces(traces: Mapping[str, Sequence[float]], path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for name, trace in traces.items():
            ax.plot(range(1, len(trace) + 1), trace, marker="o", ms=3, label=name)
        ax.set_xlabel("alternation round")
        ax.set_ylabel("objective")
        if any(min(t) > 0 for t in traces.values() if len(t)):
            ax.set_yscale("log")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_per_class_accuracy(per_class: Mapping[str, float], path, title: str = "") -> Path:
    names = list(per_class)
    width = max(4.0, 0.18 * len(names) + 1.5)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(width, 3.2))
        ax.bar(range(len(names)), [per_class[n] for n in names], color="0.35")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=90, fontsize=6)
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel("top-1 accuracy")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_episode_accuracies(accuracies: Sequence[float], path, title: str = "") -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.hist(accuracies, bins=20, range=(0.0, 1.0), color="0.35")
        ax.set_xlabel("episode accuracy")
        ax.set_ylabel("episodes")
        if title:
            ax.set_title(title)
        return _save(fig, path)
