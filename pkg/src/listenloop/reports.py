"""Structured exports for the CLI and dashboard: partition plans, iteration
summaries, tag histograms, 2D projections, and strategy comparisons.

Every report has a delimited (CSV) form; the render_* helpers draw the
matching matplotlib figure next to it.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .engine import IterationRecord
from .ingestion import EmbeddingPool
from .partition import PartitionPlan
from .persistence import Database

ROLE_MEDOID = "medoid"
ROLE_PROPOSED = "proposed"
ROLE_DISCARDED = "discarded"


# -- 2D projection -----------------------------------------------------------

def pca_2d(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-component principal projection with a fixed sign convention.

    Signs are pinned by forcing each component's largest-magnitude loading
    positive, so repeated fits of the same data give identical coordinates.
    """
    x = np.asarray(vectors, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2].copy()
    if components.shape[0] < 2:
        components = np.vstack([components, np.zeros_like(components[0])])
    for i in range(2):
        pivot = int(np.argmax(np.abs(components[i])))
        if components[i, pivot] < 0:
            components[i] = -components[i]
    return centered @ components.T, components


def projection_rows(
    db: Database, pool: EmbeddingPool, iteration_id: str
) -> list[dict]:
    """Per-audio dashboard points for one committed iteration.

    Roles partition the plotted set: the iteration's medoids, the proposed
    audios, and the processed-set audios that were considered but discarded.
    """
    proposed = {p.audio_id for p in db.iteration_proposals(iteration_id)}
    pool_members = dict(db.iteration_pool_rows(iteration_id))
    medoids = dict(db.iteration_medoid_rows(iteration_id))

    roles: dict[str, str] = {a: ROLE_MEDOID for a in medoids}
    for audio_id in pool_members:
        roles[audio_id] = ROLE_PROPOSED if audio_id in proposed else ROLE_DISCARDED
    for audio_id in proposed:
        roles[audio_id] = ROLE_PROPOSED

    ids = sorted(a for a in roles if a in pool)
    if not ids:
        return []
    coords, _ = pca_2d(pool.vectors(ids))
    rows = []
    for i, audio_id in enumerate(ids):
        rec = pool[audio_id]
        rows.append({
            "audio_id": audio_id,
            "x": float(coords[i, 0]),
            "y": float(coords[i, 1]),
            "role": roles[audio_id],
            "top1_class": rec.top1_class,
        })
    return rows


# -- text/table reports -------------------------------------------------------

def plan_report_lines(plan: PartitionPlan) -> list[str]:
    lines = [f"disjoint sets: {plan.n_ds}  (spilled: {plan.spill_count})"]
    for j, size in enumerate(plan.set_sizes(), start=1):
        lines.append(f"  set {j}: {size} samples")
    lines.append(f"classes: {len(plan.class_buckets)}")
    for cls in sorted(plan.class_buckets):
        lines.append(f"  class {cls}: {plan.class_buckets[cls]} samples")
    return lines


def plan_rows(plan: PartitionPlan) -> list[dict]:
    return [
        {
            "audio_id": a.audio_id,
            "set_index": a.set_index,
            "rule": a.rule,
            "spilled": int(a.spilled),
        }
        for a in sorted(plan.assignments.values(), key=lambda a: (a.set_index, a.audio_id))
    ]


def iteration_summary_lines(record: IterationRecord) -> list[str]:
    s = record.summary()
    lines = [
        f"iteration {s['iteration_id']} (seq {s['seq']}) on node {s['node_id']}",
        f"  window: [{s['window_start']}, {s['window_end']})",
        f"  window size {s['s_w']}  labeled {s['s_wm']}  unlabeled {s['s_wnh']}"
        f"  ({100 * s['labeled_pct']:.1f}% labeled)",
        f"  disjoint sets: {s['n_ds']}, processed: {s['processed_sets']}",
        f"  medoid pool: {s['medoid_count']}",
        f"  path: {s['path']}, proposals: {s['proposal_count']}",
    ]
    for prov, count in sorted(s["provenance_counts"].items()):
        lines.append(f"    {prov}: {count}")
    if s["classifier"]:
        c = s["classifier"]
        lines.append(
            f"  classifier: trained={c['trained']} fallback={c['fallback']}"
            f" n_train={c['n_train']} classes={c['n_classes']}"
            f" iters={c['iterations']} grad_norm={c['grad_norm']:.2e}"
        )
    return lines


def histogram_rows(entries: Sequence[tuple[int, str, int]]) -> list[dict]:
    return [
        {"class_id": class_id, "name": name, "count": count}
        for class_id, name, count in entries
    ]


def comparison_lines(comparison) -> list[str]:
    strategies = sorted(comparison.series)
    header = "iter  " + "  ".join(f"{s:>18}" for s in strategies)
    lines = [header]
    length = max(
        (len(comparison.series[s].mean_accuracy) for s in strategies), default=0
    )
    for i in range(length):
        cells = []
        for s in strategies:
            series = comparison.series[s]
            cells.append(
                f"{series.mean_accuracy[i]:.4f} ± {series.std_accuracy[i]:.4f}"
            )
        lines.append(f"{i + 1:>4}  " + "  ".join(f"{c:>18}" for c in cells))
    return lines


# -- delimited output ----------------------------------------------------------

def write_csv(rows: Sequence[Mapping], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if not rows:
            fh.write("")
            return path
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return path


# -- figures --------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_histogram_figure(
    entries: Sequence[tuple[int, str, int]], path: str | Path, title: str = "Tag frequencies"
) -> Path:
    plt = _pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [name for _, name, _ in entries]
    counts = [count for _, _, count in entries]
    fig, ax = plt.subplots(figsize=(max(6, 0.22 * len(names) + 2), 4.5))
    ax.bar(range(len(names)), counts, color="#3b7dd8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_ylabel("annotations")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


_ROLE_STYLE = {
    ROLE_MEDOID: {"color": "#e8790b", "marker": "o", "s": 26, "zorder": 3},
    ROLE_PROPOSED: {"color": "#2a9d2a", "marker": "*", "s": 60, "zorder": 4},
    ROLE_DISCARDED: {"color": "#b0b0b0", "marker": ".", "s": 10, "zorder": 2},
}


def render_projection_figure(
    rows: Sequence[Mapping], path: str | Path, title: str = "Iteration projection"
) -> Path:
    plt = _pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 6))
    for role in (ROLE_DISCARDED, ROLE_MEDOID, ROLE_PROPOSED):
        xs = [r["x"] for r in rows if r["role"] == role]
        ys = [r["y"] for r in rows if r["role"] == role]
        ax.scatter(xs, ys, label=f"{role} ({len(xs)})", **_ROLE_STYLE[role])
    ax.legend(loc="best")
    ax.set_title(title)
    ax.set_xlabel("pc1")
    ax.set_ylabel("pc2")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_accuracy_figure(comparison, path: str | Path) -> Path:
    plt = _pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in sorted(comparison.series):
        series = comparison.series[name]
        xs = np.arange(1, len(series.mean_accuracy) + 1)
        mean = np.array(series.mean_accuracy)
        std = np.array(series.std_accuracy)
        ax.plot(xs, mean, marker="o", label=name)
        ax.fill_between(xs, mean - std, mean + std, alpha=0.15)
    ax.set_xlabel("iteration")
    ax.set_ylabel("propagation accuracy")
    ax.set_title("Labeling-budget efficiency")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def comparison_rows(comparison) -> list[dict]:
    rows = []
    for name in sorted(comparison.series):
        series = comparison.series[name]
        for i, (mean, std) in enumerate(
            zip(series.mean_accuracy, series.std_accuracy), start=1
        ):
            rows.append({
                "strategy": name, "iteration": i,
                "mean_accuracy": mean, "std_accuracy": std,
            })
    return rows
