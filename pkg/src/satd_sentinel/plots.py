"""Evaluation figures written next to the delimited report (``eval --plot-dir``)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METRICS = ("precision", "recall", "f_measure", "auc")


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) corners of the ROC curve; tied scores move diagonally."""
    pairs = sorted(zip(scores, labels), key=lambda p: -p[0])
    pos = sum(1 for _, y in pairs if y)
    neg = len(pairs) - pos
    if not pos or not neg:
        return [(0.0, 0.0), (1.0, 1.0)]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(pairs):
        j = i
        while j < len(pairs) and pairs[j][0] == pairs[i][0]:
            if pairs[j][1]:
                tp += 1
            else:
                fp += 1
            j += 1
        points.append((fp / neg, tp / pos))
        i = j
    return points


def write_fold_table(report, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["fold", "size", *METRICS, "tp", "fp", "tn", "fn"])
        for f in report.folds:
            c = f.confusion
            writer.writerow([f.fold, f.size, *(f"{getattr(f, m):.6f}" for m in METRICS), c["tp"], c["fp"], c["tn"], c["fn"]])
        c = report.confusion
        writer.writerow(["mean", sum(f.size for f in report.folds), *(f"{getattr(report, m):.6f}" for m in METRICS), c["tp"], c["fp"], c["tn"], c["fn"]])
    return path


def plot_roc(report, path, baselines=None) -> Path:
    """Pooled ROC over all folds, plus optional ``{name: EvalReport}`` baselines."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    curves = {"model": report, **(baselines or {})}
    for name, rep in curves.items():
        scores = [s for f in rep.folds for s in f.scores]
        labels = [y for f in rep.folds for y in f.labels]
        xs, ys = zip(*roc_points(scores, labels))
        ax.plot(xs, ys, label=f"{name} (AUC {rep.auc:.3f})")
    ax.plot([0, 1], [0, 1], color="0.7", linestyle=":", linewidth=1)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.01)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_fold_metrics(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    n = len(report.folds)
    width = 0.8 / len(METRICS)
    for k, metric in enumerate(METRICS):
        xs = [i + (k - (len(METRICS) - 1) / 2) * width for i in range(n)]
        ax.bar(xs, [getattr(f, metric) for f in report.folds], width, label=metric.replace("_", "-"))
    ax.set_xticks(range(n))
    ax.set_xticklabels([f"fold {f.fold}" for f in report.folds])
    ax.set_ylim(0, 1.05)
    ax.axhline(0.8, color="0.5", linestyle="--", linewidth=0.8)
    ax.legend(ncol=4, fontsize=8, loc="lower center")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_eval_artifacts(report, out_dir, baselines=None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        write_fold_table(report, out / "folds.tsv"),
        plot_roc(report, out / "roc.png", baselines),
        plot_fold_metrics(report, out / "fold_metrics.png"),
    ]
