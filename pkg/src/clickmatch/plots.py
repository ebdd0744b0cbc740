"""Report figures rendered next to the delimited reports."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import EvalReport


def save_recall_curve(points: Sequence[tuple[int, float]], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = [k for k, _ in points]
    recalls = [r for _, r in points]
    ax.plot(ks, recalls, marker="o")
    ax.set_xlabel("k (neighbors per representation)")
    ax.set_ylabel("candidate recall")
    ax.set_title("Recall of the KNN candidate union")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_importance_chart(
    importance: Mapping[str, float], path: str | Path, top_n: int = 25
) -> None:
    ranked = sorted(importance.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    names = [n for n, _ in ranked][::-1]
    gains = [g for _, g in ranked][::-1]
    fig, ax = plt.subplots(figsize=(7, max(3, 0.28 * len(names))))
    ax.barh(range(len(names)), gains)
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xlabel("total split gain")
    ax.set_title("Feature importance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_f1_curve(reports: Sequence[EvalReport], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = [r.k for r in reports]
    ax.plot(ks, [r.f1 for r in reports], marker="o", label="F1")
    ax.plot(ks, [r.precision for r in reports], marker="s", alpha=0.6, label="precision")
    ax.plot(ks, [r.recall for r in reports], marker="^", alpha=0.6, label="recall")
    ax.set_xlabel("submission size k")
    ax.set_ylabel("score")
    ax.set_title("Submission quality vs. size")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_chart(rows: Mapping[str, float], path: str | Path) -> None:
    names = list(rows)
    values = [rows[n] for n in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(names)), values)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=25, ha="right", fontsize=8)
    ax.set_ylabel("F1 at the submission budget")
    ax.set_title("Pipeline ablations")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
