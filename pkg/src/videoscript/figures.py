"""Report figures, rendered headlessly next to the delimited output files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .budget import BudgetPlan
from .evaluation import EvalReport


def save_category_accuracy(report: EvalReport, path: str | Path) -> Path:
    """Bar chart of per-category accuracy with the overall line."""
    path = Path(path)
    labels = list(report.accuracy_by_category) or ["overall"]
    values = list(report.accuracy_by_category.values()) or [report.accuracy_overall]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(labels) + 2), 3.5))
    ax.bar(range(len(labels)), values, color="#4878a8")
    ax.axhline(report.accuracy_overall, color="#b04a4a", linestyle="--", linewidth=1, label="overall")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 105)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_budget_trace(plans: dict[str, BudgetPlan], path: str | Path) -> Path:
    """Token count per doubling step for each video, with the context limit."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    limit = None
    for video_id, plan in sorted(plans.items()):
        xs = [step[0] for step in plan.trace]
        ys = [step[1] for step in plan.trace]
        ax.plot(xs, ys, marker="o", markersize=3, linewidth=1, label=video_id)
        limit = plan.context_limit
    if limit is not None:
        ax.axhline(limit, color="#b04a4a", linestyle="--", linewidth=1, label="context limit")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("clip length (s)")
    ax.set_ylabel("transcript tokens")
    if len(plans) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_ablation_bars(rows: Sequence[tuple[str, float]], path: str | Path) -> Path:
    """Accuracy per ablation variant."""
    path = Path(path)
    labels = [label for label, _ in rows]
    values = [value for _, value in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels) + 2), 3.5))
    ax.bar(range(len(labels)), values, color="#6a9455")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 105)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
