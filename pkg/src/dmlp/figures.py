"""Figure rendering for training and evaluation reports.

File output only; the Agg backend is forced so the CLI can render on
headless machines alongside its delimited stdout output.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import Scenario
from .runtime import EvalReport
from .training import TrainHistory


def save_history_figure(history: TrainHistory, path) -> str:
    """Loss and accuracy curves over epochs, written to `path`."""
    epochs = np.arange(1, len(history) + 1)
    fig, (ax_loss, ax_acc) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 5.0))
    ax_loss.plot(epochs, history.losses, color="tab:red")
    ax_loss.set_ylabel("mean training loss")
    ax_loss.grid(alpha=0.3)
    ax_acc.plot(epochs, [100.0 * a for a in history.accuracies], color="tab:blue")
    ax_acc.set_ylabel("training accuracy (%)")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylim(0.0, 105.0)
    ax_acc.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def save_eval_figure(report: EvalReport, path) -> str:
    """Accuracy per scenario plus the overall bar, written to `path`."""
    labels = [s.display for s in Scenario] + ["All"]
    values = [report.counts[s].accuracy_percent for s in Scenario]
    values.append(report.overall_accuracy_percent)
    heights = [np.nan if v is None else v for v in values]
    colors = ["tab:blue"] * len(Scenario) + ["tab:green"]
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    x = np.arange(len(labels))
    ax.bar(x, heights, color=colors)
    for xi, v in zip(x, values):
        if v is not None:
            ax.text(xi, v + 1.0, f"{v:.1f}", ha="center", fontsize=9)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0.0, 110.0)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
