"""Matplotlib figures written next to the CSV outputs.

Figures are built on bare ``Figure`` objects (no pyplot state) and saved with
fixed metadata and SVG id salt so identical inputs give identical bytes.
"""
from __future__ import annotations

import io

import matplotlib
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_RC = {
    "svg.hashsalt": "xrnet",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.titlesize": 11,
}


def confusion_matrix_svg(cm) -> str:
    counts = cm.counts
    k = counts.shape[0]
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(1.4 * k + 2.2, 1.4 * k + 1.6))
        FigureCanvasAgg(fig)
        ax = fig.add_subplot()
        im = ax.imshow(counts, cmap="Blues", vmin=0, vmax=max(int(counts.max()), 1))
        threshold = counts.max() / 2
        for i in range(k):
            for j in range(k):
                ax.text(j, i, str(int(counts[i, j])), ha="center", va="center",
                        color="white" if counts[i, j] > threshold else "black")
        ax.set_xticks(range(k), labels=cm.class_names)
        ax.set_yticks(range(k), labels=cm.class_names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(f"confusion matrix (n={cm.total})")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def history_png(history) -> bytes:
    epochs = [r.epoch for r in history.records]
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.4, 3.2))
        FigureCanvasAgg(fig)
        ax_loss, ax_acc = fig.subplots(1, 2)
        ax_loss.plot(epochs, history.losses, marker=".", color="tab:red")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("mean loss")
        ax_acc.plot(epochs, history.accuracies, marker=".", color="tab:blue")
        ax_acc.set_ylim(-0.02, 1.02)
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("train accuracy")
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    return buf.getvalue()
