"""Figures written next to the comma-separated report tables."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .workload import AccuracyResult  # noqa: E402

STYLE = {
    "figure.figsize": (8, 4.5),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
}


def plot_accuracy(slots: Sequence[int], results: Sequence[AccuracyResult], path: str,
                  title: str | None = None) -> None:
    """FPR, FNR and TFR against window end slot, saved to ``path``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(slots, [r.fpr for r in results], label="FPR", lw=1.2)
        ax.plot(slots, [r.fnr for r in results], label="FNR", lw=1.2)
        ax.plot(slots, [r.tfr for r in results], label="TFR", lw=1.6, color="k")
        ax.set_xlabel("window end slot")
        ax.set_ylabel("rate (per true super point)")
        ax.set_ylim(bottom=0, top=max(0.05, 1.1 * max((r.tfr for r in results), default=0)))
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def plot_detections(slots: Sequence[int], reported: Sequence[int], path: str,
                    truth: Sequence[int] | None = None) -> None:
    """Number of reported hosts per slot, optionally against the true count."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.step(slots, reported, where="mid", label="reported")
        if truth is not None:
            ax.step(slots, truth, where="mid", ls="--", label="true")
        ax.set_xlabel("window end slot")
        ax.set_ylabel("sliding super points")
        ax.legend(loc="upper right")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
