"""Figures for experiment output. Uses the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import APPROACH_LABELS, APPROACHES  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_detection_table(table, path):
    """Grouped bars: one panel per count type, one bar group per approach."""
    kinds = ("detected", "classified", "matched")
    width = 0.8 / max(1, len(table.sets))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(kinds), figsize=(9, 3), sharey=True)
        for ax, kind in zip(axes, kinds):
            for k, set_name in enumerate(table.sets):
                xs = [i + (k - (len(table.sets) - 1) / 2) * width for i in range(len(APPROACHES))]
                ys = [getattr(table.cell(a, set_name), kind) for a in APPROACHES]
                ax.bar(xs, ys, width, label=set_name)
            ax.set_xticks(range(len(APPROACHES)))
            ax.set_xticklabels([APPROACH_LABELS[a] for a in APPROACHES])
            ax.set_title(kind.capitalize())
        axes[0].set_ylabel("samples")
        axes[-1].legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_fuzzy_scores(reports, path, threshold=50):
    """Best fuzzy score per sample, grouped by set, with the detection threshold."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        sets = list(dict.fromkeys(row["set"] for row, _ in reports))
        for k, set_name in enumerate(sets):
            scores = [r.fuzzy_matches[0].score if r.fuzzy_matches else 0
                      for row, r in reports if row["set"] == set_name]
            ax.plot(range(len(scores)), scores, "o-", ms=3, lw=0.8, label=set_name)
        ax.axhline(threshold, color="0.4", ls="--", lw=0.8)
        ax.set_ylim(-2, 102)
        ax.set_xlabel("sample")
        ax.set_ylabel("best fuzzy score")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
