"""SVG/PNG figure output for the ROC sweep and the headline metrics."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

__all__ = ["plot_roc", "plot_metric_bars"]

_FORMATS = ("svg", "png")


def _save_both(fig, out_base) -> list:
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for ext in _FORMATS:
        path = out_base.with_suffix("." + ext)
        fig.savefig(path, bbox_inches="tight", dpi=150)
        written.append(path)
    plt.close(fig)
    return written


def plot_roc(curve, out_base) -> list:
    """Staircase ROC with the calibrated operating point called out."""
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    order = curve.fpr.argsort(kind="stable")
    ax.plot(curve.fpr[order], curve.tpr[order], drawstyle="steps-post",
            color="tab:blue", lw=1.8, label=f"detector (AUC = {curve.auc:.3f})")
    ax.plot([0, 1], [0, 1], ls="--", color="0.6", lw=1.0, label="chance")
    if curve.operating:
        op = curve.operating
        ax.plot([op["fpr"]], [op["tpr"]], "o", color="tab:red", ms=7, zorder=5,
                label=f"calibrated point ({op['fpr']:.1%} FPR, {op['tpr']:.1%} TPR)")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("Window-score ROC")
    return _save_both(fig, out_base)


def plot_metric_bars(report, out_base) -> list:
    """Bar panel of the headline rates plus the perturbation-economy pair."""
    rates = [
        ("trigger rate", report.trigger_rate),
        ("detector TPR", report.detector_tpr),
        ("detector FPR", report.detector_fpr),
        ("ADP", report.adp),
        ("DHP", report.dhp),
        ("end-to-end FPR", report.end_to_end_fpr),
    ]
    rates = [(n, v) for n, v in rates if v is not None]
    ratios = [("event-triggered", report.ratio_avg),
              ("always-on corner", report.baseline_ratio)]
    ratios = [(n, v) for n, v in ratios if v is not None]

    ncols = 2 if ratios else 1
    fig, axes = plt.subplots(1, ncols, figsize=(4.4 * ncols + 1.2, 4.2))
    axes = [axes] if ncols == 1 else list(axes)

    ax = axes[0]
    names = [n for n, _ in rates]
    vals = [v for _, v in rates]
    bars = ax.bar(range(len(vals)), vals, color="tab:blue", width=0.6)
    for b, v in zip(bars, vals):
        ax.text(b.get_x() + b.get_width() / 2, v + 0.015, f"{v:.2f}",
                ha="center", fontsize=8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.grid(axis="y", alpha=0.3)
    ax.set_title("Outcome rates")

    if ratios:
        ax = axes[1]
        names = [n for n, _ in ratios]
        vals = [v for _, v in ratios]
        bars = ax.bar(range(len(vals)), vals, color=["tab:green", "tab:orange"][:len(vals)],
                      width=0.5)
        for b, v in zip(bars, vals):
            ax.text(b.get_x() + b.get_width() / 2, v * 1.01 + 0.002, f"{v:.1%}",
                    ha="center", fontsize=8)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, fontsize=9)
        ax.set_ylabel("average reactance move")
        ax.grid(axis="y", alpha=0.3)
        ax.set_title("Perturbation economy")

    fig.tight_layout()
    return _save_both(fig, out_base)
