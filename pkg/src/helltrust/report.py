"""Render experiment results to figure files next to the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from helltrust.evaluation import EvalReport, SweepPoint, TrustComparison

_PNG_META = {"Software": None}  # keep reruns byte-identical


def plot_aggregate(reports: list[EvalReport], path) -> None:
    """Grouped bar chart of mean MAE and RMSE per model, with SE error bars."""
    labels = [f"{r.model}" for r in reports]
    mae = [r.mae_mean for r in reports]
    rmse = [r.rmse_mean for r in reports]
    mae_se = [r.mae_se for r in reports]
    rmse_se = [r.rmse_se for r in reports]
    x = np.arange(len(labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(labels) + 2), 4.0))
    ax.bar(x - width / 2, mae, width, yerr=mae_se, capsize=3, label="MAE")
    ax.bar(x + width / 2, rmse, width, yerr=rmse_se, capsize=3, label="RMSE")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("error")
    dataset = reports[0].dataset if reports else ""
    ax.set_title(f"Prediction error by model{' on ' + dataset if dataset else ''}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_sweep(points: list[SweepPoint], path) -> None:
    """MAE and RMSE as a function of the target expected degree (log x)."""
    ok = [p for p in points if p.error is None and np.isfinite(p.mae_mean)]
    degrees = [p.expected_degree for p in ok]
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharex=True)
    for ax, metric, name in ((axes[0], [p.mae_mean for p in ok], "MAE"),
                             (axes[1], [p.rmse_mean for p in ok], "RMSE")):
        ax.plot(degrees, metric, marker="o")
        ax.set_xscale("log")
        ax.set_xlabel("expected social degree")
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.3)
    fig.suptitle("Sensitivity to the extracted-graph density target")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_comparison(comparisons: list[TrustComparison], path) -> None:
    """Explicit vs extracted trust, grouped bars for MAE and RMSE."""
    labels = [c.spec.label for c in comparisons]
    x = np.arange(len(labels))
    width = 0.38
    fig, axes = plt.subplots(1, 2, figsize=(max(7.0, 1.6 * len(labels) + 3), 3.8))
    for ax, attr, name in ((axes[0], "mae_mean", "MAE"), (axes[1], "rmse_mean", "RMSE")):
        ax.bar(x - width / 2, [getattr(c.explicit, attr) for c in comparisons],
               width, label="explicit trust")
        ax.bar(x + width / 2, [getattr(c.implicit, attr) for c in comparisons],
               width, label="extracted trust")
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=20, ha="right")
        ax.set_ylabel(name)
        ax.grid(True, axis="y", alpha=0.3)
    axes[0].legend()
    fig.suptitle("Explicit vs extracted social relations")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
