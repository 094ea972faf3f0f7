"""Figure rendering for CLI reports (written next to the delimited output)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_intensity_curve(rows: Sequence[dict], path: str | Path) -> str:
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    mu = [r["mean_photons"] for r in rows]
    ax.plot(mu, [r["rate"] for r in rows], color="tab:orange", lw=2)
    ax.set_xlabel("mean photon number at the measurement box")
    ax.set_ylabel("certified bits per pulse")
    ax.set_title("Generation rate vs. source intensity")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_loss_curve(rows: Sequence[dict], path: str | Path) -> str:
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    loss = [r["loss_db"] for r in rows]
    ax.plot(loss, [r["rate_optimal"] for r in rows], color="tab:blue", lw=2,
            label="re-optimized intensity")
    ax.plot(loss, [r["rate_fixed"] for r in rows], color="tab:red", lw=2,
            label="fixed intensity")
    ax.plot(loss, [r["rate_legacy_fixed"] for r in rows], color="gray", lw=1.5,
            ls="--", label="legacy treatment (fixed)")
    ax.fill_between(
        loss,
        [r["rate_fixed"] for r in rows],
        [r["rate_legacy_fixed"] for r in rows],
        color="gray",
        alpha=0.2,
        label="blinding exposure gap",
    )
    ax.set_xlabel("channel loss (dB)")
    ax.set_ylabel("certified bits per pulse")
    ax.set_title("Generation rate vs. channel loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_dimension_curve(rows: Sequence[dict], path: str | Path) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    dims = [r["dimension"] for r in rows]
    ax.plot(dims, [r["rate"] for r in rows], "o-", color="tab:purple")
    ax.set_xlabel("measurement dimension")
    ax.set_ylabel("optimized certified bits per pulse")
    ax.set_title("Generation rate vs. dimension")
    ax.set_xticks(dims)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_battery_pvalues(results, path: str | Path) -> str:
    """Histogram of per-sequence P-values for every implemented test."""
    implemented = [r for r in results if r.implemented]
    fig, axes = plt.subplots(
        1, len(implemented), figsize=(2.1 * len(implemented), 2.6), sharey=True
    )
    for ax, result in zip(axes, implemented):
        for sub, ps in result.p_values.items():
            ax.hist(ps, bins=10, range=(0, 1), alpha=0.6, label=sub or None)
        ax.set_title(result.name, fontsize=8)
        ax.tick_params(labelsize=7)
    axes[0].set_ylabel("sequences")
    fig.suptitle("P-value distribution per test")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_attack_gap(reports: dict, path: str | Path) -> str:
    """Bar chart: certified rate per treatment under the same attack."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    names = list(reports)
    rates = [reports[n].rate if reports[n] is not None else 0.0 for n in names]
    bars = ax.bar(names, rates, color=["tab:green", "tab:red"][: len(names)])
    for bar, rate in zip(bars, rates):
        ax.annotate(
            f"{rate:.3f}",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center",
            va="bottom",
        )
    ax.set_ylabel("certified bits per pulse")
    ax.set_title("Certified rate under blinding attack")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
