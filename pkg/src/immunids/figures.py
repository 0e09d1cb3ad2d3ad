"""Figure rendering for the report path: PNGs saved next to the CSV tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_activation_curves(series: dict[str, list[tuple[int, float, float]]], path: str | Path) -> Path:
    """Per-round activated-agent curves; one subplot per observable.

    `series` maps a label (usually the config hash or seed) to rows of
    (round, activated_d, activated_t).
    """
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4), sharex=True)
    for label, rows in series.items():
        rounds = [r[0] for r in rows]
        axes[0].plot(rounds, [r[1] for r in rows], label=label, linewidth=1.2)
        axes[1].plot(rounds, [r[2] for r in rows], label=label, linewidth=1.2)
    axes[0].set_ylabel("activated D agents")
    axes[1].set_ylabel("activated T agents")
    for ax in axes:
        ax.set_xlabel("round")
        ax.grid(True, linewidth=0.3, alpha=0.6)
    if len(series) > 1 and len(series) <= 12:
        axes[1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_activation_vs_attackers(rows: list[tuple[int, float, float]], path: str | Path) -> Path:
    """Mean activated-agent counts against the number of malicious sinks."""
    xs = [r[0] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    axes[0].plot(xs, [r[1] for r in rows], marker="o")
    axes[0].set_ylabel("activated D agents")
    axes[1].plot(xs, [r[2] for r in rows], marker="s", color="tab:red")
    axes[1].set_ylabel("activated T agents")
    for ax in axes:
        ax.set_xlabel("malicious sinks")
        ax.grid(True, linewidth=0.3, alpha=0.6)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_rate_bars(labels: list[str], fp_rates: list[float], fn_rates: list[float], path: str | Path) -> Path:
    """False-positive / false-negative bars per run group."""
    x = range(len(labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels)), 3.4))
    ax.bar([i - width / 2 for i in x], fp_rates, width, label="false positive")
    ax.bar([i + width / 2 for i in x], fn_rates, width, label="false negative")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("rate")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", linewidth=0.3, alpha=0.6)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
