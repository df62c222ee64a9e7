"""Report figures rendered next to the JSON artifacts."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TIER_STYLE = {1.5: ("tab:orange", "mean + 1.5 sd"), 2.0: ("tab:red", "mean + 2 sd")}
CLASS_COLORS = {"TruePositive": "tab:red", "BenignPositive": "tab:orange", "Legitimate": "tab:green"}


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(labelsize=8)


def plot_score_distributions(records, thresholds: dict, path: Path) -> Path:
    tags = sorted(thresholds["models"])
    ncols = 2
    nrows = max(1, -(-len(tags) // ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(9, 3.2 * nrows), squeeze=False)
    for ax, tag in zip(axes.flat, tags):
        m = thresholds["models"][tag]
        vals = np.array([r.scores[tag] for r in records if tag in r.scores])
        ax.hist(vals, bins=60, color="0.6", log=True)
        ax.axvline(m["mean"], color="k", lw=1, label="mean")
        for k, (color, label) in TIER_STYLE.items():
            ax.axvline(m["mean"] + k * m["std"], color=color, lw=1, ls="--", label=label)
        ax.set_title(tag.replace(":", " / "), fontsize=9)
        ax.set_xlabel("score", fontsize=8)
        ax.set_ylabel("payloads", fontsize=8)
        _style(ax)
    for ax in list(axes.flat)[len(tags) :]:
        ax.set_visible(False)
    axes.flat[0].legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_verdict_counts(verdicts, path: Path) -> Path:
    counts = {c: 0 for c in CLASS_COLORS}
    for v in verdicts:
        counts[v.classification.value] += 1
    fig, ax = plt.subplots(figsize=(5, 3))
    bars = ax.bar(list(counts), list(counts.values()), color=[CLASS_COLORS[c] for c in counts])
    ax.set_yscale("log")
    ax.bar_label(bars, fontsize=8)
    ax.set_ylabel("payloads", fontsize=8)
    _style(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_local_scores(local_results, local_info: dict, path: Path) -> Path:
    scores = [r.score for r in local_results.values() if r.score is not None]
    fig, ax = plt.subplots(figsize=(5, 3))
    if scores:
        ax.hist(scores, bins=40, color="0.6")
    if local_info.get("cutoff") is not None:
        ax.axvline(local_info["cutoff"], color="tab:red", ls="--", lw=1, label="cutoff")
        ax.legend(fontsize=7, frameon=False)
    ax.set_xlabel("mean isolation score of flagged payload", fontsize=8)
    ax.set_ylabel("payloads", fontsize=8)
    _style(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(output_dir, records, verdicts, thresholds, local_results, local_info) -> list[Path]:
    fig_dir = Path(output_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    return [
        plot_score_distributions(records, thresholds, fig_dir / "score_distributions.png"),
        plot_verdict_counts(verdicts, fig_dir / "verdict_counts.png"),
        plot_local_scores(local_results, local_info, fig_dir / "local_scores.png"),
    ]
