"""Figure rendering for evaluation reports and training diagnostics.

Figures are written to files next to the delimited output; matplotlib's
Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalReport  # noqa: E402


def render_eval_figures(report: EvalReport, out_dir) -> list[str]:
    """Compression-rate histogram and rate-versus-loss scatter as PNGs."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    rates = [s.rate for s in report.sentences]
    hammings = [s.hamming for s in report.sentences]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(rates, bins=20, color="#4878a8", edgecolor="white")
    if report.corpus_rate is not None:
        ax.axvline(report.corpus_rate, color="#a83232", linestyle="--",
                   label="corpus rate %.1f%%" % report.corpus_rate)
        ax.legend()
    ax.set_xlabel("compression rate (%)")
    ax.set_ylabel("sentences")
    ax.set_title("Compression rate distribution")
    path = os.path.join(out_dir, "compression_rates.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(rates, hammings, s=14, alpha=0.7, color="#4878a8")
    ax.set_xlabel("compression rate (%)")
    ax.set_ylabel("token Hamming loss")
    ax.set_title("Loss versus compression rate")
    path = os.path.join(out_dir, "loss_vs_rate.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written


def render_training_curves(history, out_dir) -> list[str]:
    """Objective and constraints-per-pass curves from training history."""
    os.makedirs(out_dir, exist_ok=True)
    passes = [h.number for h in history]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(passes, [h.objective for h in history], marker="o", color="#4878a8")
    ax1.set_ylabel("objective")
    ax1.set_title("Training diagnostics")
    ax2.bar(passes, [h.added for h in history], color="#7aa85a")
    ax2.set_ylabel("constraints added")
    ax2.set_xlabel("pass")
    path = os.path.join(out_dir, "training_curves.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return [path]
