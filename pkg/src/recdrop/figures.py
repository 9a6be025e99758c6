"""Figure rendering for the report path.

Each CSV-producing command can also render a PNG next to its delimited
output.  Rendering is deterministic (fixed backend, no timestamps), so
figure files participate in the byte-reproducibility contract like any
other output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simulator import TransitionSpec, cluster_agreement_probability

DPI = 150

_VARIANT_STYLE = {
    "baseline": dict(color="dimgray", marker="s"),
    "fixed": dict(color="crimson", marker="o"),
    "uniform": dict(color="royalblue", marker="^"),
}

_METRIC_LABELS = {
    "map1": "mAP@1",
    "map10": "mAP@10",
    "entropy": "entropy (nats)",
    "kl": "KL(uniform || predictive)",
}


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def save_sweep_figure(records, path) -> Path:
    """2x2 metric panels vs E[N], one line per dropout variant."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 7), constrained_layout=True)
    baseline = [r for r in records if r.cell.variant == "baseline" and r.aggregate]
    for ax, metric in zip(axes.ravel(), _METRIC_LABELS):
        for variant in ("fixed", "uniform"):
            line = [r for r in records if r.cell.variant == variant and r.aggregate]
            line = baseline + line  # a shared baseline anchors both curves
            if not line:
                continue
            xs = [r.cell.expected_dropout for r in line]
            ys = [getattr(r.aggregate, metric) for r in line]
            es = [getattr(r.aggregate, f"{metric}_se") or 0.0 for r in line]
            style = _VARIANT_STYLE[variant]
            ax.errorbar(xs, ys, yerr=es, label=variant, capsize=3, **style)
        ax.set_xlabel("expected dropout E[N]")
        ax.set_ylabel(_METRIC_LABELS[metric])
        ax.grid(alpha=0.3)
    axes[0, 0].legend()
    return _finish(fig, path)


def save_heatmap_figure(matrix, path, tag: str = "model") -> Path:
    """Predictive-probability heatmap (rows: sequences, columns: items)."""
    matrix = np.asarray(matrix)
    fig, ax = plt.subplots(figsize=(8, 3.2), constrained_layout=True)
    image = ax.imshow(matrix, aspect="auto", interpolation="nearest", cmap="viridis")
    ax.set_xlabel("item id")
    ax.set_ylabel("evaluation sequence")
    ax.set_title(f"predictive distribution ({tag})")
    fig.colorbar(image, ax=ax, label="probability")
    return _finish(fig, path)


def save_spectrum_figure(curves, path) -> Path:
    """Mean Jacobian eigenvalue modulus vs time separation, log-scale y.

    ``curves`` is a list of (tag, SpectrumCurve) pairs; the dashed grey line
    marks modulus 1, the boundary between vanishing and exploding gradients.
    """
    fig, ax = plt.subplots(figsize=(6, 4.2), constrained_layout=True)
    for tag, curve in curves:
        ax.errorbar(curve.ks, curve.mean_modulus, yerr=curve.stderr, marker="o",
                    capsize=3, label=tag)
    ax.axhline(1.0, color="grey", linestyle="--", linewidth=1)
    ax.set_yscale("log")
    ax.set_xlabel("time separation k")
    ax.set_ylabel("mean eigenvalue modulus")
    ax.grid(alpha=0.3)
    ax.legend()
    return _finish(fig, path)


def save_bias_figure(curves, uniform_level: float, path) -> Path:
    """Bias curves d(k); the dotted line is the uniform-prediction level."""
    fig, ax = plt.subplots(figsize=(6, 4.2), constrained_layout=True)
    for tag, curve in curves:
        ax.plot(curve.ks, curve.values, marker=".", label=tag)
    ax.axhline(uniform_level, color="grey", linestyle=":", linewidth=1,
               label="uniform prediction")
    ax.set_xlabel("time separation k")
    ax.set_ylabel("same-cluster predictive mass d(k)")
    ax.set_ylim(bottom=0.0)
    ax.grid(alpha=0.3)
    ax.legend()
    return _finish(fig, path)


def save_difficulty_figure(spec: TransitionSpec, cells, path, max_k: int = 25) -> Path:
    """Task-difficulty curve q_k with each sweep cell's expected difficulty.

    q_k (probability that items k apart are in different clusters) is
    concave, so at matched E[N] the fixed variant sits on the curve at or
    above the uniform variant's average over its support.
    """
    from .simulator import expected_cluster_divergence

    ks = np.arange(1, max_k + 1)
    q = np.array([1.0 - cluster_agreement_probability(spec, int(k)) for k in ks])
    fig, ax = plt.subplots(figsize=(6, 4.2), constrained_layout=True)
    ax.plot(ks, q, color="crimson", label="q(k): different-cluster probability")
    seen = set()
    for cell in cells:
        if cell.variant == "baseline" or cell.expected_dropout == 0:
            continue
        sampler = cell.sampler()
        value = expected_cluster_divergence(sampler, spec)
        style = _VARIANT_STYLE[cell.variant]
        label = f"{cell.variant} E[N]" if cell.variant not in seen else None
        seen.add(cell.variant)
        ax.plot([cell.expected_dropout + 1], [value], linestyle="none",
                marker="*", markersize=11, color=style["color"], label=label)
    ax.set_xlabel("steps apart k (= E[N] + 1)")
    ax.set_ylabel("expected task difficulty")
    ax.grid(alpha=0.3)
    ax.legend()
    return _finish(fig, path)
