"""Deterministic SVG figure emitters for reports.

Figures accompany the delimited outputs of the CLI report paths. SVG output
is byte-stable across runs: the Agg backend is forced, the SVG hash salt is
pinned, and the Date metadata field is suppressed.
"""

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "oxipipe"

import matplotlib.pyplot as plt
import numpy as np

from .dsp import STREAMS
from .errors import IoFailure

_CHANNEL_COLORS = ("#c23b22", "#2e8b57", "#3b5bc2")
_CHANNEL_NAMES = ("red", "green", "blue")


def _save(fig, path):
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise IoFailure(f"cannot write figure: {exc}") from exc
    finally:
        plt.close(fig)


def plot_training_curves(history, path):
    """Train/val RMSE per epoch from a list of EpochRecord."""
    epochs = [rec.epoch for rec in history]
    train = [rec.train_rmse for rec in history]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(epochs, train, color="#444444", label="train")
    if history and history[0].val_rmse is not None:
        ax.plot(epochs, [rec.val_rmse for rec in history],
                color="#c23b22", label="val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("RMSE (SpO2 points)")
    ax.legend(loc="upper right")
    ax.set_title("training progress")
    fig.tight_layout()
    _save(fig, path)


def plot_channel_shares(shares, path, title="channel relevance shares"):
    """Bar chart of per-color shares; legend restates values and their sum."""
    if isinstance(shares, dict):
        keys = ("r", "g", "b") if "r" in shares else _CHANNEL_NAMES
        shares = [shares[name] for name in keys]
    shares = np.asarray(shares, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    bars = ax.bar(range(3), shares, color=_CHANNEL_COLORS)
    labels = [f"{name}: {share:.4f}"
              for name, share in zip(_CHANNEL_NAMES, shares)]
    labels.append(f"total: {shares.sum():.4f}")
    handles = list(bars) + [plt.Rectangle((0, 0), 0, 0, alpha=0.0)]
    ax.legend(handles, labels, loc="upper right", fontsize=8)
    ax.set_xticks(range(3))
    ax.set_xticklabels(_CHANNEL_NAMES)
    ax.set_ylim(0.0, max(1.0, float(shares.max()) * 1.2))
    ax.set_ylabel("share of |relevance|")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_relevance_heatmap(rel, path):
    """Stream-by-time heatmap of one RelevanceMap."""
    grid = np.asarray(rel.relevance, dtype=np.float64)
    span = max(float(np.max(np.abs(grid))), 1e-12)
    fig, ax = plt.subplots(figsize=(7.0, 3.8))
    im = ax.imshow(grid, aspect="auto", cmap="coolwarm", vmin=-span, vmax=span,
                   interpolation="nearest")
    names = STREAMS if grid.shape[0] == len(STREAMS) else [
        f"ch{i}" for i in range(grid.shape[0])]
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xlabel("sample")
    ax.set_title(f"relevance (prediction {rel.prediction:.2f}, "
                 f"bias {rel.bias_absorbed:.3g})")
    fig.colorbar(im, ax=ax, shrink=0.9)
    fig.tight_layout()
    _save(fig, path)


def plot_signal(signal, path, max_seconds=None):
    """Color traces of a recording, with the SpO2 reference when present."""
    n = len(signal)
    if max_seconds is not None:
        n = min(n, int(round(max_seconds * signal.fps)))
    t = np.arange(n) / signal.fps
    fig, ax = plt.subplots(figsize=(7.0, 3.6))
    for c, (color, name) in enumerate(zip(_CHANNEL_COLORS, _CHANNEL_NAMES)):
        ax.plot(t, signal.samples[:n, c], color=color, linewidth=0.7, label=name)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("mean intensity")
    if signal.spo2 is not None:
        twin = ax.twinx()
        twin.plot(t, signal.spo2[:n], color="#888888", linewidth=0.9,
                  linestyle="--", label="SpO2")
        twin.set_ylabel("SpO2 (%)")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("color signal")
    fig.tight_layout()
    _save(fig, path)


def plot_grid_points(report, path):
    """Validation RMSE of each grid point, winner highlighted."""
    ok = [(i, rec) for i, rec in enumerate(report.points) if rec.status == "ok"]
    fig, ax = plt.subplots(figsize=(7.0, 3.6))
    xs = [i for i, _ in ok]
    ys = [rec.val_rmse for _, rec in ok]
    ax.plot(xs, ys, marker="o", color="#444444", linewidth=0.8)
    for i, rec in ok:
        if rec.config == report.selected:
            ax.plot([i], [rec.val_rmse], marker="*", markersize=14,
                    color="#c23b22")
    ax.set_xlabel("grid point (lexicographic order)")
    ax.set_ylabel("best-instance val RMSE")
    ax.set_title(f"grid search (winner: {_config_label(report.selected)})")
    fig.tight_layout()
    _save(fig, path)


def _config_label(config):
    return (f"L{config['conv_layers']} w{config['window_s']:g}s "
            f"f{config['filters']} k{config['filter_length']}")
