"""Report writers: deterministic JSON, CSV tables, and matplotlib figures.

Floats are rendered at 15 significant digits so identical runs produce
byte-identical reports; figures get a fixed SVG hash salt for the same
reason.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "bouncing-lab"
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402


def _format_floats(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return float(format(obj, ".15g"))
    if isinstance(obj, (np.floating,)):
        return _format_floats(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_format_floats(float(v)) for v in obj.ravel()]
    if isinstance(obj, dict):
        return {k: _format_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_format_floats(v) for v in obj]
    return obj


def dump_json(obj, path: Path | str) -> str:
    text = json.dumps(_format_floats(obj), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")
    return text


def write_csv(path: Path | str, header: list[str], columns: list[np.ndarray]):
    rows = zip(*[np.asarray(c).ravel() for c in columns])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(float(v), ".15g") for v in row])


def figure_profile(path, s, curves: dict, xlabel="s", ylabel="", title=""):
    """Overlayed 1D curves against arc length, written to path."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for label, y in curves.items():
        ax.plot(s, y, label=label, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def figure_zero_set(path, zero_set, layer_ref=None, tau=None, title=""):
    """The two layer polylines, optionally with the predicted graphs."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(zero_set.s, zero_set.t_plus, "C0", label="upper layer", linewidth=1.3)
    ax.plot(zero_set.s, zero_set.t_minus, "C1", label="lower layer", linewidth=1.3)
    if layer_ref is not None:
        s_ref, t_ref = layer_ref
        ax.plot(s_ref, t_ref, "k--", label="eps Psi / sqrt(2)", linewidth=0.9)
        ax.plot(s_ref, -t_ref, "k--", linewidth=0.9)
    if tau is not None:
        ax.axhline(tau, color="gray", linewidth=0.6)
        ax.axhline(-tau, color="gray", linewidth=0.6)
    ax.set_xlabel("s")
    ax.set_ylabel("t")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def figure_field(path, grid, u, zero_set=None, title=""):
    """Heatmap of the two-layer state with the zero set overlaid."""
    fig, ax = plt.subplots(figsize=(7.5, 4.0))
    mesh = ax.pcolormesh(grid.s, grid.t, u.T, cmap="RdBu_r", vmin=-1.05,
                         vmax=1.05, shading="auto")
    fig.colorbar(mesh, ax=ax, label="u")
    if zero_set is not None:
        ax.plot(zero_set.s, zero_set.t_plus, "k", linewidth=0.8)
        ax.plot(zero_set.s, zero_set.t_minus, "k", linewidth=0.8)
    ax.set_xlabel("s")
    ax.set_ylabel("t")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
