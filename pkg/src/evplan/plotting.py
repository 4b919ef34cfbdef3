"""Render budget sweep curves to an image file."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

from .sweep import PlotPoint  # noqa: E402

LABELS = {"joint": "joint", "price_only": "price only", "placement_only": "placement only"}
# Baselines first and dashed so the joint curve stays visible where they coincide.
STYLE = {
    "price_only": dict(ls="--", lw=1.2, zorder=2),
    "placement_only": dict(ls="--", lw=1.2, zorder=2),
    "joint": dict(ls="-", lw=2.0, zorder=3),
}
DRAW_ORDER = ("price_only", "placement_only", "joint")


def plot_sweep(points: Sequence[PlotPoint], path: str | Path, title: str | None = None) -> Path:
    """Mean social cost against budget per method, shaded by one standard deviation."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    for method in DRAW_ORDER:
        pts = sorted((p for p in points if p.method == method and math.isfinite(p.mean_theta)), key=lambda p: p.budget)
        if not pts:
            continue
        b = [p.budget for p in pts]
        m = [p.mean_theta for p in pts]
        s = [p.std_theta for p in pts]
        (line,) = ax.plot(b, m, marker="o", ms=3, label=LABELS[method], **STYLE[method])
        if any(v > 0 for v in s):
            ax.fill_between(b, [u - v for u, v in zip(m, s)], [u + v for u, v in zip(m, s)], color=line.get_color(), alpha=0.2)
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_xlabel("charger budget B")
    ax.set_ylabel("social cost")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    # Fixed metadata keeps repeated renders byte-identical.
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
