"""Static SVG figures of the value function and the investment ratio."""
import io
import logging
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

__all__ = ("setup_figure_style", "value_figure", "ratio_figure")

STYLE = {
    "font.family": "sans-serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    # fixed ids and no timestamp keep reruns byte-identical
    "svg.hashsalt": "regrowth",
    "svg.fonttype": "path",
}


def setup_figure_style() -> None:
    plt.rcParams.update(STYLE)


def _curves(ax, frame: pd.DataFrame, column: str, label: str, **style) -> None:
    cmap = plt.get_cmap("viridis")
    regimes = sorted(frame["regime"].unique())
    for k, regime in enumerate(regimes):
        rows = frame[frame["regime"] == regime].sort_values("x")
        color = cmap(0.15 + 0.7 * k / max(1, len(regimes) - 1))
        ax.plot(rows["x"], rows[column], color=color, label=f"{label} {regime}", **style)


def _render(fig) -> bytes:
    buffer = io.BytesIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buffer.getvalue()


def value_figure(values: pd.DataFrame, baseline: Optional[pd.DataFrame] = None) -> bytes:
    setup_figure_style()
    fig, ax = plt.subplots(figsize=(5.0, 3.5))

    _curves(ax, values, "V", "regime")
    if baseline is not None:
        rows = baseline.sort_values("x")
        ax.plot(rows["x"], rows["V"], "k--", label="single regime")

    ax.set_xlabel("income x")
    ax.set_ylabel("V(x, regime)")
    ax.set_xlim(0, values["x"].max())
    ax.legend(loc="lower right")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    return _render(fig)


def ratio_figure(policy: pd.DataFrame, baseline: Optional[pd.DataFrame] = None) -> bytes:
    """Optimal investment ratio phi*/x per regime; the x = 0 row is left out."""
    setup_figure_style()
    fig, ax = plt.subplots(figsize=(5.0, 3.5))

    interior = policy[policy["x"] > 0]
    _curves(ax, interior, "invest_ratio", "regime")
    if baseline is not None:
        rows = baseline[baseline["x"] > 0].sort_values("x")
        ax.plot(rows["x"], rows["invest_ratio"], "k--", label="single regime")

    ax.set_xlabel("income x")
    ax.set_ylabel("investment ratio")
    ax.set_xlim(0, policy["x"].max())
    ax.set_ylim(0, min(1.0, max(np.nanmax(interior["invest_ratio"]) * 1.1, 0.05)))
    ax.legend(loc="upper right")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    return _render(fig)
