"""SVG line plots of the normalized density y(t)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.linewidth": 0.8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "legend.frameon": False,
    "figure.figsize": (4.5, 3.2),
    # fixed ids and no timestamp keep the SVG byte-stable
    "svg.hashsalt": "heatdet",
    "svg.fonttype": "none",
}


def plot_series(path, t, y, coeffs: dict, title: str = "", ylabel: str = "y(t)") -> Path:
    """Sampled ``y(t)`` as markers with ``sum_k c_k t^k`` drawn as a line."""
    path = Path(path)
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        try:
            ax.plot(t, y, "o", ms=3.5, color="#1f4e79", label="computed")
            tt = np.geomspace(t.min(), t.max(), 200) if t.min() > 0 else np.linspace(t.min(), t.max(), 200)
            poly = sum(c * tt**k for k, c in sorted(coeffs.items()))
            ax.plot(tt, np.broadcast_to(poly, tt.shape), "-", color="#c0504d", label="predicted")
            if t.min() > 0 and t.max() / t.min() > 20:
                ax.set_xscale("log")
            ax.set_xlabel("t")
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.legend(loc="best")
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return path
