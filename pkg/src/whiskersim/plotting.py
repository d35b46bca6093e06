"""SVG figures for calibration, sweeps and contour-following runs.

Output is reproducible: the SVG id salt is fixed and no date is written.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import boundary_polyline  # noqa: E402

STYLE = {
    "svg.hashsalt": "whiskersim",
    "svg.fonttype": "none",   # keep text as text, smaller files
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (6.0, 4.5),
}

GT_COLOR = "0.25"
EST_COLOR = "tab:red"


def save_svg(fig, path):
    """Write an SVG without timestamp metadata."""
    with plt.rc_context({"svg.hashsalt": STYLE["svg.hashsalt"]}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def calibration_figure(grid, profiles=(), path=None):
    """Grid samples coloured by reading, with traced shaft profiles.

    Args:
        grid: CalibrationGrid.
        profiles: iterable of (z, (N, 2) polyline) pairs.
        path: SVG destination; the figure is returned when None.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        S = grid.samples
        sc = ax.scatter(S[:, 0], S[:, 1], c=S[:, 2], s=14, cmap="viridis", zorder=2)
        fig.colorbar(sc, ax=ax, label="reading z (uT)")
        for z, line in profiles:
            ax.plot(line[:, 0], line[:, 1], lw=0.9, color="0.3")
            ax.annotate(f"{z:.0f}", line[-1], fontsize=6, color="0.3")
        ax.plot([0], [0], "k^", ms=6, label="root")
        ax.set_xlabel("x (mm, base frame)")
        ax.set_ylabel("y (mm, base frame)")
        ax.set_aspect("equal")
        ax.legend(loc="upper left")
        fig.tight_layout()
    if path is None:
        return fig
    save_svg(fig, path)


def sweep_figure(trials, path=None):
    """Per-distance error distribution (box style), slipped trials hatched."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        data = [t.errors if len(t.errors) else np.array([np.nan]) for t in trials]
        pos = [t.distance for t in trials]
        bp = ax.boxplot(data, positions=pos, widths=2.5, showfliers=False,
                        patch_artist=True, manage_ticks=False)
        for box, t in zip(bp["boxes"], trials):
            box.set_facecolor("tab:orange" if t.slip else "tab:blue")
            box.set_alpha(0.7)
            if t.slip:
                box.set_hatch("//")
        ax.plot(pos, [t.metrics.mean_abs_error for t in trials], "k.", label="mean")
        ax.axhline(2.0, color="0.5", ls="--", lw=0.8, label="2 mm")
        ax.set_xticks(pos)
        ax.set_xlabel("contact distance (mm)")
        ax.set_ylabel("tip error (mm)")
        ax.set_yscale("symlog", linthresh=0.1)
        ax.legend(loc="upper left")
        fig.tight_layout()
    if path is None:
        return fig
    save_svg(fig, path)


def overlay_figure(contour, record, path=None, title=None):
    """Ground-truth contour with the reconstructed contact points on top."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        gt = boundary_polyline(contour, 0.5)
        ax.plot(gt[:, 0], gt[:, 1], color=GT_COLOR, lw=1.2, label="ground truth",
                gid="ground-truth")
        xs = np.array([(r[2], r[3]) for r in record.rows])
        if len(xs):
            ax.plot(xs[:, 0], xs[:, 1], color="0.7", lw=0.6, ls=":", label="sensor path",
                    gid="sensor-path")
        pts = record.reconstructed
        ax.scatter(pts[:, 0], pts[:, 1], s=2, color=EST_COLOR, label="reconstruction",
                   gid="reconstruction", zorder=3)
        ax.set_aspect("equal")
        ax.set_xlabel("x (mm)")
        ax.set_ylabel("y (mm)")
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        fig.tight_layout()
    if path is None:
        return fig
    save_svg(fig, path)
