"""Density grids and region-map figures on the (rx power, C/N0) plane."""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap, LogNorm  # noqa: E402
from matplotlib.patches import Ellipse  # noqa: E402

from .errors import OutputExists  # noqa: E402
from .files import open_output  # noqa: E402
from .nominal import cell_of  # noqa: E402
from .regions import Label, RegionMap, classify_arrays  # noqa: E402

REGION_COLORS = {
    Label.NOMINAL: "#4daf4a",
    Label.JAMMING: "#fdb863",
    Label.BLOCKED: "#9ecae1",
    Label.SPOOFING: "#c2a5cf",
    Label.UNREALISTIC: "#ffff99",
    Label.SIGNAL_LOSS: "#d9d9d9",
}
DENSITY_FIELDS = ("i", "j", "rx_power", "cn0", "count", "fraction")


def density_grid(points) -> list:
    """Occupied 1x1 cells as ``(i, j, count, fraction)``, sorted by cell."""
    counts = Counter(cell_of((p.rx_power, p.cn0)) for p in points if p.cn0 is not None)
    n = sum(counts.values())
    return [(i, j, c, c / n) for (i, j), c in sorted(counts.items())]


def write_density_csv(path, grid, force: bool = False) -> None:
    with open_output(path, force) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DENSITY_FIELDS)
        for i, j, c, frac in grid:
            w.writerow([i, j, i + 0.5, j + 0.5, c, repr(frac)])


def _limits(regions: RegionMap | None, grid, pad=6.0):
    xs, ys = [], []
    if grid:
        xs += [g[0] for g in grid] + [g[0] + 1 for g in grid]
        ys += [g[1] for g in grid] + [g[1] + 1 for g in grid]
    if regions is not None:
        cx, cy = regions.ellipse.center
        xs += [regions.noise_floor - pad, regions.floor_rx + pad]
        ys += [min(regions.cn0_floor, cy) - pad - 10, cy + 2 * pad]
    return (min(xs), max(xs)), (min(ys), max(ys))


def draw_regions(ax, regions: RegionMap, xlim, ylim, resolution: int = 400):
    """Shade the labelled plane and outline the boundaries."""
    gx = np.linspace(*xlim, resolution)
    gy = np.linspace(*ylim, resolution)
    X, Y = np.meshgrid(gx, gy)
    codes, _, _ = classify_arrays(regions, X.ravel(), Y.ravel(), with_margin=False)
    cmap = ListedColormap([REGION_COLORS[lab] for lab in Label])
    ax.pcolormesh(X, Y, codes.reshape(X.shape), cmap=cmap, vmin=-0.5, vmax=len(Label) - 0.5,
                  shading="auto", alpha=0.6, rasterized=True)
    e = regions.ellipse
    ax.add_patch(Ellipse(e.center, 2 * e.semi_axes[0], 2 * e.semi_axes[1],
                         angle=np.degrees(e.rotation), fill=False, lw=1.2, color="k"))
    xs = np.linspace(regions.anchor[0], xlim[1], 200)
    ax.plot(xs, regions.spoof_boundary(xs), "k--", lw=1)
    ax.axvline(regions.noise_floor, color="k", lw=0.8, ls=":")
    for lab in (Label.NOMINAL, Label.JAMMING, Label.BLOCKED, Label.SPOOFING, Label.UNREALISTIC):
        ax.plot([], [], "s", color=REGION_COLORS[lab], label=lab.value)


def render_figure(path, points=(), regions: RegionMap | None = None, title: str | None = None,
                  force: bool = False, dpi: int = 120) -> None:
    """Density of ``points`` over the region map, written to ``path`` (format from suffix)."""
    path = Path(path)
    if path.exists() and not force:
        raise OutputExists(f"{path} exists; pass --force to overwrite")
    grid = density_grid(points)
    xlim, ylim = _limits(regions, grid)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    if regions is not None:
        draw_regions(ax, regions, xlim, ylim)
    if grid:
        H = np.zeros((int(ylim[1] - ylim[0]) + 2, int(xlim[1] - xlim[0]) + 2))
        x0, y0 = int(np.floor(xlim[0])), int(np.floor(ylim[0]))
        for i, j, _, frac in grid:
            H[j - y0, i - x0] = frac
        H = np.ma.masked_equal(H, 0.0)
        xe = np.arange(x0, x0 + H.shape[1] + 1)
        ye = np.arange(y0, y0 + H.shape[0] + 1)
        mesh = ax.pcolormesh(xe, ye, H, norm=LogNorm(vmin=H.min(), vmax=H.max()), cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="fraction of epochs")
    ax.set_xlim(*xlim)
    ax.set_ylim(*ylim)
    ax.set_xlabel("received power [dBW/Hz]")
    ax.set_ylabel("C/N0 [dB-Hz]")
    if regions is not None:
        ax.legend(loc="lower left", fontsize=7, framealpha=0.8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
