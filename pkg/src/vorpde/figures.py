"""Matplotlib figure rendering for the report path.

Figures are written as PNG files alongside the delimited outputs; everything
is drawn with the Agg backend at fixed size and dpi, with the metadata block
stripped, so repeated runs produce identical bytes.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap

from .formats import palette
from .geometry import GridSpec, LabelGrid, ScalarField, SiteSet

_SAVE_KW = dict(dpi=130, metadata={"Software": None})


def _extent(spec: GridSpec):
    d = spec.domain
    return (d.x0, d.x1, d.y0, d.y1)


def _label_cmap(n: int) -> ListedColormap:
    cols = [(0, 0, 0)] + [tuple(c / 255 for c in rgb) for rgb in palette(max(n, 1))]
    return ListedColormap(cols)


def save_label_figure(path, grid: LabelGrid, siteset: SiteSet = None, title: str = None):
    """Label grid as a colored image, sites overplotted as open circles."""
    n = max(int(grid.labels.max()) + 1, 1)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(
        grid.labels + 1,  # shift so UNASSIGNED -> 0 -> black
        origin="lower",
        extent=_extent(grid.spec),
        cmap=_label_cmap(n),
        vmin=0,
        vmax=n,
        interpolation="nearest",
    )
    if siteset is not None:
        ax.plot(siteset.sites[:, 0], siteset.sites[:, 1], "ko", mfc="none", ms=10, mew=1.5)
    if title:
        ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_field_figure(path, fieldgrid: ScalarField, siteset: SiteSet = None, title: str = None,
                      log_scale: bool = False, overlay_mask: np.ndarray = None):
    """Scalar field as an image with a colorbar; optional mask overlay."""
    vals = fieldgrid.values
    if log_scale:
        floor = vals[vals > 0].min() if (vals > 0).any() else 1e-300
        vals = np.log10(np.maximum(vals, floor))
    fig, ax = plt.subplots(figsize=(5.6, 5))
    im = ax.imshow(vals, origin="lower", extent=_extent(fieldgrid.spec), cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.85)
    if overlay_mask is not None:
        yy, xx = np.nonzero(overlay_mask)
        X, Y = fieldgrid.spec.mesh()
        ax.plot(X[yy, xx], Y[yy, xx], ".", color="red", ms=1.0)
    if siteset is not None:
        ax.plot(siteset.sites[:, 0], siteset.sites[:, 1], "wo", mfc="none", ms=9, mew=1.5)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_trajectory_figure(path, state, siteset: SiteSet, title: str = None):
    """Colonization trajectories as colored point clouds, one color per source,
    sources marked with black circles."""
    cols = [tuple(c / 255 for c in rgb) for rgb in palette(state.n_sources)]
    fig, ax = plt.subplots(figsize=(5, 5))
    hist = state.history[:, :, : state.t + 1, :]
    for i in range(state.n_sources):
        pts = hist[i].reshape(-1, 2)
        ax.plot(pts[:, 0], pts[:, 1], ".", color=cols[i], ms=1.0, rasterized=True)
    ax.plot(siteset.sites[:, 0], siteset.sites[:, 1], "ko", mfc="none", ms=12, mew=2)
    d = siteset.domain
    ax.set_xlim(d.x0, d.x1)
    ax.set_ylim(d.y0, d.y1)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_series_figure(path, series, xlabel: str, ylabel: str, title: str = None, log_y: bool = False):
    """Line plot of (x, y, label) triples, for probe curves and diagnostics."""
    fig, ax = plt.subplots(figsize=(5.6, 4))
    for x, y, label in series:
        ax.plot(x, y, lw=1.2, label=label)
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path
