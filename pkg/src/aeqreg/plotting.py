"""Figures written next to the JSON/CSV reports."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
    "svg.hashsalt": "aeqreg",
}


def new_figure(width=3.4, height=None):
    """Single-column figure; height defaults to width over the golden ratio."""
    if height is None:
        height = width * (math.sqrt(5) - 1) / 2
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def save(fig, path):
    with plt.rc_context(STYLE):
        fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def phase_bars(m_values, phases, title=""):
    fig, ax = new_figure()
    ax.bar(m_values, phases, width=0.6, color="C0")
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xlabel(r"$m_I$")
    ax.set_ylabel(r"$\phi_m$ (rad)")
    ax.set_title(title)
    return fig


def spectrum_stems(offsets_mhz, polarizations, title=""):
    fig, ax = new_figure()
    colors = {"pi": "C0", "sigma+": "C1", "sigma-": "C2"}
    for pol, color in colors.items():
        xs = [x for x, p in zip(offsets_mhz, polarizations) if p == pol]
        if xs:
            ax.vlines(xs, 0, 1, color=color, label=pol)
    ax.set_xlabel("offset (MHz)")
    ax.set_yticks([])
    ax.legend(frameon=False)
    ax.set_title(title)
    return fig


def gate_phase_map(report):
    """Heat map of protocol phases, rows = left atom state, columns = right atom state."""
    b = report.basis
    ms = [-b.I + k for k in range(b.n_m)]
    states = [(a, m) for a in ("g", "s") for m in ms]
    grid = np.array([[report.phases[(al, ml, ar, mr)] for ar, mr in states] for al, ml in states])
    fig, ax = new_figure(3.4, 3.0)
    im = ax.imshow(grid / np.pi, cmap="twilight", vmin=-1, vmax=1)
    ticks = [f"{a}{m:+g}" for a, m in states]
    step = max(1, len(ticks) // 10)
    ax.set_xticks(range(0, len(ticks), step), ticks[::step], rotation=90)
    ax.set_yticks(range(0, len(ticks), step), ticks[::step])
    ax.set_xlabel("right atom")
    ax.set_ylabel("left atom")
    fig.colorbar(im, ax=ax, label=r"phase / $\pi$")
    return fig


def loglog_fit(x, y, xlabel, ylabel, slope=None):
    fig, ax = new_figure()
    ax.loglog(x, y, "o-")
    if slope is not None and len(x) > 1:
        ax.set_title(f"fitted slope {slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig


def sweep_lines(table, ycol):
    """``ycol`` against the first axis, one line per combination of the others."""
    fig, ax = new_figure()
    first, rest = table.axes[0], table.axes[1:]
    groups: dict[tuple, list] = {}
    for row in table.rows:
        key = tuple(row["point"][a] for a in rest)
        groups.setdefault(key, []).append((row["point"][first], row["result"].get(ycol, np.nan)))
    numeric = all(isinstance(v, (int, float)) for r in table.rows for v in [r["point"][first]])
    for key, pts in groups.items():
        xs, ys = zip(*pts)
        label = ", ".join(f"{a}={v}" for a, v in zip(rest, key)) or None
        ax.plot(xs if numeric else range(len(xs)), ys, "o-", label=label)
    ys_all = [v for v in table.column(ycol) if isinstance(v, float) and v > 0]
    if ys_all and max(ys_all) / min(ys_all) > 50:
        ax.set_yscale("log")
    ax.set_xlabel(first)
    ax.set_ylabel(ycol)
    if rest:
        ax.legend(frameon=False)
    return fig


def history(values, ylabel):
    fig, ax = new_figure()
    vals = np.array(values, dtype=float)
    ax.plot(np.arange(1, len(vals) + 1), vals, ".", color="0.6")
    ax.plot(np.arange(1, len(vals) + 1), np.minimum.accumulate(vals), "-", color="C0")
    ax.set_xlabel("evaluation")
    ax.set_ylabel(ylabel)
    if np.all(vals[np.isfinite(vals)] > 0):
        ax.set_yscale("log")
    return fig
