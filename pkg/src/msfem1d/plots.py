"""Figure rendering for case reports and convergence studies."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "font.family": "serif",
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "grid.linestyle": ":",
    "grid.linewidth": 0.5,
    "axes.grid": True,
    "savefig.bbox": "tight",
}

COLORS = {
    "reference": "black",
    "fem": "tab:red",
    "mf-msfem": "tab:blue",
    "char-msfem": "tab:green",
}


def _snapshot_label(name: str) -> str:
    return {"fem": "FEM", "mf-msfem": "MF-MsFEM", "char-msfem": "Char-MsFEM"}.get(name, name)


def render_case_figures(result, out_dir) -> list:
    """Snapshot-comparison and error-history figures for one case run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context(STYLE):
        paths.append(_snapshot_figure(result, out_dir / "snapshots.png"))
        paths.append(_error_figure(result, out_dir / "errors.png"))
    return [p for p in paths if p is not None]


def _snapshot_figure(result, path):
    cfg = result.config
    show_times = [t for t in cfg.snapshot_times if t in result.record_times]
    if not show_times:
        return None
    ref_by_time = {s.time: s for s in result.reference}
    n_col = len(show_times)
    fig, axes = plt.subplots(2, n_col, figsize=(3.0 * n_col, 4.6), sharex=True)
    axes = np.atleast_2d(axes)
    if n_col == 1:
        axes = axes.reshape(2, 1)
    for j, t in enumerate(show_times):
        top, bottom = axes[0, j], axes[1, j]
        ref = ref_by_time[t]
        top.plot(ref.x, ref.values, color=COLORS["reference"], label="reference")
        for name, variant in result.variants.items():
            if variant.failure:
                continue
            snap = next(s for s in variant.snapshots if s.time == t)
            top.plot(snap.x, snap.values, color=COLORS[name],
                     label=_snapshot_label(name), alpha=0.85)
            bottom.semilogy(snap.x, np.abs(snap.values - ref.values) + 1e-18,
                            color=COLORS[name], alpha=0.85)
        top.set_title(f"t = {t:g}")
        bottom.set_xlabel("x")
        if j == 0:
            top.set_ylabel("u")
            bottom.set_ylabel("|error|")
            top.legend(loc="upper right")
    fig.suptitle(result.config.label())
    fig.savefig(path)
    plt.close(fig)
    return path


def _error_figure(result, path):
    metrics = [("rel_l2", "relative L2 error"), ("rel_linf", "relative Linf error"),
               ("rel_h1", "relative H1 error")]
    fig, axes = plt.subplots(1, 3, figsize=(9.5, 2.8))
    plotted = False
    for ax, (attr, title) in zip(axes, metrics):
        for name, variant in result.variants.items():
            if variant.failure or not variant.errors:
                continue
            times = [r.time for r in variant.errors]
            values = [getattr(r, attr) for r in variant.errors]
            ax.semilogy(times, values, color=COLORS[name], label=_snapshot_label(name))
            plotted = True
        ax.set_title(title)
        ax.set_xlabel("t")
    if not plotted:
        plt.close(fig)
        return None
    axes[0].legend()
    fig.suptitle(result.config.label())
    fig.savefig(path)
    plt.close(fig)
    return path


def render_convergence_figure(result, path) -> Path:
    """Log-log error decay of the characteristic method versus resolution."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        ns = [row[0] for row in result.rows]
        ax.loglog(ns, [row[1] for row in result.rows], "o-", label="L2")
        ax.loglog(ns, [row[2] for row in result.rows], "s--", label="Linf")
        ax.set_xlabel("coarse cells")
        ax.set_ylabel("relative error")
        ax.set_title(result.config.label())
        ax.legend()
        fig.savefig(path)
        plt.close(fig)
    return path


def render_characteristics_figure(tab, path) -> Path:
    """Node trajectories over time (phase-space style display)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        for m in range(tab.node_paths.shape[0]):
            ax.plot(np.mod(tab.node_paths[m], 1.0), tab.times, ",", markersize=1)
        ax.set_xlabel("x (mod 1)")
        ax.set_ylabel("t")
        ax.set_title("coarse-node characteristics")
        fig.savefig(path)
        plt.close(fig)
    return path


def render_basis_figure(bset, path, n_snapshots: int = 4) -> Path:
    """A few time slices of every nodal basis function."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_times = bset.times.shape[0]
    picks = np.unique(np.linspace(0, n_times - 1, n_snapshots).astype(int))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(picks), figsize=(2.6 * len(picks), 2.6),
                                 sharey=True)
        axes = np.atleast_1d(axes)
        xi = np.linspace(bset.mesh.nodes[:-1], bset.mesh.nodes[1:], bset.n_fine, axis=1)
        for ax, idx in zip(axes, picks):
            alpha = bset.values_at(idx)
            for c in range(bset.mesh.n_cells):
                ax.plot(xi[c], alpha[c], color="tab:blue", lw=0.8)
                ax.plot(xi[c], 1.0 - alpha[c], color="tab:orange", lw=0.8)
            ax.set_title(f"t = {bset.times[idx]:g}")
            ax.set_xlabel("xi")
        axes[0].set_ylabel("basis value")
        fig.savefig(path)
        plt.close(fig)
    return path
