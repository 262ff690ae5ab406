"""Report figures, rendered off-screen to PNG files."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 110,
    "savefig.bbox": "tight",
    "font.size": 9,
    "axes.linewidth": 0.6,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.1,
    "legend.frameon": False,
}


@contextmanager
def _figure(path, nrows=1, ncols=1, **kw):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, ncols, **kw)
        try:
            yield fig, axes
            fig.savefig(Path(path), metadata={"Software": None})
        finally:
            plt.close(fig)


def plot_kernel(path, x, q, title=""):
    with _figure(path) as (fig, ax):
        ax.plot(x, q, color="k")
        ax.set_xlabel("x")
        ax.set_ylabel("Q(x)")
        ax.set_title(title)


def plot_threshold(path, x, d0, tol=0.0):
    with _figure(path) as (fig, ax):
        ax.plot(x, d0, color="C0", label="$u_{0x}+\\rho_0$")
        ax.axhline(0.0, color="k", lw=0.6)
        if tol > 0:
            ax.axhspan(-tol, tol, color="C1", alpha=0.25, label="grid tolerance")
        i = int(np.argmin(d0))
        ax.plot([x[i]], [d0[i]], "o", color="C3", ms=4, label="witness")
        ax.set_xlabel("x")
        ax.legend(loc="best")


def plot_snapshots(path, x, snapshots, max_curves=8):
    """rho and u at up to ``max_curves`` evenly chosen snapshots."""
    pick = np.unique(np.linspace(0, len(snapshots) - 1, min(max_curves, len(snapshots))).astype(int))
    with _figure(path, 2, 1, sharex=True, figsize=(6.0, 5.0)) as (fig, (ax_r, ax_u)):
        cmap = plt.get_cmap("viridis")
        for c, j in enumerate(pick):
            s = snapshots[j]
            color = cmap(c / max(1, len(pick) - 1))
            ax_r.plot(x, s.rho, color=color, label=f"t={s.t:.3g}")
            ax_u.plot(x, s.u, color=color)
        ax_r.set_ylabel("$\\rho$")
        ax_u.set_ylabel("u")
        ax_u.set_xlabel("x")
        ax_r.legend(loc="upper right", fontsize=7, ncol=2)


def plot_diagnostics(path, rows):
    """Bound ratios over time; ``rows`` are dicts with t and ratio columns."""
    t = [r["t"] for r in rows]
    with _figure(path) as (fig, ax):
        ax.plot(t, [r["density_ratio"] for r in rows], label="sup $\\rho$ / bound")
        if any(r["ux_ratio"] == r["ux_ratio"] for r in rows):
            ax.plot(t, [r["ux_ratio"] for r in rows], label="sup $|u_x|$ / bound")
        ax.axhline(1.0, color="k", lw=0.6, ls="--")
        ax.set_xlabel("t")
        ax.set_ylabel("ratio")
        ax.legend(loc="best")


def plot_traces(path, traces):
    with _figure(path, 1, 2, figsize=(8.0, 3.6)) as (fig, (ax_x, ax_d)):
        for tr in traces:
            ax_x.plot(tr.X, tr.t, color="C0", lw=0.5)
            ax_d.plot(tr.t, tr.d, color="C2", lw=0.5)
        ax_x.set_xlabel("X(t)")
        ax_x.set_ylabel("t")
        ax_d.set_xlabel("t")
        ax_d.set_ylabel("d")


def plot_error_vs_eps(path, eps, err_rho, err_u):
    with _figure(path) as (fig, ax):
        ax.loglog(eps, err_rho, "o-", label="sup err $\\rho$")
        ax.loglog(eps, err_u, "s-", label="sup err u")
        ax.set_xlabel("$\\varepsilon$")
        ax.set_ylabel("difference from limit")
        ax.legend(loc="best")


def plot_convergence(path, dx, err_rho, err_u):
    with _figure(path) as (fig, ax):
        ax.loglog(dx, err_rho, "o-", label="$L^1$ err $\\rho$")
        ax.loglog(dx, err_u, "s-", label="$L^1$ err u")
        ref = np.asarray(dx, dtype=float)
        if ref.size:
            scale = max(err_rho[0], err_u[0]) / ref[0] ** 2
            ax.loglog(ref, scale * ref ** 2, "k--", lw=0.6, label="slope 2")
        ax.set_xlabel("dx")
        ax.legend(loc="best")


def plot_picard(path, deltas):
    with _figure(path) as (fig, ax):
        k = np.arange(1, len(deltas) + 1)
        vals = np.maximum(np.asarray(deltas, dtype=float), 1e-300)
        ax.semilogy(k, vals, "o-")
        ax.set_xlabel("iteration")
        ax.set_ylabel("sup-norm update")
