"""Static SVG figures for experiment reports.

Figures are written with a fixed hash salt and no date stamp so that the
same data always produces the same bytes.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "overdet-lab",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "figure.figsize": (4.5, 3.4),
    "legend.frameon": False,
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": "overdet-lab"}, bbox_inches="tight")
    plt.close(fig)
    return path


def domain_outline(outlines, path: Path) -> Path:
    """Closed boundary polylines, one per (label, (n, 2) array)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, pts in outlines:
            pts = np.asarray(pts)
            closed = np.vstack([pts, pts[:1]])
            ax.plot(closed[:, 0], closed[:, 1], label=label)
        ax.plot([0], [0], "k+", ms=6)
        ax.set_aspect("equal")
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        if len(outlines) > 1:
            ax.legend(loc="upper right")
        return _save(fig, path)


def deficit_scatter(points, path: Path) -> Path:
    """D against M - 1 with the line D = (5/2)(M - 1)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if points:
            m1, d = np.asarray(points).T
            ax.plot(m1, d, "o", label="measured")
            x = np.linspace(0.0, max(m1.max(), 1e-12) * 1.1, 50)
            ax.plot(x, 2.5 * x, "--", label="$D = 5(M-1)/2$")
            ax.legend(loc="upper left")
        ax.set_xlabel("$M - 1$")
        ax.set_ylabel("isoperimetric deficit $D$")
        return _save(fig, path)


def psi_curve(r, psi, solid, apex_value, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(r, psi, "o-", label=r"cap mean $\psi(r)$")
        ax.plot(r, solid, "s--", label="solid mean")
        ax.axhline(apex_value, color="k", lw=0.8, label="$v(x_0)$")
        ax.set_xlabel("$r$")
        ax.set_ylabel("mean value")
        ax.legend(loc="best")
        return _save(fig, path)


def flux_profile(phi, flux, path: Path) -> Path:
    order = np.argsort(phi)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(np.asarray(phi)[order], np.asarray(flux)[order])
        ax.set_xlabel(r"angle along $\Gamma_0$")
        ax.set_ylabel(r"torsion flux $u_\nu$")
        return _save(fig, path)


def constants_vs_alpha(entries, path: Path) -> Path:
    """Convergence-style lines: constant against alpha, one line per quantity."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for q in sorted({e[0] for e in entries}):
            pts = sorted((a, c) for qq, a, c in entries if qq == q)
            a, c = zip(*pts)
            ax.plot(a, c, "o-", label=q)
        ax.set_xlabel(r"$\alpha$")
        ax.set_ylabel("constant")
        if entries:
            ax.legend(loc="best")
        return _save(fig, path)


def convergence_lines(h, series: dict, path: Path) -> Path:
    """Log-log error against mesh size, one line per named series."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, vals in series.items():
            ax.loglog(h, vals, "o-", label=name)
        ax.set_xlabel("$h$")
        ax.set_ylabel("deviation")
        ax.legend(loc="best")
        return _save(fig, path)


def render(kind: str, plot_data: dict, plot_dir: Path) -> list[str]:
    """All figures for one experiment; returns the written file names."""
    written = []
    if plot_data.get("outlines"):
        written.append(domain_outline(plot_data["outlines"], plot_dir / "domain.svg"))
    if kind == "stability_sweep":
        written.append(deficit_scatter(plot_data.get("scatter", []), plot_dir / "deficit_vs_M.svg"))
    if "psi" in plot_data:
        r, psi, solid, v0 = plot_data["psi"]
        written.append(psi_curve(r, psi, solid, v0, plot_dir / "psi.svg"))
    if "flux" in plot_data:
        written.append(flux_profile(*plot_data["flux"], plot_dir / "torsion_flux.svg"))
    if plot_data.get("constants"):
        written.append(constants_vs_alpha(plot_data["constants"], plot_dir / "constants.svg"))
    return [p.name for p in written]
