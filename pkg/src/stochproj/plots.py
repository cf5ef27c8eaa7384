"""Figure rendering for the report path: the suite writes PNG charts next
to its CSV, and the geodesic demo draws the measures, the optimal
transport rays, and the midpoint hull.  Uses the Agg backend so the CLI
never needs a display."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_suite_report", "render_geodesic_demo", "render_refinement"]


def render_suite_report(rows, out_dir: str) -> list[str]:
    """Bar chart of pass fractions and a log-scale residual chart."""
    os.makedirs(out_dir, exist_ok=True)
    names = [r.invariant for r in rows]
    fracs = [r.passes / r.instances if r.instances else 1.0 for r in rows]
    resids = [max(r.worst_residual, 1e-17) for r in rows]
    paths = []

    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.barh(names, fracs, color="#33689e")
    ax.set_xlim(0, 1.02)
    ax.set_xlabel("pass fraction")
    ax.set_title("suite invariants")
    fig.tight_layout()
    p = os.path.join(out_dir, "suite_passes.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.barh(names, resids, color="#b0503c")
    ax.set_xscale("log")
    ax.set_xlabel("worst residual")
    ax.set_title("suite residuals")
    fig.tight_layout()
    p = os.path.join(out_dir, "suite_residuals.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)
    return paths


def render_geodesic_demo(mu, nu, coupling, midpoint, hull_ok: dict,
                         out_dir: str) -> str:
    """Scatter of the two measures, optimal transport rays, interpolation
    midpoints, and the midpoint support hull."""
    os.makedirs(out_dir, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.scatter(*mu.points.T, s=140 * mu.weights + 40, c="#c23b22", zorder=4,
               label="projected measure")
    ax.scatter(*nu.points.T, s=140 * nu.weights + 40, c="#2a6fbb", zorder=4,
               label="cone vertex")
    for i in range(coupling.shape[0]):
        for j in range(coupling.shape[1]):
            if coupling.mass[i, j] > 1e-12:
                ax.plot([mu.points[i, 0], nu.points[j, 0]],
                        [mu.points[i, 1], nu.points[j, 1]],
                        "r--", lw=1.0, alpha=0.6, zorder=2)
    ax.scatter(*midpoint.points.T, s=90, facecolors="none", edgecolors="#444444",
               zorder=5, label="interpolation midpoint")
    pts = midpoint.points
    if pts.shape[0] >= 3:
        hull = _hull_vertices(pts)
        ax.fill(hull[:, 0], hull[:, 1], color="#888888", alpha=0.2, zorder=1,
                label="midpoint hull")
    for p, inside in hull_ok.items():
        if not inside:
            ax.annotate("escapes hull", xy=p, xytext=(p[0] + 0.15, p[1] + 0.3),
                        fontsize=9, arrowprops=dict(arrowstyle="->", lw=0.8))
    ax.legend(fontsize=8, loc="upper left")
    ax.set_aspect("equal")
    ax.set_title("midpoint of the optimal coupling leaves the order cone")
    fig.tight_layout()
    p = os.path.join(out_dir, "geodesic_demo.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    return p


def _hull_vertices(pts: np.ndarray) -> np.ndarray:
    """2D convex hull by the monotone chain (small point sets)."""
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def turn(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(points):
        out = []
        for p in points:
            while len(out) >= 2 and turn(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def render_refinement(h_values, errors, out_dir: str,
                      name: str = "refinement.png") -> str:
    """Log-log error-vs-spacing chart for backward/forward agreement."""
    os.makedirs(out_dir, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, errs in errors.items():
        ax.loglog(h_values, np.maximum(errs, 1e-16), "o-", label=label)
    ax.loglog(h_values, np.asarray(h_values) ** 2, "k:", label="slope 2")
    ax.set_xlabel("grid spacing")
    ax.set_ylabel("cost difference")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, name)
    fig.savefig(p, dpi=130)
    plt.close(fig)
    return p
