"""Seeded random-instance suites: generators (mean-preserving spreads for
in-cone pairs, independent clouds for generic pairs) and the invariant
battery run by the `suite` CLI command, reported as per-invariant pass
counts and worst residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .duality import duality_gap, solve_dual_backward
from .lp import SimplexSolver
from .measures import DiscreteMeasure, Grid, convex_hull_contains, make_measure, mean
from .orders import OrderSpec, check_convex_order
from .projection import project_backward_convex, project_backward_convex_lp
from .transforms import GridFunction, q2, q2bar

__all__ = [
    "spread_once",
    "random_measure",
    "snap_to_grid",
    "call_function_dominates",
    "SuiteRow",
    "run_suite",
]


def random_measure(rng: np.random.Generator, n: int, dim: int,
                   scale: float = 1.0, offset: float = 0.0) -> DiscreteMeasure:
    pts = rng.normal(size=(n, dim)) * scale + offset
    return make_measure(pts, rng.uniform(0.2, 1.0, size=n))


def spread_once(rng: np.random.Generator, mu: DiscreteMeasure,
                step: float | None = None) -> DiscreteMeasure:
    """Replace one atom by a centered two-point spread (stays above mu in
    convex order); with `step` the offsets snap to a lattice."""
    pts = [p.copy() for p in mu.points]
    wts = list(mu.weights)
    i = int(rng.integers(len(pts)))
    delta = rng.uniform(0.2, 1.0, size=pts[0].shape[0])
    if step is not None:
        delta = np.maximum(np.rint(delta / step), 1.0) * step
    pts.extend([pts[i] + delta, pts[i] - delta])
    wts.extend([wts[i] / 2, wts[i] / 2])
    del pts[i], wts[i]
    return make_measure(pts, wts)


def snap_to_grid(rng: np.random.Generator, grid: Grid, n: int,
                 interior_only: bool = True) -> DiscreteMeasure:
    nodes = grid.nodes()
    pool = grid.interior_indices() if interior_only else np.arange(grid.num_nodes)
    pick = rng.choice(pool, size=min(n, pool.shape[0]), replace=False)
    return make_measure(nodes[pick], rng.uniform(0.2, 1.0, size=len(pick)))


def call_function_dominates(mu: DiscreteMeasure, nu: DiscreteMeasure,
                            tol: float = 1e-9) -> bool:
    """1D convex-order oracle: equal means and call-function dominance at
    every support point."""
    if mu.dim != 1:
        raise ValueError("call-function oracle is one-dimensional")
    if abs(mean(mu)[0] - mean(nu)[0]) > tol:
        return False
    ks = np.concatenate([mu.points.ravel(), nu.points.ravel()])
    xs_mu, w_mu = mu.points.ravel(), mu.weights
    xs_nu, w_nu = nu.points.ravel(), nu.weights
    for k in ks:
        if np.dot(w_mu, np.maximum(xs_mu - k, 0.0)) > \
                np.dot(w_nu, np.maximum(xs_nu - k, 0.0)) + tol:
            return False
    return True


@dataclass
class SuiteRow:
    invariant: str
    instances: int
    passes: int
    worst_residual: float

    def as_csv(self) -> str:
        return f"{self.invariant},{self.instances},{self.passes},{self.worst_residual:.3e}"


def run_suite(seed: int = 42, count: int = 20, max_atoms: int = 8,
              progress=None) -> list[SuiteRow]:
    """Random-instance battery: order-check oracle agreement, projection
    duality gaps, and transform identities."""
    rng = np.random.default_rng(seed)
    solver = SimplexSolver()
    rows: list[SuiteRow] = []

    # order verdicts against the 1D call-function oracle
    agree = 0
    worst = 0.0
    for k in range(count):
        base = random_measure(rng, int(rng.integers(2, max_atoms + 1)), 1)
        if k % 2 == 0:
            nu = base
            for _ in range(int(rng.integers(1, 3))):
                nu = spread_once(rng, nu)
            mu = base
        else:
            mu = base
            nu = random_measure(rng, int(rng.integers(2, max_atoms + 1)), 1,
                                scale=1.3, offset=0.4)
        cert = check_convex_order(mu, nu, solver=solver)
        if cert.holds == call_function_dominates(mu, nu):
            agree += 1
        if not cert.holds:
            worst = max(worst, 0.0 if cert.separation_gap > 1e-9 else 1.0)
    rows.append(SuiteRow("order_check_oracle_agreement", count, agree, worst))

    # projection duality gaps at matched discretization
    gaps_ok = 0
    worst_gap = 0.0
    for k in range(count):
        g = Grid(lo=[-3.0], hi=[3.0], n=(13,))
        mu = snap_to_grid(rng, g, int(rng.integers(2, max_atoms + 1)))
        nu = snap_to_grid(rng, g, int(rng.integers(2, max_atoms + 1)))
        primal = project_backward_convex_lp(mu, nu, g.nodes(), solver=solver)
        dual = solve_dual_backward(mu, nu, OrderSpec("convex"), g, solver=solver)
        gap = duality_gap(primal, dual)
        worst_gap = max(worst_gap, abs(gap))
        if -1e-8 <= gap <= 1e-6 * (1 + abs(primal.cost)):
            gaps_ok += 1
        if progress:
            progress(f"gap[{k}] = {gap:.2e}")
    rows.append(SuiteRow("projection_duality_gap", count, gaps_ok, worst_gap))

    # transform identities
    ident_ok = 0
    worst_resid = 0.0
    for k in range(count):
        n = int(rng.integers(11, 41))
        g = Grid(lo=[-2.0], hi=[2.0], n=(n,))
        f = GridFunction(g, rng.normal(size=n))
        a = q2(f)
        r1 = float(np.max(np.abs(q2(q2bar(a)).values - a.values)))
        b = q2bar(f)
        r2 = float(np.max(np.abs(q2bar(q2(b)).values - b.values)))
        resid = max(r1, r2)
        worst_resid = max(worst_resid, resid)
        if resid <= 1e-12:
            ident_ok += 1
    rows.append(SuiteRow("transform_involutions", count, ident_ok, worst_resid))

    # support monotonicity of backward projections
    hull_ok = 0
    worst_h = 0.0
    for k in range(max(count // 2, 5)):
        mu = random_measure(rng, int(rng.integers(2, 5)), 1, scale=1.5)
        nu = random_measure(rng, int(rng.integers(2, 5)), 1)
        res = project_backward_convex(mu, nu, solver=solver)
        inside = all(convex_hull_contains(nu.points, p, tol=1e-9)
                     for p in res.projection.points)
        if inside:
            hull_ok += 1
        else:
            worst_h = 1.0
    rows.append(SuiteRow("backward_support_in_vertex_hull", max(count // 2, 5),
                         hull_ok, worst_h))
    return rows
