"""Decide whether one discrete measure dominates another in convex,
subharmonic, or trivial stochastic order, and return a machine-checkable
certificate either way.

Convex order is decided by feasibility of a martingale coupling (exact for
finite supports); a violation yields a separating convex function built as
a max of affine pieces from the infeasibility multipliers.  Subharmonic
order on a bounded grid is decided through its dual cone: nu - mu must be
a nonnegative combination of adjoint-Laplacian columns; a violation yields
a separating grid function with nonnegative interior Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, SimplexSolver
from .measures import Coupling, DiscreteMeasure, Grid

__all__ = [
    "OrderSpec",
    "OrderCertificate",
    "ConvexSeparator",
    "check_convex_order",
    "check_subharmonic_order",
    "check_trivial_order",
    "laplacian_adjoint_matrix",
    "drop_vacuous_rows",
]

TRIVIAL_TOL = 1e-12
WITNESS_TOL = 1e-8
SEPARATION_TOL = 1e-9


@dataclass(frozen=True)
class OrderSpec:
    """Which stochastic order, and for the subharmonic one, the grid whose
    interior Laplacian stencil defines the test-function cone."""

    kind: str  # convex | subharmonic | trivial
    grid: Grid | None = None

    def __post_init__(self):
        if self.kind not in ("convex", "subharmonic", "trivial"):
            raise ValueError(f"unknown order kind {self.kind!r}")
        if self.kind == "subharmonic" and self.grid is None:
            raise ValueError("subharmonic order requires a grid")


@dataclass(frozen=True)
class ConvexSeparator:
    """max of affine pieces  phi(y) = max_i ( value_i + <slope_i, y - anchor_i> );
    convex by construction, evaluable anywhere."""

    anchors: np.ndarray  # (k, d)
    values: np.ndarray  # (k,)
    slopes: np.ndarray  # (k, d)

    def __call__(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        scores = self.values[None, :] + np.einsum("kd,nkd->nk", self.slopes,
                                                  p[:, None, :] - self.anchors[None, :, :])
        return np.max(scores, axis=1)


@dataclass(frozen=True)
class OrderCertificate:
    holds: bool
    kind: str
    martingale: Coupling | None = None
    laplacian_mass: np.ndarray | None = None  # over interior nodes of spec.grid
    separator: object | None = None  # ConvexSeparator | GridFunction-values | atom table
    separation_gap: float = 0.0
    spec: OrderSpec | None = None
    mu: DiscreteMeasure | None = None
    nu: DiscreteMeasure | None = None

    def verify(self, tol: float = WITNESS_TOL) -> bool:
        """Re-check the stored witness by pure arithmetic, independent of
        the solver that produced it."""
        if self.holds:
            if self.kind == "convex":
                cpl = self.martingale
                if cpl is None or cpl.marginal_residual() > tol:
                    return False
                bary = cpl.mass @ cpl.target.points
                cond = bary / cpl.source.weights[:, None]
                return bool(np.max(np.abs(cond - cpl.source.points)) <= tol)
            if self.kind == "subharmonic":
                L = laplacian_adjoint_matrix(self.spec.grid)
                w = _node_weight_vector(self.nu, self.spec.grid) - \
                    _node_weight_vector(self.mu, self.spec.grid)
                if np.min(self.laplacian_mass, initial=0.0) < -tol:
                    return False
                return bool(np.max(np.abs(L @ self.laplacian_mass - w)) <= tol)
            return True
        # violation: separator must separate by more than the tolerance
        if self.kind == "convex":
            gap = float(np.dot(self.mu.weights, self.separator(self.mu.points))
                        - np.dot(self.nu.weights, self.separator(self.nu.points)))
            return gap > SEPARATION_TOL
        if self.kind == "subharmonic":
            vals = np.asarray(self.separator)
            grid = self.spec.grid
            from .transforms import GridFunction
            lap = GridFunction(grid, vals).interior_laplacian()
            if np.min(lap, initial=0.0) < -1e-7 * (1 + np.max(np.abs(vals))):
                return False
            mu_v = _node_weight_vector(self.mu, grid)
            nu_v = _node_weight_vector(self.nu, grid)
            return float(vals @ (mu_v - nu_v)) > SEPARATION_TOL
        return self.separation_gap > 0

    def to_json_dict(self) -> dict:
        out: dict = {"holds": bool(self.holds), "kind": self.kind}
        if self.holds and self.kind == "convex" and self.martingale is not None:
            out["witness"] = {"type": "martingale_coupling",
                              "triplets": self.martingale.to_triplets(1e-15)}
        elif self.holds and self.kind == "subharmonic":
            out["witness"] = {"type": "laplacian_mass",
                              "mass": [float(v) for v in self.laplacian_mass]}
        elif not self.holds:
            out["witness"] = {"type": "separating_function",
                              "integral_gap": float(self.separation_gap)}
            if isinstance(self.separator, ConvexSeparator):
                out["witness"]["pieces"] = [
                    {"anchor": [float(v) for v in a],
                     "value": float(b),
                     "slope": [float(v) for v in s]}
                    for a, b, s in zip(self.separator.anchors,
                                       self.separator.values,
                                       self.separator.slopes)]
            elif isinstance(self.separator, dict):
                out["witness"]["table"] = {str(k): float(v)
                                           for k, v in self.separator.items()}
            elif self.separator is not None:
                out["witness"]["grid_values"] = [float(v) for v in np.asarray(self.separator)]
        return out


def drop_vacuous_rows(A: np.ndarray, b: np.ndarray):
    """Remove all-zero rows (vacuous 0 = 0 constraints from degenerate
    geometry); a zero row with nonzero rhs is reported as contradictory."""
    keep = np.any(A != 0.0, axis=1)
    if np.any(np.abs(b[~keep]) > 0):
        raise ValueError("contradictory constraint: zero row with nonzero rhs")
    return A[keep], b[keep], keep


def _martingale_lp(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Feasibility program for a coupling of (mu, nu) whose conditional
    target barycenter equals each source atom."""
    m, n, d = mu.n, nu.n, mu.dim
    rows = m + n + m * d
    A = np.zeros((rows, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    for i in range(m):
        for a in range(d):
            A[m + n + i * d + a, i * n:(i + 1) * n] = nu.points[:, a] - mu.points[i, a]
    b = np.concatenate([mu.weights, nu.weights, np.zeros(m * d)])
    A, b, keep = drop_vacuous_rows(A, b)
    return LinearProgram(c=np.zeros(m * n), A=A, b=b), keep


def check_convex_order(mu: DiscreteMeasure, nu: DiscreteMeasure,
                       solver: SimplexSolver | None = None) -> OrderCertificate:
    """mu <= nu in convex order iff a martingale coupling exists."""
    if mu.dim != nu.dim:
        raise ValueError("measures must share dimension")
    solver = solver or SimplexSolver()
    lp, kept = _martingale_lp(mu, nu)
    sol = solver.solve(lp)
    if sol.status == "optimal":
        plan = sol.x.reshape(mu.n, nu.n)
        cpl = Coupling(plan, mu, nu)
        return OrderCertificate(holds=True, kind="convex", martingale=cpl,
                                spec=OrderSpec("convex"), mu=mu, nu=nu)
    # infeasible: assemble the separating convex function from the Farkas
    # multipliers (u_i on source rows, -phi_j on target rows, slope rows)
    m, n, d = mu.n, nu.n, mu.dim
    y = np.zeros(m + n + m * d)
    y[kept] = sol.dual
    u = y[:m]
    slopes = y[m + n:].reshape(m, d)
    sep = ConvexSeparator(anchors=mu.points.copy(), values=u.copy(), slopes=slopes)
    gap = float(np.dot(mu.weights, sep(mu.points)) - np.dot(nu.weights, sep(nu.points)))
    return OrderCertificate(holds=False, kind="convex", separator=sep,
                            separation_gap=gap, spec=OrderSpec("convex"),
                            mu=mu, nu=nu)


def _node_weight_vector(mu: DiscreteMeasure, grid: Grid, tol: float = 1e-9,
                        require_interior: bool = True) -> np.ndarray:
    """Atom weights accumulated on grid nodes; rejects off-grid or boundary
    atoms."""
    w = np.zeros(grid.num_nodes)
    h = float(np.min(grid.spacing))
    for p, wt in zip(mu.points, mu.weights):
        idx, dist = grid.nearest_node(p)
        if dist > tol * max(1.0, h):
            raise ValueError(f"atom {p.tolist()} is off-grid (distance {dist:.3e})")
        if require_interior and not grid.is_interior(idx):
            raise ValueError(f"atom {p.tolist()} lies on the grid boundary")
        w[idx] += wt
    return w


def laplacian_adjoint_matrix(grid: Grid) -> np.ndarray:
    """Matrix of shape (num_nodes, num_interior) whose q-th column is the
    adjoint-Laplacian image of a unit mass at interior node q: the
    transpose of the interior-row Laplacian stencil (scaled by 1/h^2)."""
    interior = grid.interior_indices()
    h = grid.spacing
    K = grid.num_nodes
    A = np.zeros((K, interior.shape[0]))
    for col, q in enumerate(interior):
        mi = grid.multi_index(q)
        diag = 0.0
        for a in range(grid.dim):
            ha2 = h[a] ** 2
            diag -= 2.0 / ha2
            for step in (-1, 1):
                nb = list(mi)
                nb[a] += step
                A[grid.flat_index(nb), col] += 1.0 / ha2
        A[q, col] += diag
    return A


def check_subharmonic_order(mu: DiscreteMeasure, nu: DiscreteMeasure,
                            spec: OrderSpec,
                            solver: SimplexSolver | None = None) -> OrderCertificate:
    """mu <= nu in the grid subharmonic order iff nu - mu lies in the
    adjoint-Laplacian cone of the grid interior."""
    if spec.kind != "subharmonic":
        raise ValueError("spec must be subharmonic")
    grid = spec.grid
    if mu.dim != nu.dim or mu.dim != grid.dim:
        raise ValueError("measures and grid must share dimension")
    solver = solver or SimplexSolver()
    w = _node_weight_vector(nu, grid) - _node_weight_vector(mu, grid)
    L = laplacian_adjoint_matrix(grid)
    keep = np.any(L != 0.0, axis=1) | (w != 0.0)
    # every node row is kept in practice; guard against degenerate grids
    lp = LinearProgram(c=np.zeros(L.shape[1]), A=L[keep], b=w[keep])
    sol = solver.solve(lp)
    if sol.status == "optimal":
        return OrderCertificate(holds=True, kind="subharmonic",
                                laplacian_mass=sol.x, spec=spec, mu=mu, nu=nu)
    # Farkas multipliers psi satisfy (L psi)_q <= 0 and <psi, nu-mu> > 0;
    # the separating subharmonic function is -psi
    psi = np.zeros(grid.num_nodes)
    psi[keep] = sol.dual
    sep = -psi
    norm = np.max(np.abs(sep))
    if norm > 0:
        sep = sep / norm
    mu_v = _node_weight_vector(mu, grid)
    nu_v = _node_weight_vector(nu, grid)
    gap = float(sep @ (mu_v - nu_v))
    return OrderCertificate(holds=False, kind="subharmonic", separator=sep,
                            separation_gap=gap, spec=spec, mu=mu, nu=nu)


def check_trivial_order(mu: DiscreteMeasure, nu: DiscreteMeasure,
                        tol: float = TRIVIAL_TOL) -> OrderCertificate:
    """Trivial order holds iff the measures coincide as atom-weight sets."""
    diff: dict[tuple, float] = {}
    for p, w in zip(mu.points, mu.weights):
        diff[tuple(p)] = diff.get(tuple(p), 0.0) + w
    for p, w in zip(nu.points, nu.weights):
        diff[tuple(p)] = diff.get(tuple(p), 0.0) - w
    gap = sum(abs(v) for v in diff.values())
    if gap <= tol:
        return OrderCertificate(holds=True, kind="trivial", mu=mu, nu=nu,
                                spec=OrderSpec("trivial"))
    table = {p: (1.0 if v > 0 else -1.0) for p, v in diff.items() if abs(v) > tol / 10}
    return OrderCertificate(holds=False, kind="trivial", separator=table,
                            separation_gap=float(gap), mu=mu, nu=nu,
                            spec=OrderSpec("trivial"))
