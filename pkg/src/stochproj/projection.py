"""Backward and forward Wasserstein projections (quadratic cost) onto the
convex-order and subharmonic-order cones of discrete measures.

Backward convex projection has two routes:

* a grid-free barycentric route (Frank-Wolfe over the transport polytope,
  each linearized step an exact transport LP), minimizing
  sum_i mu_i |x_i - barycenter_i(pi)|^2 over couplings pi of (mu, nu);
* a restricted-support LP route (transport to candidate atoms composed
  with a martingale coupling to the cone vertex), which is exact on its
  support and serves as the brute-force oracle for the first route.

Forward convex and both subharmonic projections are restricted-support
LPs.  Every LP solve also yields dual multipliers from which a potential
certificate is assembled; the potentials are handed to the duality module
untouched, so primal and dual values of a matched instance come from one
program and their gap is a genuine certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgram, LPSolution, SimplexSolver
from .measures import (
    Coupling,
    DiscreteMeasure,
    Grid,
    _sqdist_matrix,
    make_measure,
    mean,
    w2_squared,
)
from .orders import (
    OrderCertificate,
    OrderSpec,
    check_convex_order,
    check_subharmonic_order,
    drop_vacuous_rows,
    laplacian_adjoint_matrix,
)
from .transforms import GridFunction

__all__ = [
    "ProjectionProblem",
    "ProjectionResult",
    "ConeEmptyError",
    "project_backward_convex",
    "project_backward_convex_lp",
    "project_forward_convex",
    "project_backward_subharmonic",
    "project_forward_subharmonic",
    "uniqueness_probe",
    "default_forward_grid",
]

BARYCENTER_MERGE_TOL = 1e-9
FW_REL_TOL = 1e-10
FW_MAX_ITER = 10_000


class ConeEmptyError(RuntimeError):
    """The candidate support carries no measure inside the order cone."""


@dataclass(frozen=True)
class ProjectionProblem:
    """Declarative description of one projection instance."""

    direction: str  # backward | forward
    order: OrderSpec
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    candidate_support: object = None  # Grid | point array | None
    dilation: float = 1.5

    def __post_init__(self):
        if self.direction not in ("backward", "forward"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.order.kind == "subharmonic" and self.order.grid is None:
            raise ValueError("subharmonic projection requires a grid")
        if self.direction == "forward" and self.order.kind == "convex" \
                and self.candidate_support is None:
            object.__setattr__(self, "candidate_support",
                               default_forward_grid(self.mu, self.nu, self.dilation))


@dataclass(frozen=True)
class ProjectionResult:
    projection: DiscreteMeasure
    coupling: Coupling
    cost: float
    dual_potential: object  # GridFunction | PlanePotential
    dual_value: float
    duality_gap: float
    order_certificate: OrderCertificate
    direction: str
    order_kind: str
    multipliers: dict = field(default_factory=dict, repr=False)
    iterations: int = 0

    def validate(self, tol: float = 1e-9) -> None:
        if not self.order_certificate.holds:
            raise AssertionError("projection is not in the order cone")
        if abs(self.cost - self.coupling.transport_cost()) > tol * (1 + abs(self.cost)):
            raise AssertionError("cost does not match its coupling")
        if self.duality_gap < -1e-8:
            raise AssertionError(f"negative duality gap {self.duality_gap:.3e}")


@dataclass(frozen=True)
class PlanePotential:
    """Convex potential represented as a max of affine pieces
    phi(z) = max_k ( values_k + <slopes_k, z - anchors_k> )."""

    anchors: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    def __call__(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        scores = self.values[None, :] + np.einsum(
            "kd,nkd->nk", self.slopes, p[:, None, :] - self.anchors[None, :, :])
        return np.max(scores, axis=1)

    def sample(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self(grid.nodes()))


def default_forward_grid(mu: DiscreteMeasure, nu: DiscreteMeasure,
                         dilate: float = 1.5, nodes_per_axis: int = 33) -> Grid:
    """Bounding box of both supports, dilated about its center."""
    pts = np.vstack([mu.points, nu.points])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = (lo + hi) / 2
    half = np.maximum((hi - lo) / 2, 1e-6) * dilate
    return Grid(lo=center - half, hi=center + half,
                n=tuple([nodes_per_axis] * pts.shape[1]))


def _resolve_candidates(candidate_support) -> np.ndarray:
    if candidate_support is None:
        raise ValueError("candidate support required")
    if isinstance(candidate_support, Grid):
        return candidate_support.nodes()
    pts = np.atleast_2d(np.asarray(candidate_support, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("candidate support is empty")
    return pts


def _merge_atoms(points: np.ndarray, weights: np.ndarray,
                 tol: float = BARYCENTER_MERGE_TOL) -> DiscreteMeasure:
    return make_measure(list(points), list(weights), merge_tol=tol)


# ---------------------------------------------------------------------------
# two-stage convex-order programs
# ---------------------------------------------------------------------------

def _backward_convex_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, Z: np.ndarray):
    """min <cost, pi1> over pi1 in Pi(mu, mubar), pi2 a martingale coupling
    of (mubar, nu) with conditional barycenter at each candidate atom.

    Rows: mu marginals (m) | candidate balance (K) | barycenter rows (K*d)
    | nu marginals (n).  Columns: pi1 (m*K) then pi2 (K*n).
    """
    m, n, d = mu.n, nu.n, mu.dim
    K = Z.shape[0]
    n_p1, n_p2 = m * K, K * n
    rows = m + K + K * d + n
    A = np.zeros((rows, n_p1 + n_p2))
    for i in range(m):
        A[i, i * K:(i + 1) * K] = 1.0
    for k in range(K):
        A[m + k, k:n_p1:K] = 1.0
        A[m + k, n_p1 + k * n: n_p1 + (k + 1) * n] = -1.0
        for a in range(d):
            A[m + K + k * d + a, n_p1 + k * n: n_p1 + (k + 1) * n] = \
                nu.points[:, a] - Z[k, a]
    for j in range(n):
        A[m + K + K * d + j, n_p1 + j::n] = 1.0
    b = np.concatenate([mu.weights, np.zeros(K + K * d), nu.weights])
    cost = _sqdist_matrix(mu.points, Z).ravel()
    c = np.concatenate([cost, np.zeros(n_p2)])
    A, b, keep = drop_vacuous_rows(A, b)
    return LinearProgram(c=c, A=A, b=b), keep


def _backward_convex_duals(sol: LPSolution, kept: np.ndarray, mu, nu, Z):
    """(u at mu atoms, psi at candidates, slopes, phi at nu atoms)."""
    m, n, d = mu.n, nu.n, mu.dim
    K = Z.shape[0]
    y = np.zeros(kept.shape[0])
    y[kept] = sol.dual
    u = y[:m]
    psi = -y[m:m + K]
    slopes = y[m + K:m + K + K * d].reshape(K, d)
    phi_nu = -y[m + K + K * d:]
    return u, psi, slopes, phi_nu


def _forward_convex_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, Z: np.ndarray):
    """min <cost, pi1> over pi2 a martingale coupling of (mu, eta) and
    pi1 in Pi(eta, nu), eta supported on the candidates.

    Rows: mu marginals (m) | barycenter rows (m*d) | candidate balance (K)
    | nu marginals (n).  Columns: pi2 (m*K) then pi1 (K*n).
    """
    m, n, d = mu.n, nu.n, mu.dim
    K = Z.shape[0]
    n_p2, n_p1 = m * K, K * n
    rows = m + m * d + K + n
    A = np.zeros((rows, n_p2 + n_p1))
    for i in range(m):
        A[i, i * K:(i + 1) * K] = 1.0
        for a in range(d):
            A[m + i * d + a, i * K:(i + 1) * K] = Z[:, a] - mu.points[i, a]
    for k in range(K):
        A[m + m * d + k, k:n_p2:K] = 1.0
        A[m + m * d + k, n_p2 + k * n: n_p2 + (k + 1) * n] = -1.0
    for j in range(n):
        A[m + m * d + K + j, n_p2 + j::n] = 1.0
    b = np.concatenate([mu.weights, np.zeros(m * d + K), nu.weights])
    cost = _sqdist_matrix(Z, nu.points).ravel()
    c = np.concatenate([np.zeros(n_p2), cost])
    A, b, keep = drop_vacuous_rows(A, b)
    return LinearProgram(c=c, A=A, b=b), keep


def _forward_convex_duals(sol: LPSolution, kept: np.ndarray, mu, nu, Z):
    """(u at mu atoms, slopes at mu atoms, psi at candidates, v at nu atoms)."""
    m, n, d = mu.n, nu.n, mu.dim
    K = Z.shape[0]
    y = np.zeros(kept.shape[0])
    y[kept] = sol.dual
    u = y[:m]
    slopes = y[m:m + m * d].reshape(m, d)
    psi = -y[m + m * d:m + m * d + K]
    v = -y[m + m * d + K:]
    return u, slopes, psi, v


# ---------------------------------------------------------------------------
# subharmonic-order programs
# ---------------------------------------------------------------------------

def _nodal_weights(measure: DiscreteMeasure, grid: Grid, what: str,
                   require_interior: bool) -> np.ndarray:
    w = np.zeros(grid.num_nodes)
    h = float(np.min(grid.spacing))
    for p, wt in zip(measure.points, measure.weights):
        idx, dist = grid.nearest_node(p)
        if dist > 1e-9 * max(1.0, h):
            raise ValueError(f"{what} atom {p.tolist()} is off-grid")
        if require_interior and not grid.is_interior(idx):
            raise ValueError(f"{what} atom {p.tolist()} lies on the grid boundary")
        w[idx] += wt
    return w


def _backward_subharmonic_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, grid: Grid):
    """min transport cost from mu to a grid measure mubar with
    nu - mubar in the adjoint-Laplacian cone.

    Rows: mu marginals (m) | node balance (K_all).  Columns: pi1 over
    (mu atoms x interior nodes) then occupation mass over interior nodes.
    """
    interior = grid.interior_indices()
    KI = interior.shape[0]
    Kall = grid.num_nodes
    nodes = grid.nodes()
    m = mu.n
    L = laplacian_adjoint_matrix(grid)
    nu_nodal = _nodal_weights(nu, grid, "target", require_interior=True)
    A = np.zeros((m + Kall, m * KI + KI))
    for i in range(m):
        A[i, i * KI:(i + 1) * KI] = 1.0
    for col, q in enumerate(interior):
        A[m + q, col::KI][:m] = 1.0
    A[m:, m * KI:] = L
    b = np.concatenate([mu.weights, nu_nodal])
    cost = _sqdist_matrix(mu.points, nodes[interior]).ravel()
    c = np.concatenate([cost, np.zeros(KI)])
    # nodes outside every stencil (2D corners) yield vacuous 0 = 0 rows
    keep = np.any(A != 0.0, axis=1)
    if np.any(b[~keep] != 0.0):
        raise ValueError("mass on a node outside every Laplacian stencil")
    return LinearProgram(c=c, A=A[keep], b=b[keep]), interior, keep


def _forward_subharmonic_full_lp(mu: DiscreteMeasure, nu: DiscreteMeasure,
                                 grid: Grid):
    """Closure variant of the forward program: transport columns at every
    grid node, so the dual pair constraint holds on the whole closed grid
    (the transform's supremum runs over the closure).  Used for dual
    certificates; the primal cone proper keeps its support interior."""
    Kall = grid.num_nodes
    nodes = grid.nodes()
    n = nu.n
    L = laplacian_adjoint_matrix(grid)
    KI = L.shape[1]
    mu_nodal = _nodal_weights(mu, grid, "source", require_interior=True)
    A = np.zeros((Kall + n, Kall * n + KI))
    for g in range(Kall):
        A[g, g * n:(g + 1) * n] = 1.0
    A[:Kall, Kall * n:] = -L
    for j in range(n):
        A[Kall + j, j:Kall * n:n] = 1.0
    b = np.concatenate([mu_nodal, nu.weights])
    cost = _sqdist_matrix(nodes, nu.points).ravel()
    c = np.concatenate([cost, np.zeros(KI)])
    A, b, keep = drop_vacuous_rows(A, b)
    return LinearProgram(c=c, A=A, b=b), keep


def _forward_subharmonic_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, grid: Grid):
    """min transport cost from a grid measure eta to nu with
    eta - mu in the adjoint-Laplacian cone.

    Rows: node balance (K_all) | nu marginals (n).  Columns: pi1 over
    (interior nodes x nu atoms) then occupation mass over interior nodes.
    """
    interior = grid.interior_indices()
    KI = interior.shape[0]
    Kall = grid.num_nodes
    nodes = grid.nodes()
    n = nu.n
    L = laplacian_adjoint_matrix(grid)
    mu_nodal = _nodal_weights(mu, grid, "source", require_interior=True)
    A = np.zeros((Kall + n, KI * n + KI))
    for col, q in enumerate(interior):
        A[q, col * n:(col + 1) * n] = 1.0
    A[:Kall, KI * n:] = -L
    for j in range(n):
        A[Kall + j, j:KI * n:n] = 1.0
    b = np.concatenate([mu_nodal, nu.weights])
    cost = _sqdist_matrix(nodes[interior], nu.points).ravel()
    c = np.concatenate([cost, np.zeros(KI)])
    keep = np.any(A != 0.0, axis=1)
    if np.any(b[~keep] != 0.0):
        raise ValueError("mass on a node outside every Laplacian stencil")
    return LinearProgram(c=c, A=A[keep], b=b[keep]), interior, keep


def _patch_stencil_free_nodes(grid: Grid, values: np.ndarray,
                              constrained: np.ndarray) -> np.ndarray:
    """Nodes outside every interior stencil (2D corners) carry no multiplier;
    fill them with the mean of their axis neighbors so downstream transforms
    see a smooth extension."""
    out = values.copy()
    for flat in np.nonzero(~constrained)[0]:
        mi = grid.multi_index(flat)
        acc, cnt = 0.0, 0
        for a in range(grid.dim):
            for step in (-1, 1):
                nb = list(mi)
                nb[a] += step
                if 0 <= nb[a] < grid.n[a]:
                    nb_flat = grid.flat_index(nb)
                    if constrained[nb_flat]:
                        acc += out[nb_flat]
                        cnt += 1
        out[flat] = acc / cnt if cnt else 0.0
    return out


# ---------------------------------------------------------------------------
# certificate assembly
# ---------------------------------------------------------------------------

def _convex_plane_potential(anchors, values, slopes) -> PlanePotential:
    return PlanePotential(anchors=np.atleast_2d(np.asarray(anchors, float)),
                          values=np.asarray(values, float),
                          slopes=np.atleast_2d(np.asarray(slopes, float)))


def _backward_dual_value(phi: PlanePotential, mu, nu, Z) -> float:
    """sum_i mu_i min_k (phi(z_k) + |x_i - z_k|^2) - integral phi d nu."""
    phiZ = phi(Z)
    q2_at_mu = np.min(phiZ[None, :] + _sqdist_matrix(mu.points, Z), axis=1)
    return float(np.dot(mu.weights, q2_at_mu) - np.dot(nu.weights, phi(nu.points)))


def _forward_dual_value(phi: PlanePotential, mu, nu, Z) -> float:
    """integral phi d mu - sum_j nu_j max_k (phi(z_k) - |z_k - y_j|^2)."""
    phiZ = phi(Z)
    q2bar_at_nu = np.max(phiZ[:, None] - _sqdist_matrix(Z, nu.points), axis=0)
    return float(np.dot(mu.weights, phi(mu.points)) - np.dot(nu.weights, q2bar_at_nu))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def project_backward_convex(mu: DiscreteMeasure, nu: DiscreteMeasure,
                            rel_tol: float = FW_REL_TOL,
                            max_iter: int = FW_MAX_ITER,
                            solver: SimplexSolver | None = None) -> ProjectionResult:
    """Grid-free backward convex-order projection: the projection is the
    conditional-barycenter image of an optimal coupling of (mu, nu).

    When mu already lies in the cone the projection is mu itself with cost
    zero.  Otherwise pairwise Frank-Wolfe on the barycentric objective
    (each linearized step an exact transport LP, away steps over the
    collected vertex dictionary) runs until its gap certifies optimality,
    with support re-optimization rounds (the restricted two-stage LP on
    the current barycenters) to escape stalls; the final potential and
    duality gap come from one exact LP solve at the converged support.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures must share dimension")
    solver = solver or SimplexSolver()
    membership = check_convex_order(mu, nu, solver=solver)
    if membership.holds:
        return _identity_backward_result(mu, nu, membership, solver)
    Y = nu.points
    X = mu.points
    w = mu.weights
    w_inv = 1.0 / w

    def barycenters(p):
        return (p @ Y) * w_inv[:, None]

    def objective(bary):
        return float(np.dot(w, np.sum((X - bary) ** 2, axis=1)))

    pi = _monotone_initial_coupling(mu, nu)
    vertices = [pi.copy()]
    weights = [1.0]
    bary = barycenters(pi)
    fval = objective(bary)
    fw_gap = np.inf
    iterations = 0
    stalled = 0
    while iterations < max_iter:
        iterations += 1
        grad_cost = (2.0 * (bary - X)) @ Y.T  # derivative wrt pi entries
        _, step = w2_squared(mu, nu, solver=solver, cost=grad_cost)
        s = step.mass
        fw_gap = float(np.sum(grad_cost * (pi - s)))
        scale = 1.0 + abs(fval)
        if fw_gap <= rel_tol * scale:
            break
        # pairwise step: move mass from the worst active vertex toward s
        away = int(np.argmax([float(np.sum(grad_cost * v)) for v in vertices]))
        direction = s - vertices[away]
        t_max = weights[away]
        if stalled >= 6:
            # pairwise steps are churning; take a plain step toward s,
            # which contracts the certified gap at the standard rate
            direction = s - pi
            t_max = 1.0
        db = (direction @ Y) * w_inv[:, None]
        num = float(np.dot(w, np.sum((bary - X) * db, axis=1)))
        den = float(np.dot(w, np.sum(db * db, axis=1)))
        t = min(t_max, max(0.0, -num / den)) if den > 0 else 0.0
        progressed = False
        if t > 0:
            pi = pi + t * direction
            if t_max == 1.0 and direction is not None and stalled >= 6:
                vertices, weights = [pi.copy()], [1.0]
            else:
                weights[away] -= t
                _absorb_vertex(vertices, weights, s, t)
                if weights[away] <= 1e-15:
                    del vertices[away], weights[away]
            bary = barycenters(pi)
            fnew = objective(bary)
            progressed = fval - fnew > rel_tol * scale
            fval = min(fval, fnew)
        if not progressed:
            stalled += 1
        else:
            stalled = 0
        if stalled in (3, 4, 5):
            # support re-optimization: restrict to the current barycenters,
            # re-solve exactly, recompose the coupling
            pi2, bary2, f2, ok = _support_polish(mu, nu, bary, solver)
            if ok and f2 < fval - rel_tol * scale:
                pi, bary, fval = pi2, bary2, f2
                vertices, weights = [pi.copy()], [1.0]
                stalled = 0
        if stalled >= 12:
            break  # relative decrease below tolerance on every escape route

    # one exact solve at the converged support yields projection, coupling,
    # and the multiplier potential in a single program
    result = _finish_backward_restricted(mu, nu, np.unique(bary, axis=0), solver)
    return ProjectionResult(projection=result.projection, coupling=result.coupling,
                            cost=min(result.cost, fval),
                            dual_potential=result.dual_potential,
                            dual_value=result.dual_value,
                            duality_gap=result.duality_gap,
                            order_certificate=result.order_certificate,
                            direction="backward", order_kind="convex",
                            multipliers={**result.multipliers, "fw_gap": fw_gap},
                            iterations=iterations)


def _absorb_vertex(vertices: list, weights: list, s: np.ndarray, t: float) -> None:
    for k, v in enumerate(vertices):
        if np.array_equal(v, s):
            weights[k] += t
            return
    vertices.append(s.copy())
    weights.append(t)


def _identity_backward_result(mu: DiscreteMeasure, nu: DiscreteMeasure,
                              membership: OrderCertificate,
                              solver: SimplexSolver) -> ProjectionResult:
    plan = np.diag(mu.weights)
    coupling = Coupling(plan, mu, mu)
    anchor = mean(nu)[None, :]
    phi = _convex_plane_potential(anchor, np.zeros(1), np.zeros((1, mu.dim)))
    Zeval = np.vstack([mu.points, nu.points])
    dual_value = _backward_dual_value(phi, mu, nu, Zeval)
    return ProjectionResult(projection=mu, coupling=coupling, cost=0.0,
                            dual_potential=phi, dual_value=dual_value,
                            duality_gap=-dual_value,
                            order_certificate=membership, direction="backward",
                            order_kind="convex", multipliers={"fw_gap": 0.0},
                            iterations=0)


def _support_polish(mu: DiscreteMeasure, nu: DiscreteMeasure, bary: np.ndarray,
                    solver: SimplexSolver):
    """One exact restricted solve on the current barycenter support; returns
    the recomposed coupling of (mu, nu), its barycenters, and the value."""
    Z = np.unique(np.round(bary / 1e-12) * 1e-12, axis=0)
    lp, kept = _backward_convex_lp(mu, nu, Z)
    sol = solver.solve(lp)
    if sol.status != "optimal":
        return None, None, np.inf, False
    m, n, K = mu.n, nu.n, Z.shape[0]
    pi1 = sol.x[:m * K].reshape(m, K)
    pi2 = sol.x[m * K:].reshape(K, n)
    mass = pi1.sum(axis=0)
    cond = np.zeros_like(pi2)
    pos = mass > 1e-15
    cond[pos] = pi2[pos] / mass[pos, None]
    pi = pi1 @ cond
    bary2 = (pi1 @ Z) / mu.weights[:, None]
    f2 = float(np.dot(mu.weights, np.sum((mu.points - bary2) ** 2, axis=1)))
    return pi, bary2, f2, True


def _monotone_initial_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """North-west-corner plan along a 1D sort (quantile coupling in 1D,
    heuristic start in higher dimension)."""
    key_mu = np.lexsort(mu.points.T[::-1])
    key_nu = np.lexsort(nu.points.T[::-1])
    pi = np.zeros((mu.n, nu.n))
    wi = mu.weights[key_mu].copy()
    wj = nu.weights[key_nu].copy()
    i = j = 0
    while i < mu.n and j < nu.n:
        t = min(wi[i], wj[j])
        pi[key_mu[i], key_nu[j]] = t
        wi[i] -= t
        wj[j] -= t
        if wi[i] <= 1e-15:
            i += 1
        if j < nu.n and wj[j] <= 1e-15:
            j += 1
    return pi


def project_backward_convex_lp(mu: DiscreteMeasure, nu: DiscreteMeasure,
                               candidate_support,
                               solver: SimplexSolver | None = None,
                               tie_break: str | None = None) -> ProjectionResult:
    """Backward convex-order projection restricted to an explicit candidate
    support; exact LP optimum over that support (upper bound for the
    grid-free route, equal once the support contains the barycenters).

    Degenerate optimal faces return whichever vertex the pivot rule
    reaches; `tie_break="second_moment"` re-solves over the optimal face
    minimizing the projection's second moment, a formulation-independent
    representative used when two value-equal programs must agree atomwise.
    """
    solver = solver or SimplexSolver()
    Z = _resolve_candidates(candidate_support)
    if Z.shape[1] != mu.dim:
        raise ValueError("candidate support dimension mismatch")
    return _finish_backward_restricted(mu, nu, Z, solver, tie_break=tie_break)


def _second_moment_resolve(lp: LinearProgram, sol: LPSolution,
                           moment_cost: np.ndarray,
                           solver: SimplexSolver) -> LPSolution:
    """Re-solve over the (tolerance-thickened) optimal face, minimizing the
    given secondary cost; returns the original solution on failure."""
    opt = sol.primal_objective
    slack_tol = 1e-9 * (1.0 + abs(opt))
    A2 = np.zeros((lp.num_rows + 1, lp.num_vars + 1))
    A2[:lp.num_rows, :lp.num_vars] = lp.A
    A2[lp.num_rows, :lp.num_vars] = lp.c
    A2[lp.num_rows, lp.num_vars] = 1.0
    b2 = np.concatenate([lp.b, [opt + slack_tol]])
    lp2 = LinearProgram(c=np.concatenate([moment_cost, [0.0]]), A=A2, b=b2)
    sol2 = solver.solve(lp2)
    if sol2.status != "optimal":
        return sol
    return LPSolution(status="optimal", x=sol2.x[:lp.num_vars], dual=sol.dual,
                      primal_objective=float(lp.c @ sol2.x[:lp.num_vars]),
                      dual_objective=sol.dual_objective,
                      iterations=sol.iterations + sol2.iterations)


def _finish_backward_restricted(mu: DiscreteMeasure, nu: DiscreteMeasure,
                                Z: np.ndarray, solver: SimplexSolver,
                                tie_break: str | None = None) -> ProjectionResult:
    lp, kept = _backward_convex_lp(mu, nu, Z)
    sol = solver.solve(lp)
    if sol.status == "infeasible":
        raise ConeEmptyError("no candidate-supported measure is dominated by the vertex")
    if sol.status != "optimal":
        raise RuntimeError(f"projection LP returned {sol.status}")
    if tie_break == "second_moment":
        m, K = mu.n, Z.shape[0]
        moment = np.zeros(lp.num_vars)
        moment[:m * K] = np.tile(np.sum(Z * Z, axis=1), m)
        sol = _second_moment_resolve(lp, sol, moment, solver)
    m, n = mu.n, nu.n
    K = Z.shape[0]
    pi1 = sol.x[:m * K].reshape(m, K)
    mass = pi1.sum(axis=0)
    keep = mass > 1e-13
    projection = _merge_atoms(Z[keep], mass[keep])
    plan = _regroup_columns(pi1[:, keep], Z[keep], projection)
    coupling = Coupling(plan, mu, projection)

    u, psi, slopes, phi_nu = _backward_convex_duals(sol, kept, mu, nu, Z)
    phi = _convex_plane_potential(Z, psi, slopes)
    dual_value = _backward_dual_value(phi, mu, nu, Z)
    cost_val = float(sol.primal_objective)
    cert = check_convex_order(projection, nu, solver=solver)
    return ProjectionResult(projection=projection, coupling=coupling, cost=cost_val,
                            dual_potential=phi, dual_value=dual_value,
                            duality_gap=cost_val - dual_value,
                            order_certificate=cert, direction="backward",
                            order_kind="convex",
                            multipliers={"u": u, "psi": psi, "slopes": slopes,
                                         "phi_nu": phi_nu, "candidates": Z},
                            iterations=sol.iterations)


def _regroup_columns(pi, pts, merged: DiscreteMeasure) -> np.ndarray:
    """Re-aggregate coupling columns after duplicate atoms were merged."""
    plan = np.zeros((pi.shape[0], merged.n))
    for col in range(pts.shape[0]):
        k = int(np.argmin(np.sum((merged.points - pts[col]) ** 2, axis=1)))
        plan[:, k] += pi[:, col]
    return plan


def project_forward_convex(nu: DiscreteMeasure, mu: DiscreteMeasure,
                           candidate_support=None,
                           solver: SimplexSolver | None = None,
                           dilation: float = 1.5) -> ProjectionResult:
    """Forward convex-order projection of nu onto the cone of measures
    dominating mu, restricted to a candidate support (default: dilated
    bounding-box grid, since the forward support has no a-priori hull
    bound)."""
    solver = solver or SimplexSolver()
    if candidate_support is None:
        candidate_support = default_forward_grid(mu, nu, dilation)
    Z = _resolve_candidates(candidate_support)
    if Z.shape[1] != mu.dim:
        raise ValueError("candidate support dimension mismatch")
    lp, kept = _forward_convex_lp(mu, nu, Z)
    sol = solver.solve(lp)
    if sol.status == "infeasible":
        raise ConeEmptyError("no candidate-supported measure dominates the vertex")
    if sol.status != "optimal":
        raise RuntimeError(f"projection LP returned {sol.status}")
    m, n = mu.n, nu.n
    K = Z.shape[0]
    pi2 = sol.x[:m * K].reshape(m, K)
    pi1 = sol.x[m * K:].reshape(K, n)
    mass = pi2.sum(axis=0)
    keep = mass > 1e-13
    projection = _merge_atoms(Z[keep], mass[keep])
    plan = _regroup_columns(pi1[keep].T, Z[keep], projection).T
    coupling = Coupling(plan, projection, nu)

    u, slopes, psi, v = _forward_convex_duals(sol, kept, mu, nu, Z)
    phi = _convex_plane_potential(mu.points, u, slopes)
    dual_value = _forward_dual_value(phi, mu, nu, Z)
    cost_val = float(sol.primal_objective)
    cert = check_convex_order(mu, projection, solver=solver)
    return ProjectionResult(projection=projection, coupling=coupling, cost=cost_val,
                            dual_potential=phi, dual_value=dual_value,
                            duality_gap=cost_val - dual_value,
                            order_certificate=cert, direction="forward",
                            order_kind="convex",
                            multipliers={"u": u, "psi": psi, "slopes": slopes,
                                         "v": v, "candidates": Z},
                            iterations=sol.iterations)


def project_backward_subharmonic(mu: DiscreteMeasure, nu: DiscreteMeasure,
                                 spec: OrderSpec,
                                 solver: SimplexSolver | None = None,
                                 tie_break: str | None = None) -> ProjectionResult:
    """Backward subharmonic-order projection on a bounded grid; the dual
    potential is the grid function of node multipliers, discretely
    subharmonic by LP feasibility."""
    if spec.kind != "subharmonic":
        raise ValueError("spec must be subharmonic")
    solver = solver or SimplexSolver()
    grid = spec.grid
    lp, interior, kept_rows = _backward_subharmonic_lp(mu, nu, grid)
    sol = solver.solve(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"projection LP returned {sol.status}")
    if tie_break == "second_moment":
        KI = interior.shape[0]
        nodes_int = grid.nodes()[interior]
        moment = np.zeros(lp.num_vars)
        moment[:mu.n * KI] = np.tile(np.sum(nodes_int * nodes_int, axis=1), mu.n)
        sol = _second_moment_resolve(lp, sol, moment, solver)
    m = mu.n
    KI = interior.shape[0]
    nodes = grid.nodes()
    pi1 = sol.x[:m * KI].reshape(m, KI)
    occupation = sol.x[m * KI:]
    mass = pi1.sum(axis=0)
    keep = mass > 1e-13
    projection = _merge_atoms(nodes[interior][keep], mass[keep])
    plan = _regroup_columns(pi1[:, keep], nodes[interior][keep], projection)
    coupling = Coupling(plan, mu, projection)

    dual_full = np.zeros(m + grid.num_nodes)
    dual_full[kept_rows] = sol.dual
    u = dual_full[:m]
    phi_vals = _patch_stencil_free_nodes(grid, -dual_full[m:], kept_rows[m:])
    phi = GridFunction(grid, phi_vals)
    cost_val = float(sol.primal_objective)
    dual_value = _subharmonic_backward_dual_value(phi, mu, nu, grid, interior)
    cert = check_subharmonic_order(projection, nu, spec, solver=solver)
    return ProjectionResult(projection=projection, coupling=coupling, cost=cost_val,
                            dual_potential=phi, dual_value=dual_value,
                            duality_gap=cost_val - dual_value,
                            order_certificate=cert, direction="backward",
                            order_kind="subharmonic",
                            multipliers={"u": u, "occupation": occupation,
                                         "interior": interior},
                            iterations=sol.iterations)


def _subharmonic_backward_dual_value(phi: GridFunction, mu, nu, grid, interior) -> float:
    nodes = grid.nodes()[interior]
    phiI = phi.values[interior]
    q2_at_mu = np.min(phiI[None, :] + _sqdist_matrix(mu.points, nodes), axis=1)
    nu_nodal = _nodal_weights(nu, grid, "target", require_interior=True)
    return float(np.dot(mu.weights, q2_at_mu) - float(nu_nodal @ phi.values))


def _subharmonic_forward_dual_value(phi: GridFunction, mu, nu, grid, interior) -> float:
    nodes = grid.nodes()[interior]
    phiI = phi.values[interior]
    q2bar_at_nu = np.max(phiI[:, None] - _sqdist_matrix(nodes, nu.points), axis=0)
    mu_nodal = _nodal_weights(mu, grid, "source", require_interior=True)
    return float(mu_nodal @ phi.values) - float(np.dot(nu.weights, q2bar_at_nu))


def project_forward_subharmonic(nu: DiscreteMeasure, mu: DiscreteMeasure,
                                spec: OrderSpec,
                                solver: SimplexSolver | None = None) -> ProjectionResult:
    """Forward subharmonic-order projection of nu onto the cone of grid
    measures dominating mu."""
    if spec.kind != "subharmonic":
        raise ValueError("spec must be subharmonic")
    solver = solver or SimplexSolver()
    grid = spec.grid
    lp, interior, kept_rows = _forward_subharmonic_lp(mu, nu, grid)
    sol = solver.solve(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"projection LP returned {sol.status}")
    n = nu.n
    KI = interior.shape[0]
    Kall = grid.num_nodes
    nodes = grid.nodes()
    pi1 = sol.x[:KI * n].reshape(KI, n)
    occupation = sol.x[KI * n:]
    mass = pi1.sum(axis=1)
    keep = mass > 1e-13
    projection = _merge_atoms(nodes[interior][keep], mass[keep])
    plan = _regroup_columns(pi1[keep].T, nodes[interior][keep], projection).T
    coupling = Coupling(plan, projection, nu)

    dual_full = np.zeros(Kall + n)
    dual_full[kept_rows] = sol.dual
    phi_vals = _patch_stencil_free_nodes(grid, dual_full[:Kall], kept_rows[:Kall])
    v = -dual_full[Kall:]
    phi = GridFunction(grid, phi_vals)
    cost_val = float(sol.primal_objective)
    dual_value = _subharmonic_forward_dual_value(phi, mu, nu, grid, interior)
    cert = check_subharmonic_order(mu, projection, spec, solver=solver)
    return ProjectionResult(projection=projection, coupling=coupling, cost=cost_val,
                            dual_potential=phi, dual_value=dual_value,
                            duality_gap=cost_val - dual_value,
                            order_certificate=cert, direction="forward",
                            order_kind="subharmonic",
                            multipliers={"v": v, "occupation": occupation,
                                         "interior": interior},
                            iterations=sol.iterations)


def solve_problem(problem: ProjectionProblem,
                  solver: SimplexSolver | None = None) -> ProjectionResult:
    """Dispatch a declarative ProjectionProblem to the matching routine."""
    if problem.order.kind == "convex":
        if problem.direction == "backward":
            if problem.candidate_support is None:
                return project_backward_convex(problem.mu, problem.nu, solver=solver)
            return project_backward_convex_lp(problem.mu, problem.nu,
                                              problem.candidate_support, solver=solver)
        return project_forward_convex(problem.nu, problem.mu,
                                      problem.candidate_support, solver=solver,
                                      dilation=problem.dilation)
    if problem.order.kind == "subharmonic":
        if problem.direction == "backward":
            return project_backward_subharmonic(problem.mu, problem.nu, problem.order,
                                                solver=solver)
        return project_forward_subharmonic(problem.nu, problem.mu, problem.order,
                                           solver=solver)
    raise ValueError(f"no projection for order kind {problem.order.kind!r}")


@dataclass(frozen=True)
class UniquenessReport:
    trials: int
    costs: list[float]
    max_cost_spread: float
    max_w2_spread: float


def uniqueness_probe(problem: ProjectionProblem, trials: int = 5,
                     seed: int = 42) -> UniquenessReport:
    """Re-solve with shuffled variable scan orders and report the maximum
    pairwise squared-W2 distance between the returned projections.

    Discrete sources are not covered by the uniqueness theory (it needs an
    absolutely continuous source and strictly convex cost), so the spread
    is reported, never asserted.
    """
    rng = np.random.default_rng(seed)
    results = []
    base_solver = SimplexSolver()
    results.append(solve_problem(problem, solver=base_solver))
    for _ in range(max(0, trials - 1)):
        perm_solver = _PermutingSolver(rng.integers(0, 2**31 - 1))
        results.append(solve_problem(problem, solver=perm_solver))
    costs = [r.cost for r in results]
    w2max = 0.0
    for a in range(len(results)):
        for b in range(a + 1, len(results)):
            val, _ = w2_squared(results[a].projection, results[b].projection)
            w2max = max(w2max, val)
    return UniquenessReport(trials=trials, costs=costs,
                            max_cost_spread=float(np.max(costs) - np.min(costs)),
                            max_w2_spread=float(w2max))


class _PermutingSolver(SimplexSolver):
    """Applies a seeded column permutation before every solve; changes which
    optimal vertex ties resolve to without perturbing the objective."""

    def __init__(self, seed: int, **kw):
        super().__init__(**kw)
        self._seed = int(seed)

    def solve(self, lp: LinearProgram, column_order=None):
        rng = np.random.default_rng(self._seed)
        perm = rng.permutation(lp.num_vars)
        return super().solve(lp, column_order=perm)
