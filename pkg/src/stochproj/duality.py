"""Dual potentials for the projection problems, duality gaps against the
primal routes, and the optimal-potential property check.

Each dual program is solved through the same linear program as its primal
(the potential is read off the row multipliers), so a matched
primal/dual pair is literally two faces of one LP and its gap is a
machine-level certificate.  The backward/forward objectives are

    backward:  integral q2(phi) d mu  -  integral phi d nu
    forward:   integral phi d mu      -  integral q2bar(phi) d nu

with phi ranging over the discretized defining class (supporting-plane
form of convexity for the convex order, nonnegative interior Laplacian
for the subharmonic order).  Potentials are normalized to vanish at the
grid node nearest the relevant mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .json_io import measure_digest
from .lp import SimplexSolver
from .measures import DiscreteMeasure, Grid, _sqdist_matrix
from .orders import OrderSpec
from .projection import (
    PlanePotential,
    ProjectionResult,
    _backward_convex_duals,
    _backward_convex_lp,
    _backward_subharmonic_lp,
    _convex_plane_potential,
    _forward_convex_duals,
    _forward_convex_lp,
    _forward_subharmonic_full_lp,
    _patch_stencil_free_nodes,
)
from .transforms import (
    GridFunction,
    SampledConvexFunction,
    q2,
    q2bar,
    q2e,
    subharmonic_envelope,
)

__all__ = [
    "DualCertificate",
    "solve_dual_backward",
    "solve_dual_forward",
    "duality_gap",
    "verify_potential_property",
    "crosscheck_dual_equivalence",
    "interpolate",
    "PotentialPropertyReport",
    "CrosscheckReport",
]


def interpolate(fn: GridFunction, points) -> np.ndarray:
    """Multilinear interpolation of a grid function (1D linear, 2D
    bilinear); points must lie inside the grid box."""
    grid = fn.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != grid.dim:
        raise ValueError("point dimension mismatch")
    h = grid.spacing
    rel = (pts - grid.lo) / h
    if np.any(rel < -1e-9) or np.any(rel > np.asarray(grid.n) - 1 + 1e-9):
        raise ValueError("point outside grid domain")
    base = np.clip(np.floor(rel).astype(int), 0, np.asarray(grid.n) - 2)
    frac = np.clip(rel - base, 0.0, 1.0)
    vals = np.zeros(pts.shape[0])
    nd = fn.nd
    if grid.dim == 1:
        i = base[:, 0]
        t = frac[:, 0]
        vals = (1 - t) * nd[i] + t * nd[i + 1]
    elif grid.dim == 2:
        i, j = base[:, 0], base[:, 1]
        s, t = frac[:, 0], frac[:, 1]
        vals = ((1 - s) * (1 - t) * nd[i, j] + s * (1 - t) * nd[i + 1, j]
                + (1 - s) * t * nd[i, j + 1] + s * t * nd[i + 1, j + 1])
    else:
        raise ValueError("interpolation supported for dimensions 1 and 2")
    return vals


@dataclass(frozen=True)
class DualCertificate:
    direction: str  # backward | forward
    order_kind: str  # convex | subharmonic
    potential: GridFunction
    transformed: GridFunction
    dual_value: float
    anchor_index: int
    grid: Grid
    mu_digest: str
    nu_digest: str
    planes: PlanePotential | None = None
    pair_values: np.ndarray | None = None  # u at mu atoms / v at nu atoms
    interior: np.ndarray | None = None
    lp_value: float = 0.0
    multipliers: dict = field(default_factory=dict, repr=False)

    def class_screen(self) -> bool:
        """Does the stored potential satisfy its defining-class surrogate?"""
        if self.order_kind == "convex":
            return SampledConvexFunction(self.potential).verified
        lap = self.potential.interior_laplacian()
        scale = 1.0 + float(np.max(np.abs(self.potential.values)))
        return bool(np.min(lap, initial=0.0) >= -1e-9 * scale / np.min(self.grid.spacing) ** 2)

    def evaluate_potential(self, points, allow_planes: bool = True) -> np.ndarray:
        """Potential at arbitrary points: exact max-affine evaluation when
        plane data is stored, multilinear grid interpolation otherwise."""
        if allow_planes and self.planes is not None:
            return self.planes(points)
        return interpolate(self.potential, points)

    def recompute_value(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        """Objective recomputed from the stored potential data alone."""
        if self.direction == "backward":
            return _value_backward(self, mu, nu)
        return _value_forward(self, mu, nu)

    def conservative_value(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        """Certificate objective with the transform taken over the whole
        space rather than the grid, so the value is admissible against any
        primal (restricted or free) and the gap stays one-sided even on a
        deliberately coarse potential grid.

        For a max-of-planes potential the sup-deconvolution is exact
        (sup of a max is the max of per-piece suprema) and the
        inf-convolution is bounded below by the per-piece stationary
        values; both evaluations coincide with the grid ones at matched
        optima.  Requires plane data (convex-order certificates).
        """
        if self.planes is None:
            raise ValueError("conservative evaluation needs plane data")
        anchors, vals, slopes = (self.planes.anchors, self.planes.values,
                                 self.planes.slopes)
        if self.direction == "backward":
            if mu.dim == 1:
                q2_lower = _pl_quadratic_infconv_1d(self.planes, mu.points.ravel())
            else:
                # per-piece stationary values: a valid but loose lower bound
                scores = (vals[None, :]
                          + np.einsum("kd,nkd->nk", slopes,
                                      mu.points[:, None, :] - anchors[None, :, :])
                          - 0.25 * np.sum(slopes * slopes, axis=1)[None, :])
                q2_lower = np.min(scores, axis=1)
            return float(np.dot(mu.weights, q2_lower)
                         - np.dot(nu.weights, self.planes(nu.points)))
        # forward: sup_x(piece_i(x) - |x-y|^2) at x = y + slope/2, exact
        scores = (vals[None, :]
                  + np.einsum("kd,nkd->nk", slopes,
                              nu.points[:, None, :] - anchors[None, :, :])
                  + 0.25 * np.sum(slopes * slopes, axis=1)[None, :])
        q2bar_exact = np.max(scores, axis=1)
        return float(np.dot(mu.weights, self.planes(mu.points))
                     - np.dot(nu.weights, q2bar_exact))


def _pl_quadratic_infconv_1d(planes: PlanePotential, xs: np.ndarray) -> np.ndarray:
    """Exact inf_y { phi(y) + (x - y)^2 } for a 1D max-of-planes phi: the
    infimum sits either at a per-segment stationary point y = x - slope/2
    (clamped into the segment where that line is on top) or at a kink."""
    slopes = planes.slopes.ravel()
    intercepts = planes.values - slopes * planes.anchors.ravel()
    order = np.argsort(slopes, kind="stable")
    lines: list[tuple[float, float]] = []  # (slope, intercept) on the envelope
    for idx in order:
        s, b = float(slopes[idx]), float(intercepts[idx])
        while lines:
            s2, b2 = lines[-1]
            if abs(s - s2) < 1e-14:
                if b >= b2:
                    lines.pop()
                    continue
                break
            if len(lines) >= 2:
                s1, b1 = lines[-2]
                # previous line becomes redundant when the new line meets the
                # one before it left of their current intersection
                if (b - b1) / (s1 - s) <= (b2 - b1) / (s1 - s2):
                    lines.pop()
                    continue
            break
        if not lines or abs(s - lines[-1][0]) >= 1e-14 or b > lines[-1][1]:
            if lines and abs(s - lines[-1][0]) < 1e-14:
                lines[-1] = (s, b)
            else:
                lines.append((s, b))
    segs = np.array(lines)
    kinks = np.array([(segs[i + 1, 1] - segs[i, 1]) / (segs[i, 0] - segs[i + 1, 0])
                      for i in range(len(segs) - 1)])
    left = np.concatenate([[-np.inf], kinks])
    right = np.concatenate([kinks, [np.inf]])

    out = np.empty(xs.shape[0])
    for n, x in enumerate(xs):
        best = np.inf
        for (s, b), lo, hi in zip(segs, left, right):
            y = min(max(x - s / 2.0, lo), hi)
            if np.isinf(y):
                continue
            best = min(best, s * y + b + (x - y) ** 2)
        for y in kinks:
            val = np.max(segs[:, 0] * y + segs[:, 1]) + (x - y) ** 2
            best = min(best, val)
        out[n] = best
    return out


def _support_nodes(cert: DualCertificate) -> np.ndarray:
    nodes = cert.grid.nodes()
    if cert.interior is not None:
        return nodes[cert.interior]
    return nodes


def _support_values(cert: DualCertificate) -> np.ndarray:
    if cert.interior is not None:
        return cert.potential.values[cert.interior]
    return cert.potential.values


def _value_backward(cert: DualCertificate, mu, nu) -> float:
    nodes = _support_nodes(cert)
    vals = _support_values(cert)
    q2_at_mu = np.min(vals[None, :] + _sqdist_matrix(mu.points, nodes), axis=1)
    phi_at_nu = cert.evaluate_potential(nu.points)
    return float(np.dot(mu.weights, q2_at_mu) - np.dot(nu.weights, phi_at_nu))


def _value_forward(cert: DualCertificate, mu, nu) -> float:
    nodes = _support_nodes(cert)
    vals = _support_values(cert)
    q2bar_at_nu = np.max(vals[:, None] - _sqdist_matrix(nodes, nu.points), axis=0)
    phi_at_mu = cert.evaluate_potential(mu.points)
    return float(np.dot(mu.weights, phi_at_mu) - np.dot(nu.weights, q2bar_at_nu))


def _check_in_domain(measure: DiscreteMeasure, grid: Grid, name: str) -> None:
    for p in measure.points:
        if not grid.contains(p, tol=1e-9):
            raise ValueError(f"{name} atom {p.tolist()} outside the potential grid")


def _anchor_shift(grid: Grid, phi_vals: np.ndarray, anchor_point) -> tuple[int, float]:
    idx, _ = grid.nearest_node(anchor_point)
    return idx, float(phi_vals[idx])


def solve_dual_backward(mu: DiscreteMeasure, nu: DiscreteMeasure,
                        order: OrderSpec, potential_grid: Grid | None = None,
                        solver: SimplexSolver | None = None) -> DualCertificate:
    """Maximize integral q2(phi) d mu - integral phi d nu over the
    discretized defining class on the potential grid."""
    solver = solver or SimplexSolver()
    if order.kind == "convex":
        if potential_grid is None:
            raise ValueError("convex dual requires a potential grid")
        _check_in_domain(mu, potential_grid, "source")
        _check_in_domain(nu, potential_grid, "vertex")
        Z = potential_grid.nodes()
        lp, kept = _backward_convex_lp(mu, nu, Z)
        sol = solver.solve(lp)
        if sol.status != "optimal":
            raise RuntimeError(
                f"dual program did not solve (primal side {sol.status}); "
                "check the class-constraint discretization")
        u, psi, slopes, phi_nu = _backward_convex_duals(sol, kept, mu, nu, Z)
        planes = _convex_plane_potential(Z, psi, slopes)
        phi_vals = planes(Z)
        anchor, shift = _anchor_shift(potential_grid, phi_vals,
                                      nu.weights @ nu.points)
        planes = PlanePotential(planes.anchors, planes.values - shift, planes.slopes)
        phi = GridFunction(potential_grid, phi_vals - shift)
        cert = DualCertificate(direction="backward", order_kind="convex",
                               potential=phi, transformed=q2(phi),
                               dual_value=0.0, anchor_index=anchor,
                               grid=potential_grid,
                               mu_digest=measure_digest(mu),
                               nu_digest=measure_digest(nu),
                               planes=planes, pair_values=u - shift,
                               lp_value=float(sol.primal_objective),
                               multipliers={"psi": psi - shift, "slopes": slopes,
                                            "phi_nu": phi_nu - shift})
        return _with_value(cert, mu, nu)
    if order.kind == "subharmonic":
        grid = order.grid
        lp, interior, kept = _backward_subharmonic_lp(mu, nu, grid)
        sol = solver.solve(lp)
        if sol.status != "optimal":
            raise RuntimeError(f"dual program did not solve ({sol.status})")
        m = mu.n
        dual_full = np.zeros(m + grid.num_nodes)
        dual_full[kept] = sol.dual
        phi_vals = _patch_stencil_free_nodes(grid, -dual_full[m:], kept[m:])
        anchor, shift = _anchor_shift(grid, phi_vals, nu.weights @ nu.points)
        phi = GridFunction(grid, phi_vals - shift)
        cert = DualCertificate(direction="backward", order_kind="subharmonic",
                               potential=phi, transformed=q2(phi),
                               dual_value=0.0, anchor_index=anchor, grid=grid,
                               mu_digest=measure_digest(mu),
                               nu_digest=measure_digest(nu),
                               pair_values=dual_full[:m] - shift,
                               interior=grid.interior_indices(),
                               lp_value=float(sol.primal_objective))
        return _with_value(cert, mu, nu)
    raise ValueError(f"no dual for order kind {order.kind!r}")


def solve_dual_forward(mu: DiscreteMeasure, nu: DiscreteMeasure,
                       order: OrderSpec, potential_grid: Grid | None = None,
                       solver: SimplexSolver | None = None,
                       canonicalize: bool = True) -> DualCertificate:
    """Maximize integral phi d mu - integral q2bar(phi) d nu over the
    discretized defining class on the potential grid.

    For the subharmonic order the returned potential is the canonical
    envelope composite of the multiplier potential, making it a fixed
    point of q2e(q2bar(.)) by construction."""
    solver = solver or SimplexSolver()
    if order.kind == "convex":
        if potential_grid is None:
            raise ValueError("convex dual requires a potential grid")
        _check_in_domain(mu, potential_grid, "vertex")
        _check_in_domain(nu, potential_grid, "source")
        Z = potential_grid.nodes()
        lp, kept = _forward_convex_lp(mu, nu, Z)
        sol = solver.solve(lp)
        if sol.status != "optimal":
            raise RuntimeError(
                f"dual program did not solve (primal side {sol.status}); "
                "check the class-constraint discretization")
        u, slopes, psi, v = _forward_convex_duals(sol, kept, mu, nu, Z)
        planes = _convex_plane_potential(mu.points, u, slopes)
        phi_vals = planes(Z)
        anchor, shift = _anchor_shift(potential_grid, phi_vals,
                                      mu.weights @ mu.points)
        planes = PlanePotential(planes.anchors, planes.values - shift, planes.slopes)
        phi = GridFunction(potential_grid, phi_vals - shift)
        cert = DualCertificate(direction="forward", order_kind="convex",
                               potential=phi, transformed=q2bar(phi),
                               dual_value=0.0, anchor_index=anchor,
                               grid=potential_grid,
                               mu_digest=measure_digest(mu),
                               nu_digest=measure_digest(nu),
                               planes=planes, pair_values=v - shift,
                               lp_value=float(sol.primal_objective),
                               multipliers={"psi": psi - shift, "slopes": slopes})
        return _with_value(cert, mu, nu)
    if order.kind == "subharmonic":
        # pair constraints are imposed at every grid node (the transform's
        # supremum runs over the closed domain), which is the closure
        # variant of the forward program; its value never exceeds the
        # interior-supported primal cost, so gaps stay one-sided
        grid = order.grid
        lp, kept = _forward_subharmonic_full_lp(mu, nu, grid)
        sol = solver.solve(lp)
        if sol.status != "optimal":
            raise RuntimeError(f"dual program did not solve ({sol.status})")
        Kall = grid.num_nodes
        dual_full = np.zeros(Kall + nu.n)
        dual_full[kept] = sol.dual
        lp_value = float(sol.primal_objective)
        v = -dual_full[Kall:]
        phi = GridFunction(grid, dual_full[:Kall])
        canonical = False
        if canonicalize:
            # canonical potential: largest subharmonic function under the
            # inf-convolution of the multiplier values at the vertex atoms;
            # attains the program value and is a fixed point of
            # q2e . q2bar whenever the vertex atoms are grid nodes
            obstacle = np.min(
                v[None, :] + _sqdist_matrix(grid.nodes(), nu.points), axis=1)
            cand = subharmonic_envelope(GridFunction(grid, obstacle))
            cand_cert = DualCertificate(
                direction="forward", order_kind="subharmonic", potential=cand,
                transformed=q2bar(cand), dual_value=0.0, anchor_index=0,
                grid=grid, mu_digest="", nu_digest="", interior=None)
            cand_value = cand_cert.recompute_value(mu, nu)
            if cand_value >= lp_value - 1e-9 * (1.0 + abs(lp_value)):
                phi = cand
                canonical = True
        anchor, shift = _anchor_shift(grid, phi.values, mu.weights @ mu.points)
        phi = GridFunction(grid, phi.values - shift)
        cert = DualCertificate(direction="forward", order_kind="subharmonic",
                               potential=phi, transformed=q2bar(phi),
                               dual_value=0.0, anchor_index=anchor, grid=grid,
                               mu_digest=measure_digest(mu),
                               nu_digest=measure_digest(nu),
                               pair_values=v - shift,
                               interior=None,
                               lp_value=lp_value,
                               multipliers={"canonical": canonical})
        return _with_value(cert, mu, nu)
    raise ValueError(f"no dual for order kind {order.kind!r}")


def _with_value(cert: DualCertificate, mu, nu) -> DualCertificate:
    val = cert.recompute_value(mu, nu)
    return DualCertificate(direction=cert.direction, order_kind=cert.order_kind,
                           potential=cert.potential, transformed=cert.transformed,
                           dual_value=val, anchor_index=cert.anchor_index,
                           grid=cert.grid, mu_digest=cert.mu_digest,
                           nu_digest=cert.nu_digest, planes=cert.planes,
                           pair_values=cert.pair_values, interior=cert.interior,
                           lp_value=cert.lp_value, multipliers=cert.multipliers)


def _primal_measures(primal: ProjectionResult):
    if primal.direction == "backward":
        return primal.coupling.source, primal.order_certificate.nu
    return primal.order_certificate.mu, primal.coupling.target


def duality_gap(primal: ProjectionResult, dual: DualCertificate,
                conservative: bool = False) -> float:
    """primal cost minus dual value for one matched instance; instances are
    matched through content hashes of the underlying measures.

    With `conservative` the certificate is evaluated with whole-space
    transforms (see DualCertificate.conservative_value), which keeps the
    gap nonnegative even when the potential grid is coarser than the
    primal's support."""
    mu, nu = _primal_measures(primal)
    if (measure_digest(mu), measure_digest(nu)) != (dual.mu_digest, dual.nu_digest):
        raise ValueError("primal and dual artifacts come from different instances")
    if conservative:
        return float(primal.cost - dual.conservative_value(mu, nu))
    return float(primal.cost - dual.dual_value)


@dataclass(frozen=True)
class PotentialPropertyReport:
    residual: float
    tolerance: float
    within_tolerance: bool
    interpolated: bool

    def __bool__(self) -> bool:
        return self.within_tolerance


def verify_potential_property(dual: DualCertificate,
                              projection: DiscreteMeasure,
                              vertex: DiscreteMeasure,
                              tol: float = 1e-6) -> PotentialPropertyReport:
    """At the optimum the potential integrates equally against the
    projection and the cone vertex: backward |int phi d(projection) -
    int phi d(vertex)|, forward with the roles of the fixed measure and the
    projection swapped.  Off-node atoms are evaluated by multilinear
    interpolation and flagged."""
    interpolated = False
    for p in projection.points:
        _, dist = dual.grid.nearest_node(p)
        if dist > 1e-9:
            interpolated = True
    use_planes = dual.planes is not None
    a = float(np.dot(projection.weights,
                     dual.evaluate_potential(projection.points, allow_planes=use_planes)))
    b = float(np.dot(vertex.weights,
                     dual.evaluate_potential(vertex.points, allow_planes=use_planes)))
    resid = abs(a - b)
    return PotentialPropertyReport(residual=resid, tolerance=tol,
                                   within_tolerance=resid <= tol,
                                   interpolated=interpolated and dual.planes is None)


@dataclass(frozen=True)
class CrosscheckReport:
    backward_value: float
    forward_value: float
    backward_cross_value: float  # backward objective at q2bar(forward potential)
    forward_cross_value: float  # forward objective at q2(backward potential)
    backward_residual: float
    forward_residual: float


def crosscheck_dual_equivalence(mu: DiscreteMeasure, nu: DiscreteMeasure,
                                potential_grid: Grid,
                                solver: SimplexSolver | None = None) -> CrosscheckReport:
    """The sup-deconvolution of an optimal forward potential is backward
    optimal, and the inf-convolution of an optimal backward potential is
    forward optimal; evaluate both cross objectives and report residuals
    against the optimal dual values of the convex order."""
    solver = solver or SimplexSolver()
    order = OrderSpec("convex")
    bwd = solve_dual_backward(mu, nu, order, potential_grid, solver=solver)
    fwd = solve_dual_forward(mu, nu, order, potential_grid, solver=solver)
    nodes = potential_grid.nodes()

    cross_b = q2bar(fwd.potential)  # candidate backward potential
    q2_at_mu = np.min(cross_b.values[None, :] + _sqdist_matrix(mu.points, nodes), axis=1)
    phi_at_nu = interpolate(cross_b, nu.points)
    val_b = float(np.dot(mu.weights, q2_at_mu) - np.dot(nu.weights, phi_at_nu))

    cross_f = q2(bwd.potential)  # candidate forward potential
    q2bar_at_nu = np.max(cross_f.values[:, None] - _sqdist_matrix(nodes, nu.points), axis=0)
    phi_at_mu = interpolate(cross_f, mu.points)
    val_f = float(np.dot(mu.weights, phi_at_mu) - np.dot(nu.weights, q2bar_at_nu))

    return CrosscheckReport(backward_value=bwd.dual_value,
                            forward_value=fwd.dual_value,
                            backward_cross_value=val_b,
                            forward_cross_value=val_f,
                            backward_residual=abs(val_b - bwd.dual_value),
                            forward_residual=abs(val_f - fwd.dual_value))
