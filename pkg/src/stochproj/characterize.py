"""Structural checks on optimal projection maps: contraction/expansion of
convex potentials, Laplacian contraction/expansion, volume distortion of
forward subharmonic maps, and the inverse relation between backward and
forward convex-order maps.

Maps are extracted from couplings by row dominance (a single entry holding
at least 99.9% of the row mass) or conditional barycenters; split rows are
excluded, since a discrete optimal coupling need not be a map.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .measures import Coupling, Grid
from .projection import ProjectionResult
from .transforms import GridFunction, SampledConvexFunction

__all__ = [
    "MapSample",
    "extract_map",
    "monotone_intercepts",
    "map_potential_on_grid",
    "check_convex_contraction",
    "check_convex_expansion",
    "check_laplacian_contraction",
    "check_laplacian_expansion",
    "check_volume_expansion",
    "check_inverse_relation",
    "VolumeExpansionReport",
    "InverseRelationReport",
]

ROW_DOMINANCE = 0.999
CYCLICAL_TOL = 1e-8


@dataclass(frozen=True)
class MapSample:
    """Sampled (source, image) pairs of a transport map."""

    sources: np.ndarray  # (k, d)
    images: np.ndarray  # (k, d)
    weights: np.ndarray  # (k,)
    split_fraction: float = 0.0  # mass fraction of rows without a dominant image

    @property
    def size(self) -> int:
        return self.sources.shape[0]

    def cyclically_monotone(self, max_cycle: int = 4,
                            tol: float = CYCLICAL_TOL) -> bool:
        """sum <x_i, y_i - y_sigma(i)> >= -tol * scale over all permutations
        of every subset of size <= max_cycle."""
        k = self.size
        scale = 1.0 + float(np.max(np.abs(self.sources)) * np.max(np.abs(self.images)))
        idx = range(k)
        for r in range(2, min(max_cycle, k) + 1):
            for subset in itertools.combinations(idx, r):
                x = self.sources[list(subset)]
                y = self.images[list(subset)]
                base = float(np.sum(x * y))
                for perm in itertools.permutations(range(r)):
                    if float(np.sum(x * y[list(perm)])) > base + tol * scale:
                        return False
        return True


def extract_map(coupling: Coupling, from_target: bool = False,
                dominance: float = ROW_DOMINANCE,
                use_barycenter: bool = False) -> MapSample:
    """Deterministic part of a coupling as a map sample.

    Rows (or columns with from_target) whose largest entry carries at least
    `dominance` of the mass map to that atom; with use_barycenter every row
    maps to its conditional barycenter instead.
    """
    mass = coupling.mass.T if from_target else coupling.mass
    src = coupling.target if from_target else coupling.source
    dst = coupling.source if from_target else coupling.target
    sources, images, weights = [], [], []
    split = 0.0
    for i in range(mass.shape[0]):
        row = mass[i]
        total = row.sum()
        if total <= 1e-15:
            continue
        if use_barycenter:
            sources.append(src.points[i])
            images.append(row @ dst.points / total)
            weights.append(total)
            continue
        j = int(np.argmax(row))
        if row[j] >= dominance * total:
            sources.append(src.points[i])
            images.append(dst.points[j])
            weights.append(total)
        else:
            split += total
    if not sources:
        return MapSample(np.zeros((0, src.dim)), np.zeros((0, src.dim)),
                         np.zeros(0), split_fraction=float(split))
    return MapSample(np.vstack(sources), np.vstack(images),
                     np.asarray(weights), split_fraction=float(split))


def _directional_quotients(phi: SampledConvexFunction) -> list[np.ndarray]:
    """Second difference quotients (directional curvature) along axes and,
    in 2D, both diagonals; quotient 1 corresponds to curvature Id."""
    fn = phi.fn
    v = fn.nd
    h = fn.grid.spacing
    out = []
    if fn.grid.dim == 1:
        out.append((v[:-2] - 2 * v[1:-1] + v[2:]) / h[0] ** 2)
        return out
    out.append((v[:-2, :] - 2 * v[1:-1, :] + v[2:, :]) / h[0] ** 2)
    out.append((v[:, :-2] - 2 * v[:, 1:-1] + v[:, 2:]) / h[1] ** 2)
    diag2 = h[0] ** 2 + h[1] ** 2
    out.append((v[:-2, :-2] - 2 * v[1:-1, 1:-1] + v[2:, 2:]) / diag2)
    out.append((v[:-2, 2:] - 2 * v[1:-1, 1:-1] + v[2:, :-2]) / diag2)
    return out


def check_convex_contraction(phi: SampledConvexFunction, tol: float = 1e-8) -> bool:
    """Directional second difference quotients all <= 1 + tol (curvature at
    most the identity)."""
    phi.require_convex()
    return all(float(np.max(q, initial=-np.inf)) <= 1.0 + tol
               for q in _directional_quotients(phi))


def check_convex_expansion(phi: SampledConvexFunction, tol: float = 1e-8) -> bool:
    """Directional second difference quotients all >= 1 - tol (curvature at
    least the identity)."""
    phi.require_convex()
    return all(float(np.min(q, initial=np.inf)) >= 1.0 - tol
               for q in _directional_quotients(phi))


def _interior_laplacian_or_raise(phi: GridFunction) -> np.ndarray:
    if any(n < 3 for n in phi.grid.n):
        raise ValueError("grid too small for a Laplacian check (< 3 nodes per axis)")
    if not phi.is_finite():
        raise ValueError("finite grid function required")
    return phi.interior_laplacian()


def check_laplacian_contraction(phi: GridFunction, tol: float = 1e-6) -> bool:
    """Grid Laplacian >= d - tol at all interior nodes (the conjugate of
    such a potential contracts)."""
    lap = _interior_laplacian_or_raise(phi)
    return bool(np.min(lap, initial=np.inf) >= phi.grid.dim - tol)


def check_laplacian_expansion(phi: GridFunction, tol: float = 1e-6) -> bool:
    """Grid Laplacian <= d + tol at all interior nodes (the conjugate of
    such a potential expands)."""
    lap = _interior_laplacian_or_raise(phi)
    return bool(np.max(lap, initial=-np.inf) <= phi.grid.dim + tol)


@dataclass(frozen=True)
class VolumeExpansionReport:
    evaluable_nodes: int
    det_passes: int
    det_threshold: float
    min_det: float
    density_pairs: int
    density_passes: int
    split_fraction: float
    conclusive: bool

    @property
    def det_fraction(self) -> float:
        return self.det_passes / self.evaluable_nodes if self.evaluable_nodes else 1.0

    @property
    def density_fraction(self) -> float:
        return self.density_passes / self.density_pairs if self.density_pairs else 1.0


def monotone_intercepts(sample: MapSample, tol: float = 1e-9) -> np.ndarray | None:
    """Intercepts beta making psi(y) = max_j <images_j, y> - beta_j a convex
    potential whose gradient sends sources_j to images_j (piece j active at
    its own source).  Longest-path relaxation over the constraint graph;
    returns None when the pairs are not cyclically monotone."""
    n = sample.size
    if n == 0:
        return None
    y, z = sample.sources, sample.images
    # beta_k - beta_j >= <z_k - z_j, y_j>
    W = (y @ z.T)
    W = W - np.diag(W)[:, None]  # W[j, k] = <z_k - z_j, y_j>
    beta = np.zeros(n)
    for _ in range(n + 1):
        prev = beta.copy()
        beta = np.maximum(beta, np.max(prev[:, None] + W, axis=0))
        if np.max(np.abs(beta - prev)) <= tol:
            return beta
    return None  # positive cycle: not cyclically monotone


def map_potential_on_grid(sample: MapSample, grid: Grid) -> GridFunction:
    """Potential of a cyclically monotone map sample (max-affine with the
    image atoms as slopes) evaluated on a grid; raises when the sample is
    not cyclically monotone."""
    beta = monotone_intercepts(sample)
    if beta is None:
        raise ValueError("map sample is not cyclically monotone")
    vals = np.max(grid.nodes() @ sample.images.T - beta[None, :], axis=1)
    return GridFunction(grid, vals)


def _lattice_hessian_dets(sample: MapSample, beta: np.ndarray,
                          h: np.ndarray) -> np.ndarray:
    """Central-difference Hessian determinants of the reconstructed
    potential at source atoms having a full 3x3 source neighborhood on the
    lattice of spacing h."""
    psi_pieces = sample.images
    key = {tuple(np.round(s, 9)): i for i, s in enumerate(sample.sources)}

    def psi(pt):
        return float(np.max(pt @ psi_pieces.T - beta))

    dets = []
    offsets = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    for s in sample.sources:
        if not all(tuple(np.round(s + [dx * h[0], dy * h[1]], 9)) in key
                   for dx, dy in offsets):
            continue
        st = {(dx, dy): psi(s + [dx * h[0], dy * h[1]]) for dx, dy in offsets}
        fxx = (st[(1, 0)] - 2 * st[(0, 0)] + st[(-1, 0)]) / h[0] ** 2
        fyy = (st[(0, 1)] - 2 * st[(0, 0)] + st[(0, -1)]) / h[1] ** 2
        fxy = (st[(1, 1)] - st[(1, -1)] - st[(-1, 1)] + st[(-1, -1)]) / (4 * h[0] * h[1])
        dets.append(fxx * fyy - fxy * fxy)
    return np.asarray(dets)


def check_volume_expansion(result: ProjectionResult,
                           det_threshold: float = 0.9,
                           density_slack: float = 0.1) -> VolumeExpansionReport:
    """For a 2D forward subharmonic projection: (a) the finite-difference
    Hessian determinant of the potential reconstructed from the transport
    map should be at least det_threshold wherever the map is single-valued
    with a full lattice neighborhood; (b) the pushed mass per image cell
    should not exceed the source density at its dominant preimages by more
    than the slack fraction.

    If more than 20% of the mass moves through split columns, the report
    is marked inconclusive and carries no verdict.
    """
    if result.direction != "forward" or result.order_kind != "subharmonic":
        raise ValueError("volume expansion applies to forward subharmonic results")
    grid = result.dual_potential.grid
    if grid.dim != 2:
        raise ValueError("volume expansion check is 2D only")
    eta = result.coupling.source

    sample = extract_map(result.coupling, from_target=True)
    conclusive = sample.split_fraction <= 0.2
    beta = monotone_intercepts(sample) if sample.size else None
    if beta is None:
        dets = np.zeros(0)
        conclusive = False
    else:
        dets = _lattice_hessian_dets(sample, beta, grid.spacing)
    evaluable = int(dets.shape[0])
    det_passes = int(np.sum(dets >= det_threshold)) if evaluable else 0
    min_det = float(np.min(dets)) if evaluable else np.nan

    # pushforward density dominance: aggregate pushed mass per image cell
    cell = float(np.prod(grid.spacing))
    pushed_mass: dict[tuple, float] = {}
    preimage_density: dict[tuple, float] = {}
    for src, img, w in zip(sample.sources, sample.images, sample.weights):
        k = tuple(np.round(img, 9))
        pushed_mass[k] = pushed_mass.get(k, 0.0) + w
        rho = w / cell
        preimage_density[k] = min(preimage_density.get(k, np.inf), rho)
    pairs = len(pushed_mass)
    passes = 0
    for k, mass in pushed_mass.items():
        rho_src = preimage_density[k]
        if mass / cell <= rho_src * (1.0 + density_slack) + 1e-12:
            passes += 1
    return VolumeExpansionReport(
        evaluable_nodes=evaluable, det_passes=det_passes,
        det_threshold=det_threshold, min_det=min_det,
        density_pairs=pairs, density_passes=passes,
        split_fraction=sample.split_fraction,
        conclusive=conclusive)


@dataclass(frozen=True)
class InverseRelationReport:
    backward_monotone: bool
    forward_monotone: bool
    matched_pairs: int
    max_inversion_residual: float
    conclusive: bool


def check_inverse_relation(backward: ProjectionResult, forward: ProjectionResult,
                           match_tol: float | None = None) -> InverseRelationReport:
    """One convex potential drives both optimal maps: the backward map
    (source to its projection) and the forward map (vertex measure to its
    projection) are gradients of conjugate potentials, hence cyclically
    monotone and approximately inverse where their graphs meet.

    Matched pairs: an atom of the backward projection coinciding with a
    forward-map source within match_tol; applying the forward map there
    should return near the backward preimage.
    """
    if backward.direction != "backward" or forward.direction != "forward":
        raise ValueError("pass one backward and one forward result")
    t_b = extract_map(backward.coupling, use_barycenter=True)
    # forward coupling rows are projection atoms; the map of interest sends
    # the projected measure's atoms (targets) to projection atoms
    t_f = extract_map(forward.coupling, from_target=True, use_barycenter=True)

    mono_b = t_b.cyclically_monotone()
    mono_f = t_f.cyclically_monotone()

    if match_tol is None:
        scale = float(np.max(np.abs(np.vstack([t_b.sources, t_f.sources])), initial=1.0))
        match_tol = 1e-6 * (1.0 + scale)
    matched = 0
    worst = 0.0
    for bx, by in zip(t_b.sources, t_b.images):
        # find a forward source atom coinciding with the backward image
        d = np.sum((t_f.sources - by) ** 2, axis=1)
        j = int(np.argmin(d)) if d.size else -1
        if j >= 0 and d[j] <= match_tol ** 2:
            matched += 1
            worst = max(worst, float(np.linalg.norm(t_f.images[j] - bx)))
    return InverseRelationReport(backward_monotone=mono_b,
                                 forward_monotone=mono_f,
                                 matched_pairs=matched,
                                 max_inversion_residual=worst,
                                 conclusive=matched > 0)
