"""Discrete measures, regular grids, couplings, and exact quadratic-cost
optimal transport between finitely supported measures.

All objects are immutable value types; every operation is a pure function,
so the module is safe to use from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgram, SimplexSolver

__all__ = [
    "DiscreteMeasure",
    "Grid",
    "Coupling",
    "make_measure",
    "moment",
    "mean",
    "w2_squared",
    "convex_hull_contains",
]

WEIGHT_SUM_TOL = 1e-12
PRUNE_THRESHOLD = 1e-14
MARGINAL_TOL = 1e-9
HULL_TOL = 1e-9
MERGE_TOL = 1e-9
NODE_BUDGET = 10**6


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud in R^d with weights summing to one."""

    points: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-d array of shape (n, d)")
        if pts.shape[1] < 1:
            raise ValueError("point dimension must be >= 1")
        if w.shape != (pts.shape[0],):
            raise ValueError("weights length must match number of points")
        if np.any(w < 0):
            raise ValueError("negative weight")
        s = w.sum()
        if abs(s - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {s!r}, expected 1 within {WEIGHT_SUM_TOL}")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_json_dict(self) -> dict:
        return {
            "points": [[float(v) for v in p] for p in self.points],
            "weights": [float(v) for v in self.weights],
        }


def make_measure(points, weights, prune_threshold: float = PRUNE_THRESHOLD,
                 merge_tol: float = MERGE_TOL) -> DiscreteMeasure:
    """Build a normalized measure: rescale weights to sum 1, merge duplicate
    points by weight addition, prune near-zero atoms.

    Raises ValueError on dimension mismatch, negative weight, or all-zero
    weights.
    """
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    if not pts:
        raise ValueError("empty point list")
    d = pts[0].shape[0]
    for p in pts:
        if p.ndim != 1 or p.shape[0] != d:
            raise ValueError("dimension mismatch among points")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(pts),):
        raise ValueError("points and weights must have equal length")
    if np.any(w < 0):
        raise ValueError("negative weight")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must have positive sum")
    w = w / total

    # merge duplicates (exact within merge_tol, first occurrence wins)
    arr = np.vstack(pts)
    kept_pts: list[np.ndarray] = []
    kept_w: list[float] = []
    for p, wi in zip(arr, w):
        for k, q in enumerate(kept_pts):
            if np.max(np.abs(q - p)) <= merge_tol:
                kept_w[k] += wi
                break
        else:
            kept_pts.append(p)
            kept_w.append(wi)

    pts2 = np.vstack(kept_pts)
    w2 = np.asarray(kept_w)
    keep = w2 > prune_threshold
    if not np.any(keep):
        raise ValueError("all atoms pruned")
    pts2, w2 = pts2[keep], w2[keep]
    w2 = w2 / w2.sum()
    return DiscreteMeasure(pts2, w2)


def moment(mu: DiscreteMeasure, k: int) -> float:
    """k-th absolute moment sum_i w_i ||x_i||^k."""
    if k < 0:
        raise ValueError("moment order must be >= 0")
    norms = np.linalg.norm(mu.points, axis=1)
    return float(np.dot(mu.weights, norms**k))


def mean(mu: DiscreteMeasure) -> np.ndarray:
    """Barycenter sum_i w_i x_i."""
    return mu.weights @ mu.points


@dataclass(frozen=True)
class Grid:
    """Regular axis-aligned grid on a box [lo, hi] with n nodes per axis.

    Node ordering is row-major with the last axis fastest.
    """

    lo: np.ndarray
    hi: np.ndarray
    n: tuple[int, ...]

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if not (lo.shape == hi.shape and len(n) == lo.shape[0]):
            raise ValueError("lo, hi, n must have equal dimension")
        if any(v < 2 for v in n):
            raise ValueError("node count must be >= 2 per axis")
        if np.any(hi <= lo):
            raise ValueError("spacing must be positive (hi > lo)")
        if int(np.prod(n)) > NODE_BUDGET:
            raise ValueError(f"total node count exceeds budget {NODE_BUDGET}")
        object.__setattr__(self, "lo", _readonly(lo))
        object.__setattr__(self, "hi", _readonly(hi))
        object.__setattr__(self, "n", n)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.asarray(self.n) - 1)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.n))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(self.lo[a], self.hi[a], self.n[a]) for a in range(self.dim)]

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (num_nodes, d), last axis fastest."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel(order="C") for m in mesh])

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(flat, self.n, order="C"))

    def flat_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(int(v) for v in multi), self.n, order="C"))

    def nearest_node(self, point) -> tuple[int, float]:
        """Flat index of nearest node and sup-norm distance to it."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        h = self.spacing
        idx = np.clip(np.rint((p - self.lo) / h).astype(int), 0, np.asarray(self.n) - 1)
        coord = self.lo + idx * h
        return self.flat_index(idx), float(np.max(np.abs(coord - p)))

    def is_interior(self, flat: int) -> bool:
        mi = self.multi_index(flat)
        return all(0 < mi[a] < self.n[a] - 1 for a in range(self.dim))

    def interior_indices(self) -> np.ndarray:
        return np.array([i for i in range(self.num_nodes) if self.is_interior(i)], dtype=int)

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def to_json_dict(self) -> dict:
        return {
            "lo": [float(v) for v in self.lo],
            "hi": [float(v) for v in self.hi],
            "n": list(self.n),
        }


@dataclass(frozen=True)
class Coupling:
    """Nonnegative mass matrix over support-point pairs with prescribed
    marginals."""

    mass: np.ndarray  # (m, n)
    source: DiscreteMeasure
    target: DiscreteMeasure
    marginal_tol: float = field(default=MARGINAL_TOL)

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.source.n, self.target.n):
            raise ValueError("mass shape must be (source atoms, target atoms)")
        if np.any(mass < -1e-12):
            raise ValueError("coupling entries must be nonnegative")
        mass = np.maximum(mass, 0.0)
        rows = mass.sum(axis=1) - self.source.weights
        cols = mass.sum(axis=0) - self.target.weights
        resid = max(np.max(np.abs(rows)), np.max(np.abs(cols)))
        if resid > self.marginal_tol:
            raise ValueError(f"marginal residual {resid:.3e} exceeds {self.marginal_tol}")
        object.__setattr__(self, "mass", _readonly(mass))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape

    def marginal_residual(self) -> float:
        rows = self.mass.sum(axis=1) - self.source.weights
        cols = self.mass.sum(axis=0) - self.target.weights
        return float(max(np.max(np.abs(rows)), np.max(np.abs(cols))))

    def transport_cost(self) -> float:
        """sum_{ij} mass_ij |x_i - y_j|^2."""
        c = _sqdist_matrix(self.source.points, self.target.points)
        return float(np.sum(self.mass * c))

    def to_triplets(self, threshold: float = 0.0) -> list[tuple[int, int, float]]:
        out = []
        m, n = self.mass.shape
        for i in range(m):
            for j in range(n):
                v = self.mass[i, j]
                if v > threshold:
                    out.append((i, j, float(v)))
        return out


def _sqdist_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return np.sum(diff * diff, axis=2)


def w2_squared(mu: DiscreteMeasure, nu: DiscreteMeasure,
               solver: SimplexSolver | None = None,
               cost: np.ndarray | None = None) -> tuple[float, Coupling]:
    """Exact squared-2-Wasserstein distance between discrete measures.

    Solves the transport LP with cost |x_i - y_j|^2 (or a caller-supplied
    cost matrix) and returns the optimal value with an attaining vertex
    coupling.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures must have equal dimension")
    solver = solver or SimplexSolver()
    m, n = mu.n, nu.n
    c = _sqdist_matrix(mu.points, nu.points) if cost is None else np.asarray(cost, float)

    # rows: m source marginals then n target marginals; columns: pi_ij flattened
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    b = np.concatenate([mu.weights, nu.weights])
    lp = LinearProgram(c=c.ravel(), A=A, b=b)
    sol = solver.solve(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"transport LP returned status {sol.status}")
    plan = sol.x.reshape(m, n)
    value = float(np.sum(plan * c)) if cost is None else float(sol.primal_objective)
    coupling = Coupling(plan, mu, nu)
    if cost is None:
        value = coupling.transport_cost()
    return value, coupling


def convex_hull_contains(points, query, tol: float = HULL_TOL,
                         solver: SimplexSolver | None = None) -> bool:
    """True iff query lies in the closed convex hull of the points,
    decided by an LP feasibility check with tolerance tol."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    q = np.atleast_1d(np.asarray(query, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("nonempty point list required")
    if pts.shape[1] != q.shape[0]:
        raise ValueError("dimension mismatch between points and query")
    solver = solver or SimplexSolver()
    npts, d = pts.shape
    A = np.vstack([pts.T, np.ones((1, npts))])
    b = np.concatenate([q, [1.0]])
    scale = 1.0 + float(np.max(np.abs(b)))
    lp = LinearProgram(c=np.zeros(npts), A=A, b=b)
    return solver.infeasibility(lp) <= tol * scale
