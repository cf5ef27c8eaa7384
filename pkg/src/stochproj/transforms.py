"""Analytic kernels on grids: discrete Legendre-Fenchel transform, the
quadratic-cost transforms

    q2(g)(x)    = min_y { g(y) + |x-y|^2 }        (inf-convolution)
    q2bar(g)(y) = max_x { g(x) - |x-y|^2 }        (sup-deconvolution)

evaluated exactly over grid nodes, the discrete subharmonic envelope
(largest grid function below an obstacle with nonnegative grid Laplacian
at interior nodes), and the composite q2e = envelope . q2.

q2/q2bar are computed through the Legendre form

    q2(g)(x)    = |x|^2 - 2 * conj(.5|y|^2 + .5 g(y))(x)
    q2bar(g)(y) = 2 * conj(.5|x|^2 - .5 g(x))(y) - |y|^2

which agrees with direct double-loop enumeration to rounding error since
both take the same discrete extremum.  +inf entries act as sentinels and
are skipped in every extremum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import Grid

__all__ = [
    "GridFunction",
    "SampledConvexFunction",
    "EnvelopeError",
    "legendre",
    "q2",
    "q2bar",
    "subharmonic_envelope",
    "q2e",
]


class EnvelopeError(RuntimeError):
    """Obstacle solver did not reach the requested residual."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(f"envelope residual {residual:.3e} after {sweeps} sweeps")
        self.residual = residual
        self.sweeps = sweeps


@dataclass(frozen=True)
class GridFunction:
    """Real values on the nodes of a regular grid (flat array, row-major
    with the last axis fastest).  +inf entries are allowed as sentinels."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float).ravel())
        if v.shape[0] != self.grid.num_nodes:
            raise ValueError("values length must equal grid node count")
        if np.any(np.isnan(v)) or np.any(v == -np.inf):
            raise ValueError("values must be finite or +inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def nd(self) -> np.ndarray:
        return self.values.reshape(self.grid.n)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def interior_laplacian(self) -> np.ndarray:
        """Grid Laplacian (3/5-point stencil over h^2) at interior nodes,
        flat array over interior_indices order."""
        v = self.nd
        h = self.grid.spacing
        d = self.grid.dim
        if d == 1:
            lap = (v[:-2] - 2 * v[1:-1] + v[2:]) / h[0] ** 2
            return lap.ravel()
        if d == 2:
            core = v[1:-1, 1:-1]
            lap = (v[:-2, 1:-1] - 2 * core + v[2:, 1:-1]) / h[0] ** 2
            lap = lap + (v[1:-1, :-2] - 2 * core + v[1:-1, 2:]) / h[1] ** 2
            return lap.ravel()
        raise ValueError("laplacian supported for dimensions 1 and 2 only")

    def to_json_dict(self) -> dict:
        return {"grid": self.grid.to_json_dict(),
                "values": [float(v) for v in self.values]}


_CONVEXITY_TOL = 1e-10


def _directional_second_differences(fn: GridFunction) -> list[np.ndarray]:
    """Second differences along axes (1D/2D) and both diagonals (2D)."""
    v = fn.nd
    out = []
    if fn.grid.dim == 1:
        out.append(v[:-2] - 2 * v[1:-1] + v[2:])
        return out
    out.append(v[:-2, :] - 2 * v[1:-1, :] + v[2:, :])
    out.append(v[:, :-2] - 2 * v[:, 1:-1] + v[:, 2:])
    out.append(v[:-2, :-2] - 2 * v[1:-1, 1:-1] + v[2:, 2:])
    out.append(v[:-2, 2:] - 2 * v[1:-1, 1:-1] + v[2:, :-2])
    return out


@dataclass(frozen=True)
class SampledConvexFunction:
    """Grid function in dimension 1 or 2 whose directional second
    differences passed the discrete-convexity screen (a necessary
    condition; in 2D it is not sufficient for convex extensibility)."""

    fn: GridFunction
    verified: bool = False

    def __post_init__(self):
        if self.fn.grid.dim > 2:
            raise ValueError("sampled convex functions restricted to 1D/2D")
        if not self.fn.is_finite():
            raise ValueError("sampled convex function must be finite")
        bound = -_CONVEXITY_TOL * (1.0 + float(np.max(np.abs(self.fn.values))))
        ok = all(np.min(dd, initial=0.0) >= bound
                 for dd in _directional_second_differences(self.fn))
        object.__setattr__(self, "verified", ok)

    def require_convex(self) -> "SampledConvexFunction":
        if not self.verified:
            raise ValueError("grid values fail the discrete-convexity screen")
        return self


def legendre(f: GridFunction, dual_grid: Grid, return_argmax: bool = False):
    """Discrete Legendre-Fenchel transform

        conj(f)(y) = max over grid nodes x of ( <x, y> - f(x) ),

    evaluated at every node of dual_grid; exact discrete maximum, ties
    resolved to the lowest node index.  +inf nodes of f are skipped.
    """
    if f.grid.dim != dual_grid.dim:
        raise ValueError("grids must share dimension")
    finite = np.isfinite(f.values)
    if not np.any(finite):
        raise ValueError("no finite nodes to transform")
    x = f.grid.nodes()[finite]
    fv = f.values[finite]
    y = dual_grid.nodes()
    scores = y @ x.T - fv[None, :]
    arg = np.argmax(scores, axis=1)
    vals = scores[np.arange(y.shape[0]), arg]
    out = GridFunction(dual_grid, vals)
    if return_argmax:
        full_idx = np.nonzero(finite)[0][arg]
        return out, full_idx
    return out


def q2(g: GridFunction, eval_grid: Grid | None = None, return_argmin: bool = False):
    """Quadratic inf-convolution min_y { g(y) + |x-y|^2 } over the nodes of
    g's grid, evaluated at eval_grid nodes (default: g's own grid)."""
    eval_grid = eval_grid or g.grid
    g0 = GridFunction(g.grid, 0.5 * np.sum(g.grid.nodes() ** 2, axis=1) + 0.5 * g.values)
    conj, arg = legendre(g0, eval_grid, return_argmax=True)
    xx = np.sum(eval_grid.nodes() ** 2, axis=1)
    out = GridFunction(eval_grid, xx - 2.0 * conj.values)
    if return_argmin:
        return out, arg
    return out


def q2bar(g: GridFunction, eval_grid: Grid | None = None, return_argmax: bool = False):
    """Quadratic sup-deconvolution max_x { g(x) - |x-y|^2 } over the nodes
    of g's grid, evaluated at eval_grid nodes (default: g's own grid)."""
    eval_grid = eval_grid or g.grid
    # -inf sentinels are not representable; +inf nodes cannot enter a sup
    # over g - cost, so flip through the inf-convolution of -g instead.
    if not g.is_finite():
        finite = np.isfinite(g.values)
        vals = np.where(finite, -g.values, np.inf)
        neg = GridFunction(g.grid, vals)
        res = q2(neg, eval_grid, return_argmin=return_argmax)
        if return_argmax:
            return GridFunction(eval_grid, -res[0].values), res[1]
        return GridFunction(eval_grid, -res.values)
    gbar0 = GridFunction(g.grid, 0.5 * np.sum(g.grid.nodes() ** 2, axis=1) - 0.5 * g.values)
    conj, arg = legendre(gbar0, eval_grid, return_argmax=True)
    yy = np.sum(eval_grid.nodes() ** 2, axis=1)
    out = GridFunction(eval_grid, 2.0 * conj.values - yy)
    if return_argmax:
        return out, arg
    return out


def subharmonic_envelope(g: GridFunction, relaxation: float = 1.8,
                         tol: float = 1e-10, max_sweeps: int = 100_000) -> GridFunction:
    """Largest grid function v <= g with grid Laplacian >= 0 at every
    interior node; boundary nodes are free and the envelope hugs g there.

    Solved by projected red-black SOR on the fixed point
    v = min(g, weighted neighbor average) at interior nodes.  Raises
    EnvelopeError with the last residual if the sweep cap is reached.
    """
    if not g.is_finite():
        raise ValueError("envelope requires finite obstacle values")
    d = g.grid.dim
    if d not in (1, 2):
        raise ValueError("envelope supported for dimensions 1 and 2 only")
    h = g.grid.spacing
    obstacle = g.nd.copy()
    v = obstacle.copy()

    if d == 1:
        wsum = 2.0 / h[0] ** 2
        for sweep in range(max_sweeps):
            for parity in (1, 0):
                sl = slice(1 + parity, obstacle.shape[0] - 1, 2)
                if v[sl].size == 0:
                    continue
                left = v[1 + parity - 1:obstacle.shape[0] - 2:2]
                right = v[1 + parity + 1:obstacle.shape[0]:2]
                avg = (left + right) / h[0] ** 2 / wsum
                cand = (1 - relaxation) * v[sl] + relaxation * avg
                v[sl] = np.minimum(obstacle[sl], cand)
            res = _envelope_residual_1d(v, obstacle, h[0])
            if res <= tol:
                return GridFunction(g.grid, v)
        raise EnvelopeError(_envelope_residual_1d(v, obstacle, h[0]), max_sweeps)

    wsum = 2.0 / h[0] ** 2 + 2.0 / h[1] ** 2
    ii, jj = np.meshgrid(np.arange(obstacle.shape[0]), np.arange(obstacle.shape[1]),
                         indexing="ij")
    interior = (ii > 0) & (ii < obstacle.shape[0] - 1) & (jj > 0) & (jj < obstacle.shape[1] - 1)
    masks = [interior & (((ii + jj) % 2) == p) for p in (0, 1)]
    for sweep in range(max_sweeps):
        for mask in masks:
            avg = np.zeros_like(v)
            avg[1:-1, 1:-1] = ((v[:-2, 1:-1] + v[2:, 1:-1]) / h[0] ** 2
                               + (v[1:-1, :-2] + v[1:-1, 2:]) / h[1] ** 2) / wsum
            cand = (1 - relaxation) * v + relaxation * avg
            v[mask] = np.minimum(obstacle[mask], cand[mask])
        res = _envelope_residual_2d(v, obstacle, h)
        if res <= tol:
            return GridFunction(g.grid, v)
    raise EnvelopeError(_envelope_residual_2d(v, obstacle, h), max_sweeps)


def _envelope_residual_1d(v, g, h) -> float:
    if v.shape[0] <= 2:
        return 0.0
    avg = (v[:-2] + v[2:]) / 2.0
    target = np.minimum(g[1:-1], avg)
    return float(np.max(np.abs(v[1:-1] - target), initial=0.0))


def _envelope_residual_2d(v, g, h) -> float:
    if v.shape[0] <= 2 or v.shape[1] <= 2:
        return 0.0
    wsum = 2.0 / h[0] ** 2 + 2.0 / h[1] ** 2
    avg = ((v[:-2, 1:-1] + v[2:, 1:-1]) / h[0] ** 2
           + (v[1:-1, :-2] + v[1:-1, 2:]) / h[1] ** 2) / wsum
    target = np.minimum(g[1:-1, 1:-1], avg)
    return float(np.max(np.abs(v[1:-1, 1:-1] - target), initial=0.0))


def q2e(g: GridFunction, relaxation: float = 1.8, tol: float = 1e-10,
        max_sweeps: int = 100_000) -> GridFunction:
    """Subharmonic envelope of the quadratic inf-convolution of g, on g's
    own grid.  Result is discretely subharmonic and <= q2(g) node-wise."""
    return subharmonic_envelope(q2(g), relaxation=relaxation, tol=tol,
                                max_sweeps=max_sweeps)
