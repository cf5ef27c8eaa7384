"""Self-contained dense revised-simplex solver for equality-form linear
programs

    min c.x   s.t.  A x = b,  x >= 0  (optionally x <= upper),

returning a primal vertex, dual multipliers, and a certified objective
pair.  Dantzig pricing with a Bland's-rule fallback for anti-cycling; the
pivot order is fixed, so repeated solves of the same program are bitwise
identical.  Dense basis inverse with periodic refactorization; intended
for desk-scale programs (a configurable variable cap, default 20000).

Thread use: one SimplexSolver instance per thread; instances keep no
state between solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LinearProgram", "LPSolution", "SimplexSolver", "SimplexError"]


class SimplexError(RuntimeError):
    """Numerical breakdown: anti-cycling restarts exhausted or size cap hit."""


@dataclass(frozen=True)
class LinearProgram:
    """Equality-form LP data.  A is dense (rows = equality constraints)."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    upper: np.ndarray | None = None  # optional per-variable upper bounds (inf = none)

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.c, dtype=float))
        A = np.ascontiguousarray(np.atleast_2d(np.asarray(self.A, dtype=float)))
        b = np.ascontiguousarray(np.asarray(self.b, dtype=float))
        if A.shape != (b.shape[0], c.shape[0]):
            raise ValueError(
                f"inconsistent dimensions: A{A.shape}, b{b.shape}, c{c.shape}")
        if A.shape[0] and np.any(np.all(A == 0.0, axis=1)):
            raise ValueError("constraint matrix has an all-zero row")
        up = self.upper
        if up is not None:
            up = np.ascontiguousarray(np.asarray(up, dtype=float))
            if up.shape != c.shape:
                raise ValueError("upper bounds length must equal variable count")
        for arr in (c, A, b) + ((up,) if up is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "upper", up)

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_rows(self) -> int:
        return self.b.shape[0]

    @classmethod
    def from_triplets(cls, n: int, rows: int, triplets, c, b, upper=None) -> "LinearProgram":
        A = np.zeros((rows, n))
        for r, col, v in triplets:
            A[int(r), int(col)] += float(v)
        return cls(c=np.asarray(c, float), A=A, b=np.asarray(b, float), upper=upper)

    def to_triplets(self) -> list[tuple[int, int, float]]:
        out = []
        for r in range(self.num_rows):
            for j in np.nonzero(self.A[r])[0]:
                out.append((r, int(j), float(self.A[r, j])))
        return out

    def dump(self, path) -> None:
        """Plain-text sparse triplet dump: one `row col value` line each,
        preceded by objective and rhs lines."""
        with open(path, "w") as fh:
            fh.write(f"# lp {self.num_rows} rows {self.num_vars} vars\n")
            for j, v in enumerate(self.c):
                if v != 0.0:
                    fh.write(f"c {j} {v:.17g}\n")
            for r, v in enumerate(self.b):
                fh.write(f"b {r} {v:.17g}\n")
            for r, j, v in self.to_triplets():
                fh.write(f"{r} {j} {v:.17g}\n")


@dataclass(frozen=True)
class LPSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None
    dual: np.ndarray | None  # row multipliers (Farkas certificate when infeasible)
    primal_objective: float
    dual_objective: float
    iterations: int = 0
    infeasibility: float = 0.0

    def objective_gap(self) -> float:
        scale = max(1.0, abs(self.primal_objective), abs(self.dual_objective))
        return abs(self.primal_objective - self.dual_objective) / scale


_REFACTOR_EVERY = 64
_BLAND_TRIGGER = 1000  # degenerate-run length before falling back to Bland


class SimplexSolver:
    """Two-phase dense revised simplex.  One instance per thread."""

    def __init__(self, feas_tol: float = 1e-9, pivot_tol: float = 1e-9,
                 gap_tol: float = 1e-8, size_cap: int = 20000,
                 max_restarts: int = 3):
        self.feas_tol = feas_tol
        self.pivot_tol = pivot_tol
        self.gap_tol = gap_tol
        self.size_cap = size_cap
        self.max_restarts = max_restarts

    # -- public API ---------------------------------------------------

    def solve(self, lp: LinearProgram, column_order: np.ndarray | None = None) -> LPSolution:
        """Solve the LP.  `column_order` permutes the variable scan order,
        which can steer degenerate ties to a different optimal vertex; the
        optimal value is unaffected."""
        A, b, c, nstruct = self._expand(lp)
        if A.shape[1] > self.size_cap:
            raise SimplexError(f"variable count {A.shape[1]} exceeds size cap {self.size_cap}")
        perm = None
        if column_order is not None:
            perm = np.asarray(column_order, dtype=int)
            if perm.shape[0] != A.shape[1]:
                # permute only the caller-visible structural block
                full = np.arange(A.shape[1])
                full[:perm.shape[0]] = perm
                perm = full
            A = A[:, perm]
            c = c[perm]

        last_err: SimplexError | None = None
        for restart in range(self.max_restarts + 1):
            force_bland = restart > 0
            try:
                sol = self._solve_once(A, b, c, force_bland=force_bland)
            except _CycleSuspected as exc:
                last_err = SimplexError(str(exc))
                continue
            return self._contract(sol, lp, perm, nstruct)
        raise last_err or SimplexError("anti-cycling restarts exhausted")

    def feasible(self, lp: LinearProgram) -> bool:
        """Phase-one feasibility check."""
        return self.infeasibility(lp) <= self.feas_tol * (1.0 + float(np.max(np.abs(lp.b), initial=0.0)))

    def infeasibility(self, lp: LinearProgram) -> float:
        """Optimal total artificial mass of phase one (0 iff feasible)."""
        A, b, c, _ = self._expand(lp)
        last_err: SimplexError | None = None
        for restart in range(self.max_restarts + 1):
            try:
                state = self._phase1(A, b, force_bland=restart > 0)
            except _CycleSuspected as exc:
                last_err = SimplexError(str(exc))
                continue
            return state.phase1_value
        raise last_err or SimplexError("anti-cycling restarts exhausted")

    # -- internal -----------------------------------------------------

    def _expand(self, lp: LinearProgram):
        """Append slack rows for finite upper bounds; returns (A, b, c, nstruct)."""
        A, b, c = lp.A, lp.b, lp.c
        n = lp.num_vars
        if lp.upper is None or not np.any(np.isfinite(lp.upper)):
            return A.copy(), b.copy(), c.copy(), n
        bounded = np.nonzero(np.isfinite(lp.upper))[0]
        k = bounded.shape[0]
        A2 = np.zeros((lp.num_rows + k, n + k))
        A2[:lp.num_rows, :n] = A
        for r, j in enumerate(bounded):
            A2[lp.num_rows + r, j] = 1.0
            A2[lp.num_rows + r, n + r] = 1.0
        b2 = np.concatenate([b, lp.upper[bounded]])
        c2 = np.concatenate([c, np.zeros(k)])
        return A2, b2, c2, n

    def _contract(self, sol: LPSolution, lp: LinearProgram, perm, nstruct: int) -> LPSolution:
        x = sol.x
        dual = sol.dual
        if x is not None:
            if perm is not None:
                inv = np.empty_like(perm)
                inv[perm] = np.arange(perm.shape[0])
                x = x[inv]
            x = x[:nstruct]
            x = np.where(np.abs(x) < 1e-14, 0.0, x)
        if dual is not None:
            dual = dual[:lp.num_rows]
        return LPSolution(status=sol.status, x=x, dual=dual,
                          primal_objective=sol.primal_objective,
                          dual_objective=sol.dual_objective,
                          iterations=sol.iterations,
                          infeasibility=sol.infeasibility)

    def _phase1(self, A, b, force_bland: bool) -> "_State":
        m, n = A.shape
        flip = b < 0
        A1 = A.copy()
        A1[flip] *= -1.0
        b1 = np.where(flip, -b, b)
        ext = np.hstack([A1, np.eye(m)])
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        basis = np.arange(n, n + m)
        state = _State(A=ext, b=b1, basis=basis, m=m, n_struct=n, flip=flip)
        state.refactor()
        self._optimize(state, c1, allowed_max=n + m, force_bland=force_bland)
        state.phase1_value = float(c1[state.basis] @ state.accurate_basics())
        return state

    def _solve_once(self, A, b, c, force_bland: bool) -> LPSolution:
        m, n = A.shape
        state = self._phase1(A, b, force_bland)
        scale_b = 1.0 + float(np.max(np.abs(b), initial=0.0))
        iters = state.iterations
        if state.phase1_value > self.feas_tol * scale_b:
            # Farkas certificate from phase-one duals (in original row signs)
            y = state.accurate_duals(np.concatenate([np.zeros(n), np.ones(m)]))
            y = np.where(state.flip, -y, y)
            return LPSolution(status="infeasible", x=None, dual=y,
                              primal_objective=np.inf, dual_objective=np.inf,
                              iterations=iters, infeasibility=state.phase1_value)

        state.refactor()
        self._purge_artificials(state)
        state.refactor()
        c2 = np.concatenate([c, np.zeros(state.A.shape[1] - n)])
        status = self._optimize(state, c2, allowed_max=n, force_bland=force_bland)
        iters = state.iterations
        if status == "unbounded":
            return LPSolution(status="unbounded", x=None, dual=None,
                              primal_objective=-np.inf, dual_objective=-np.inf,
                              iterations=iters)

        x_full = np.zeros(state.A.shape[1])
        xB = state.accurate_basics()
        xB[(xB < 0) & (xB > -1e-10)] = 0.0
        x_full[state.basis] = xB
        x = x_full[:n]
        y = state.accurate_duals(c2)
        y = np.where(state.flip, -y, y)
        b_orig = np.where(state.flip, -state.b, state.b)
        A_orig = state.A[:, :n] * np.where(state.flip, -1.0, 1.0)[:, None]
        resid = float(np.max(np.abs(A_orig @ x - b_orig), initial=0.0))
        if resid > self.feas_tol * scale_b or np.min(x, initial=0.0) < -1e-12:
            raise _CycleSuspected(f"primal residual {resid:.3e} after termination")
        primal = float(c @ x)
        dualobj = float(y @ b_orig)
        sol = LPSolution(status="optimal", x=x, dual=y,
                         primal_objective=primal, dual_objective=dualobj,
                         iterations=iters)
        if sol.objective_gap() > self.gap_tol:
            raise _CycleSuspected(f"objective gap {sol.objective_gap():.3e} at termination")
        return sol

    def _purge_artificials(self, state: "_State") -> None:
        """Pivot zero-level artificial variables out of the basis where a
        structural pivot exists; rows without one are dependent and keep
        their artificial pinned at zero."""
        n = state.n_struct
        for r in range(state.m):
            j = state.basis[r]
            if j < n:
                continue
            row = state.Binv[r] @ state.A[:, :n]
            cands = np.nonzero(np.abs(row) > 1e-7)[0]
            cands = [jj for jj in cands if jj not in set(state.basis.tolist())]
            if cands:
                state.pivot(r, int(cands[0]))

    def _optimize(self, state: "_State", c: np.ndarray, allowed_max: int,
                  force_bland: bool) -> str:
        """Drive to optimality for cost c; variables with index >= allowed_max
        may not enter (artificials in phase 2)."""
        m = state.m
        ncols = state.A.shape[1]
        max_iter = 200 * (m + ncols) + 2000
        degenerate_run = 0
        bland = force_bland
        allowed = np.arange(ncols) < allowed_max
        # static column scaling (approximate steepest edge): markedly fewer
        # degenerate pivots on grid-structured programs than raw Dantzig
        colnorm = np.sqrt(1.0 + np.sum(state.A * state.A, axis=0))

        for _ in range(max_iter):
            y = state.duals(c)
            r = c - y @ state.A
            r[~allowed] = np.inf
            r[state.basis] = np.inf
            enterable = r < -1e-9
            if not np.any(enterable):
                return "optimal"
            if bland or degenerate_run > _BLAND_TRIGGER:
                j = int(np.nonzero(enterable)[0][0])
            else:
                j = int(np.argmin(np.where(enterable, r / colnorm, np.inf)))
            d = state.Binv @ state.A[:, j]
            pos = d > self.pivot_tol
            if not np.any(pos):
                return "unbounded"
            ratios = np.where(pos, state.xB / np.where(pos, d, 1.0), np.inf)
            rmin = np.min(ratios)
            ties = np.nonzero(ratios <= rmin + 1e-12)[0]
            if ties.shape[0] == 1:
                leave = int(ties[0])
            else:
                # keep numerically solid pivots among the ties, then order
                # lexicographically (Bland falls back to the index rule)
                strong = ties[d[ties] >= 0.05 * np.max(d[ties])]
                if bland:
                    leave = int(strong[np.argmin(state.basis[strong])])
                else:
                    M = np.column_stack([state.xB[strong], state.Binv[strong]])
                    M = M / d[strong, None]
                    order = np.lexsort(M.T[::-1])
                    leave = int(strong[order[0]])
            if rmin <= 1e-12:
                degenerate_run += 1
                if degenerate_run > 10 * (_BLAND_TRIGGER + m + ncols):
                    raise _CycleSuspected("cycling suspected despite Bland's rule")
            else:
                degenerate_run = 0
            state.pivot(leave, j)
        raise _CycleSuspected("iteration limit reached")


class _CycleSuspected(Exception):
    pass


class _State:
    """Mutable simplex workspace: extended matrix, basis, dense basis inverse."""

    def __init__(self, A, b, basis, m, n_struct, flip):
        self.A = A
        self.b = b
        self.basis = basis
        self.m = m
        self.n_struct = n_struct
        self.flip = flip
        self.Binv = np.eye(m)
        self.xB = b.copy()
        self.iterations = 0
        self._since_refactor = 0
        self.phase1_value = 0.0

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.solve(B, np.eye(self.m))
        except np.linalg.LinAlgError as exc:
            raise _CycleSuspected(f"singular basis during refactorization: {exc}")
        xB = self.Binv @ self.b
        xB[(xB < 0) & (xB > -1e-11)] = 0.0
        self.xB = xB
        self._since_refactor = 0

    def accurate_basics(self) -> np.ndarray:
        """Basic values by a direct solve with one refinement step."""
        B = self.A[:, self.basis]
        try:
            xB = np.linalg.solve(B, self.b)
            xB += np.linalg.solve(B, self.b - B @ xB)
        except np.linalg.LinAlgError as exc:
            raise _CycleSuspected(f"singular basis at termination: {exc}")
        return xB

    def accurate_duals(self, c: np.ndarray) -> np.ndarray:
        B = self.A[:, self.basis]
        cB = c[self.basis]
        try:
            y = np.linalg.solve(B.T, cB)
            y += np.linalg.solve(B.T, cB - B.T @ y)
        except np.linalg.LinAlgError as exc:
            raise _CycleSuspected(f"singular basis at termination: {exc}")
        return y

    def duals(self, c: np.ndarray) -> np.ndarray:
        return c[self.basis] @ self.Binv

    def pivot(self, leave_row: int, enter_col: int) -> None:
        d = self.Binv @ self.A[:, enter_col]
        piv = d[leave_row]
        # product-form update: rows r != leave get -d_r/piv times the pivot
        # row added; the pivot row itself is scaled by 1/piv
        eta = -d / piv
        eta[leave_row] = 1.0 / piv - 1.0
        self.Binv = self.Binv + np.outer(eta, self.Binv[leave_row])
        self.basis[leave_row] = enter_col
        self.iterations += 1
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            self.refactor()
        else:
            xB = self.Binv @ self.b
            xB[(xB < 0) & (xB > -1e-11)] = 0.0
            self.xB = xB
