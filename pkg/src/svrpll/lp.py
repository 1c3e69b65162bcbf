"""Dense bounded-variable simplex for small LP relaxations.

Every row ``a.x (sense) rhs`` is stored as ``a.x - s = rhs`` with a logical
variable ``s`` whose bounds encode the sense (``>=``: [0, inf), ``<=``:
(-inf, 0], ``=``: [0, 0]).  Structural variables must have finite bounds, so
the all-logical basis with every structural parked at its cheaper bound is
dual feasible.  A cold solve is therefore a dual simplex from that basis;
warm starts after added rows or tightened bounds continue the dual simplex
from the previous basis.  A primal simplex pass cleans up any reduced-cost
infeasibility left by round-off.

Both loops use Dantzig pricing with a Harris two-pass ratio test and switch to
Bland's smallest-index rule after a streak of degenerate pivots.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.linalg.blas import dger

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
BOUND_TOL = 1e-9
DEGENERATE_STREAK = 50
REFACTOR_EVERY = 100


class LpError(RuntimeError):
    """Internal solver failure (cycling guard, unboundedness, singular basis)."""


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass
class Constraint:
    """Sparse row over structural columns: ``sum(coef * x[col]) (sense) rhs``."""

    coefs: Dict[int, float]
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in (">=", "<=", "="):
            raise ValueError(f"unknown sense {self.sense!r}")


@dataclass
class LpProblem:
    objective: np.ndarray
    rows: List[Constraint]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        n = len(self.objective)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must match the objective length")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("structural bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        for r in self.rows:
            if any(not 0 <= c < n for c in r.coefs):
                raise ValueError("row references an unknown column")

    @property
    def n_vars(self) -> int:
        return len(self.objective)


@dataclass(frozen=True)
class BasisState:
    n_structural: int
    n_rows: int
    basic: Tuple[int, ...]
    at_upper: Tuple[int, ...]


@dataclass
class LpSolution:
    status: Status
    values: np.ndarray
    objective: float
    pivots: int = 0
    basis: Optional[BasisState] = None
    duals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _logical_bounds(sense: str) -> Tuple[float, float]:
    if sense == ">=":
        return 0.0, math.inf
    if sense == "<=":
        return -math.inf, 0.0
    return 0.0, 0.0


class SimplexSolver:
    """Stateful solver that keeps its basis between calls.

    Typical use: build once, ``solve()``, then ``add_rows`` / ``set_bounds``
    and ``solve()`` again, which re-optimises from the current basis.
    """

    def __init__(self, problem: LpProblem, verbose: bool = False):
        self.verbose = verbose
        self.ns = problem.n_vars
        self.m = 0
        self.A = np.zeros((0, self.ns))
        self.b = np.zeros(0)
        self.c = problem.objective.copy()
        self.lo = problem.lower.copy()
        self.hi = problem.upper.copy()
        self.basis = np.zeros(0, dtype=int)
        self.at_upper = np.zeros(self.ns, dtype=bool)
        self.T = np.zeros((0, self.ns))
        self.beta = np.zeros(0)
        self.pivots = 0
        self._since_refactor = 0
        self._park_structurals()
        self.add_rows(problem.rows)

    # -- problem edits -------------------------------------------------

    def add_rows(self, rows: Sequence[Constraint]) -> None:
        if not rows:
            return
        k = len(rows)
        block = np.zeros((k, self.ns))
        for r, row in enumerate(rows):
            for col, a in row.coefs.items():
                block[r, col] += a
        old_m = self.m
        n_old = self.A.shape[1]
        A = np.zeros((old_m + k, n_old + k))
        A[:old_m, :n_old] = self.A
        A[old_m:, :self.ns] = block
        A[old_m:, n_old:] = -np.eye(k)
        self.A = A
        self.b = np.concatenate([self.b, [row.rhs for row in rows]])
        new_lo, new_hi = zip(*(_logical_bounds(row.sense) for row in rows))
        self.c = np.concatenate([self.c, np.zeros(k)])
        self.lo = np.concatenate([self.lo, new_lo])
        self.hi = np.concatenate([self.hi, new_hi])
        self.at_upper = np.concatenate([self.at_upper, np.zeros(k, dtype=bool)])
        self.basis = np.concatenate([self.basis, np.arange(n_old, n_old + k)])
        self.m = old_m + k
        self.refactor()

    def set_bounds(self, lower: np.ndarray, upper: np.ndarray) -> None:
        """Replace structural bounds; nonbasic columns move to the bound their reduced cost prefers."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        self.lo[:self.ns] = lower
        self.hi[:self.ns] = upper
        self._park_structurals()

    def _park_structurals(self) -> None:
        d = self.reduced_costs() if self.m else self.c.copy()
        nonbasic = np.ones(self.ns, dtype=bool)
        nonbasic[self.basis[self.basis < self.ns]] = False
        self.at_upper[:self.ns] = np.where(nonbasic, d[:self.ns] < 0, False)

    # -- linear algebra ------------------------------------------------

    def refactor(self) -> None:
        if self.m == 0:
            self.T = np.zeros((0, self.A.shape[1]))
            self.beta = np.zeros(0)
            return
        B = self.A[:, self.basis]
        try:
            lu = scipy.linalg.lu_factor(B, check_finite=False)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise LpError("singular basis") from exc
        if np.min(np.abs(np.diag(lu[0]))) < 1e-11:
            raise LpError("singular basis")
        self.T = np.asfortranarray(scipy.linalg.lu_solve(lu, self.A, check_finite=False))
        self.beta = scipy.linalg.lu_solve(lu, self.b, check_finite=False)
        self.T[np.abs(self.T) < 1e-13] = 0.0
        self.T[np.arange(self.m), self.basis] = 1.0
        self._since_refactor = 0

    def nonbasic_values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.hi, self.lo)
        x[self.basis] = 0.0
        return x

    def values(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.beta - self.T @ x
        return x

    def reduced_costs(self) -> np.ndarray:
        d = self.c - self.c[self.basis] @ self.T
        d[self.basis] = 0.0
        return d

    def _pivot(self, r: int, j: int) -> None:
        piv = self.T[r, j]
        self.T[r] /= piv
        self.beta[r] /= piv
        col = self.T[:, j].copy()
        col[r] = 0.0
        # in-place rank-1 update T -= col * T[r] on the Fortran-ordered tableau
        self.T = dger(-1.0, col, self.T[r].copy(), a=self.T, overwrite_a=True)
        self.beta -= col * self.beta[r]
        self.basis[r] = j
        self.pivots += 1
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def _movable(self) -> np.ndarray:
        mask = self.hi - self.lo > BOUND_TOL
        mask[self.basis] = False
        return mask

    # -- dual simplex --------------------------------------------------

    def _dual(self, max_iter: int) -> bool:
        """Returns False when a row proves primal infeasibility."""
        if self.m == 0:
            return True
        degenerate = 0
        for _ in range(max_iter):
            x = self.values()
            xb = x[self.basis]
            lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
            below = lo_b - xb
            above = xb - hi_b
            infeas = np.maximum(below, above)
            bland = degenerate >= DEGENERATE_STREAK
            if bland:
                cand = np.nonzero(infeas > FEAS_TOL)[0]
                if len(cand) == 0:
                    return True
                r = cand[np.argmin(self.basis[cand])]
            else:
                r = int(np.argmax(infeas))
                if infeas[r] <= FEAS_TOL:
                    return True
            increase = below[r] > 0
            row = self.T[r]
            d = self.reduced_costs()
            movable = self._movable()
            up = ~self.at_upper
            if increase:
                elig = movable & ((up & (row < -PIVOT_TOL)) | (~up & (row > PIVOT_TOL)))
            else:
                elig = movable & ((up & (row > PIVOT_TOL)) | (~up & (row < -PIVOT_TOL)))
            cols = np.nonzero(elig)[0]
            if len(cols) == 0:
                return False
            dj = np.abs(d[cols])
            aj = np.abs(row[cols])
            ratios = dj / aj
            if bland:
                best = ratios.min()
                j = int(cols[np.nonzero(ratios <= best + 1e-12)[0][0]])
            else:
                bound = ((dj + OPT_TOL) / aj).min()
                ok = np.nonzero(ratios <= bound)[0]
                j = int(cols[ok[np.argmax(aj[ok])]])
            step = abs(d[j] / row[j])
            degenerate = degenerate + 1 if step < 1e-12 else 0
            leaving = self.basis[r]
            self._pivot(r, j)
            self.at_upper[leaving] = not increase
            self.at_upper[j] = False
        raise LpError("dual simplex iteration limit (cycling guard)")

    # -- primal simplex ------------------------------------------------

    def _primal(self, max_iter: int) -> None:
        """Requires a primal feasible basis; drives reduced costs to optimality."""
        degenerate = 0
        for _ in range(max_iter):
            d = self.reduced_costs()
            movable = self._movable()
            up = self.at_upper
            score = np.where(up, d, -d)
            score[~movable] = 0.0
            bland = degenerate >= DEGENERATE_STREAK
            cand = np.nonzero(score > OPT_TOL)[0]
            if len(cand) == 0:
                return
            j = int(cand[0]) if bland else int(cand[np.argmax(score[cand])])
            direction = -1.0 if up[j] else 1.0
            x = self.values()
            xb = x[self.basis]
            alpha = self.T[:, j] * direction
            lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
            # basic i moves by -alpha_i * t
            dec = alpha > PIVOT_TOL
            inc = alpha < -PIVOT_TOL
            room = np.full(self.m, math.inf)
            room_relaxed = np.full(self.m, math.inf)
            room[dec] = (xb[dec] - lo_b[dec]) / alpha[dec]
            room_relaxed[dec] = (xb[dec] - lo_b[dec] + FEAS_TOL) / alpha[dec]
            fin = inc & np.isfinite(hi_b)
            room[fin] = (hi_b[fin] - xb[fin]) / -alpha[fin]
            room_relaxed[fin] = (hi_b[fin] - xb[fin] + FEAS_TOL) / -alpha[fin]
            flip = self.hi[j] - self.lo[j]
            if flip <= (room.min() if self.m else math.inf):
                if not math.isfinite(flip):
                    raise LpError("unbounded LP relaxation")
                self.at_upper[j] = not up[j]
                degenerate = 0
                continue
            limit = min(room_relaxed.min(), flip)
            ok = np.nonzero(room <= limit)[0]
            if bland:
                r = int(ok[np.argmin(self.basis[ok])])
            else:
                r = int(ok[np.argmax(np.abs(alpha[ok]))])
            step = max(room[r], 0.0)
            degenerate = degenerate + 1 if step < 1e-12 else 0
            leaving = self.basis[r]
            to_upper = alpha[r] < 0
            self._pivot(r, j)
            self.at_upper[leaving] = bool(to_upper)
            self.at_upper[j] = False
        raise LpError("primal simplex iteration limit (cycling guard)")

    # -- driver --------------------------------------------------------

    def dual_feasible(self) -> bool:
        d = self.reduced_costs()
        movable = self._movable()
        bad = np.where(self.at_upper, d > OPT_TOL, d < -OPT_TOL) & movable
        # a nonbasic logical with an infinite side cannot be parked elsewhere
        return not bad.any()

    def solve(self) -> LpSolution:
        start = self.pivots
        max_iter = 50 * (self.m + self.A.shape[1]) + 1000
        self._park_structurals()
        if not self.dual_feasible():
            raise LpError("basis is not dual feasible")
        for attempt in range(5):
            if not self._dual(max_iter):
                self.refactor()
                if not self._dual(max_iter):
                    return self._result(Status.INFEASIBLE, start)
            self._primal(max_iter)
            if self._primal_feasible() and self.dual_feasible() and self._residual_ok():
                break
            self.refactor()
        else:
            raise LpError("simplex failed to settle after refactorisation")
        return self._result(Status.OPTIMAL, start)

    def _residual_ok(self) -> bool:
        """Row residuals of the current point measured against the original rows."""
        if self.m == 0:
            return True
        return bool(np.max(np.abs(self.A @ self.values() - self.b)) <= FEAS_TOL)

    def _primal_feasible(self) -> bool:
        x = self.values()
        return bool(np.all(x >= self.lo - FEAS_TOL) and np.all(x <= self.hi + FEAS_TOL))

    def _result(self, status: Status, start: int) -> LpSolution:
        basis = BasisState(self.ns, self.m, tuple(int(v) for v in self.basis),
                           tuple(int(v) for v in np.nonzero(self.at_upper)[0]))
        if status is Status.INFEASIBLE:
            return LpSolution(status, np.full(self.ns, math.nan), math.inf, self.pivots - start, basis)
        x = self.values()[:self.ns]
        x = np.clip(x, self.lo[:self.ns], self.hi[:self.ns])
        if self.verbose:
            log.debug("tableau after solve:\n%s", np.array2string(self.T, precision=3))
        # the logical of row i is column -e_i, so its reduced cost is the row dual
        duals = self.reduced_costs()[self.ns:self.ns + self.m] if self.m else np.zeros(0)
        return LpSolution(status, x, float(self.c[:self.ns] @ x), self.pivots - start, basis, duals)

    def basis_state(self) -> BasisState:
        return BasisState(self.ns, self.m, tuple(int(v) for v in self.basis),
                          tuple(int(v) for v in np.nonzero(self.at_upper)[0]))

    def load_basis(self, basis: BasisState) -> bool:
        """Install a basis from a parent problem; rows added since then get basic logicals."""
        if basis.n_structural != self.ns or basis.n_rows > self.m or len(basis.basic) != basis.n_rows:
            return False
        # logical of row i sits in column ns + i in parent and child alike
        basic = list(basis.basic)
        basic += list(range(self.ns + basis.n_rows, self.ns + self.m))
        if len(set(basic)) != self.m:
            return False
        old = (self.basis.copy(), self.at_upper.copy())
        self.basis = np.array(basic, dtype=int)
        self.at_upper[:] = False
        self.at_upper[list(basis.at_upper)] = True
        self.at_upper[self.basis] = False
        try:
            self.refactor()
        except LpError:
            self.basis, self.at_upper = old
            self.refactor()
            return False
        return True


def solve_lp(p: LpProblem, verbose: bool = False) -> LpSolution:
    return SimplexSolver(p, verbose=verbose).solve()


def warm_start(p: LpProblem, basis: Optional[BasisState], verbose: bool = False) -> LpSolution:
    """Re-solve from a parent's basis; falls back to a cold solve when the basis does not fit."""
    solver = SimplexSolver(p, verbose=verbose)
    if basis is not None and solver.load_basis(basis):
        solver.pivots = 0
        try:
            return solver.solve()
        except LpError:
            log.debug("warm start failed, solving cold")
    return solve_lp(p, verbose=verbose)
