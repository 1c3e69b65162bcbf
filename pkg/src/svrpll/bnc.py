"""Best-first branch-and-cut over the SVRP-LL model with dynamic SEC generation.

One :class:`SimplexSolver` is shared by every node.  Sub-tour rows are
globally valid, so once separated they stay in the LP for the rest of the
search; a node only changes the column bounds before re-solving.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

import numpy as np

from svrpll.instance import Instance, compute_cover_sets, compute_edge_costs, validate_instance
from svrpll.lp import Constraint, LpProblem, LpSolution, SimplexSolver
from svrpll.model import (MilpModel, Row, Solution, VarId, VarKind, build_model, canonical_side,
                          solution_from_values)
from svrpll.separation import separate_secs

log = logging.getLogger(__name__)

PROGRESS_PREFIX = "svrpll-progress"


class BranchError(ValueError):
    pass


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    LIMIT = "limit"
    INFEASIBLE = "infeasible"


@dataclass
class SolveParams:
    integrality_tol: float = 1e-6
    cut_violation_tol: float = 1e-6
    time_limit: float = math.inf
    node_limit: Optional[int] = None
    lm_weight: float = 1.0
    branching: str = "edges_first"
    progress_every: int = 1000

    def __post_init__(self):
        if not (self.integrality_tol > 0 and self.cut_violation_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.branching not in BRANCHING_RULES:
            raise ValueError(f"unknown branching rule {self.branching!r}")


@dataclass
class SearchStats:
    nodes: int = 0
    lp_solves: int = 0
    pivots: int = 0
    sec_rows: int = 0
    incumbents: int = 0
    wall_time: float = 0.0
    root_bound: float = math.nan
    best_bound: float = math.nan
    status: SolveStatus = SolveStatus.INFEASIBLE
    selected_bounds: List[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "nodes": self.nodes,
            "lp_solves": self.lp_solves,
            "pivots": self.pivots,
            "sec_rows": self.sec_rows,
            "incumbents": self.incumbents,
            "wall_time": self.wall_time,
            "root_bound": self.root_bound,
            "best_bound": self.best_bound,
        }


@dataclass
class Node:
    extra_bounds: Tuple[Tuple[VarId, float, float], ...] = ()
    parent_objective: float = -math.inf
    depth: int = 0


class OutcomeKind(str, Enum):
    PRUNED = "pruned"
    CUTS_ADDED = "cuts_added"
    INTEGER_FEASIBLE = "integer_feasible"
    BRANCHED = "branched"


@dataclass
class NodeOutcome:
    kind: OutcomeKind
    lp_objective: float
    rows: List[Row] = field(default_factory=list)
    children: List[Node] = field(default_factory=list)
    reason: str = ""


@dataclass
class SearchState:
    open_list: list = field(default_factory=list)
    incumbent: Optional[Solution] = None
    upper_bound: float = math.inf
    sec_pool: Dict[FrozenSet[int], Row] = field(default_factory=dict)
    stats: SearchStats = field(default_factory=SearchStats)


@dataclass
class SolveResult:
    solution: Optional[Solution]
    stats: SearchStats
    model: MilpModel

    @property
    def status(self) -> SolveStatus:
        return self.stats.status


BRANCHING_RULES = ("edges_first", "most_fractional")


def pick_branch_var(values: Mapping[VarId, float], tol: float = 1e-6, rule: str = "edges_first") -> VarId:
    """Most fractional variable; ties go to edge variables, then the lowest index.

    Under ``edges_first`` the most fractional edge variable wins whenever any
    edge variable is fractional, and site variables are branched on only once
    the tour is integral.
    """
    frac = {v: abs(val - 0.5) for v, val in values.items() if abs(val - round(val)) > tol}
    if not frac:
        raise BranchError("every variable is integral within tolerance")
    if rule == "edges_first" and any(v.kind is VarKind.EDGE for v in frac):
        frac = {v: f for v, f in frac.items() if v.kind is VarKind.EDGE}
    best = min(frac.values())

    def order(v: VarId):
        return (0, tuple(v.index)) if v.kind is VarKind.EDGE else (1, (v.index,))

    ties = [v for v, f in frac.items() if f <= best + 1e-12]
    return min(ties, key=order)


class BranchAndCut:
    def __init__(self, inst: Instance, params: Optional[SolveParams] = None):
        self.inst = inst
        self.params = params or SolveParams()
        self.cov = compute_cover_sets(inst)
        self.costs = compute_edge_costs(inst)
        self.model = build_model(inst, self.cov, self.costs, self.params.lm_weight)
        self.state = SearchState()
        # columns fixed by the model bounds never enter the LP
        self.columns = [v for v in self.model.variables if self.model.bounds[v][1] > self.model.bounds[v][0]]
        self.col_of = {v: c for c, v in enumerate(self.columns)}
        self.root_lo = np.array([self.model.bounds[v][0] for v in self.columns])
        self.root_hi = np.array([self.model.bounds[v][1] for v in self.columns])
        self._solver: Optional[SimplexSolver] = None

    # -- LP plumbing -----------------------------------------------------

    def _constraint(self, row: Row) -> Constraint:
        coefs = {self.col_of[v]: a for v, a in row.coefficients.items() if v in self.col_of}
        return Constraint(coefs, row.sense.value, row.rhs)

    def lp_problem(self) -> LpProblem:
        rows = [self._constraint(r) for r in self.model.static_rows + self.model.dynamic_rows]
        c = np.array([self.model.objective[v] for v in self.columns])
        return LpProblem(c, rows, self.root_lo.copy(), self.root_hi.copy())

    @property
    def solver(self) -> SimplexSolver:
        if self._solver is None:
            self._solver = SimplexSolver(self.lp_problem())
        return self._solver

    def add_rows(self, rows: List[Row]) -> List[Row]:
        """Append SEC rows not already pooled; returns the ones actually added."""
        fresh = []
        for row in rows:
            key = canonical_side(row.subset, self.model.n_targets)
            if key in self.state.sec_pool:
                continue
            self.state.sec_pool[key] = row
            self.model.add_sec(row)
            fresh.append(row)
        if fresh:
            self.solver.add_rows([self._constraint(r) for r in fresh])
            self.state.stats.sec_rows += len(fresh)
        return fresh

    def _values(self, lp: LpSolution) -> Dict[VarId, float]:
        return {v: float(x) for v, x in zip(self.columns, lp.values)}

    # -- search ------------------------------------------------------------

    def evaluate_node(self, node: Node) -> NodeOutcome:
        """One LP solve and separation round at ``node``."""
        st = self.state
        lo = self.root_lo.copy()
        hi = self.root_hi.copy()
        for var, vlo, vhi in node.extra_bounds:
            c = self.col_of.get(var)
            if c is None:
                if vlo > 0:
                    return NodeOutcome(OutcomeKind.PRUNED, math.inf, reason="fixes an eliminated column to one")
                continue
            lo[c] = max(lo[c], vlo)
            hi[c] = min(hi[c], vhi)
        if np.any(lo > hi):
            return NodeOutcome(OutcomeKind.PRUNED, math.inf, reason="empty bound box")
        self.solver.set_bounds(lo, hi)
        lp = self.solver.solve()
        st.stats.lp_solves += 1
        st.stats.pivots += lp.pivots
        if not lp.optimal:
            return NodeOutcome(OutcomeKind.PRUNED, math.inf, reason="LP infeasible")
        alpha = lp.objective
        if alpha >= st.upper_bound - 1e-9:
            return NodeOutcome(OutcomeKind.PRUNED, alpha, reason="bound dominated")
        values = self._values(lp)
        cuts = [r for r in separate_secs(values, self.model.n_targets)
                if r.violation(values) > self.params.cut_violation_tol]
        fresh = self.add_rows(cuts)
        if fresh:
            return NodeOutcome(OutcomeKind.CUTS_ADDED, alpha, rows=fresh)

        tol = self.params.integrality_tol
        if all(abs(x - round(x)) <= tol for x in values.values()):
            tour = [v.index for v, x in values.items() if v.kind is VarKind.EDGE and x > 0.5]
            sites = [v.index for v, x in values.items() if v.kind is VarKind.SITE and x > 0.5]
            sol = solution_from_values(self.model, tour, sites)
            if sol.objective < st.upper_bound:
                st.incumbent = sol
                st.upper_bound = sol.objective
                st.stats.incumbents += 1
            return NodeOutcome(OutcomeKind.INTEGER_FEASIBLE, alpha)

        var = pick_branch_var(values, tol, self.params.branching)
        children = [Node(node.extra_bounds + ((var, fix, fix),), alpha, node.depth + 1)
                    for fix in (1.0, 0.0)]
        return NodeOutcome(OutcomeKind.BRANCHED, alpha, children=children)

    def _push(self, node: Node) -> None:
        heapq.heappush(self.state.open_list, (node.parent_objective, -node.depth, next(self._seq), node))

    def _best_bound(self, current: float) -> float:
        opens = [item[0] for item in self.state.open_list]
        return min(opens + [current]) if opens else current

    def _progress(self, bound: float) -> None:
        st = self.state
        ub = st.upper_bound
        gap = (ub - bound) / max(abs(ub), 1e-9) if math.isfinite(ub) else math.inf
        log.info("%s nodes=%d bound=%.6f incumbent=%s gap=%.6g secs=%d", PROGRESS_PREFIX,
                 st.stats.nodes, bound, f"{ub:.6f}" if math.isfinite(ub) else "inf", gap, st.stats.sec_rows)

    def solve(self) -> SolveResult:
        st = self.state
        stats = st.stats
        t0 = time.perf_counter()
        self._seq = itertools.count()
        if validate_instance(self.inst, self.cov).infeasible_certain:
            stats.status = SolveStatus.INFEASIBLE
            stats.wall_time = time.perf_counter() - t0
            return SolveResult(None, stats, self.model)

        self._push(Node())
        limit_hit = False
        while st.open_list:
            bound, _, _, node = heapq.heappop(st.open_list)
            if bound >= st.upper_bound - 1e-9:
                continue
            if time.perf_counter() - t0 > self.params.time_limit or \
                    (self.params.node_limit is not None and stats.nodes >= self.params.node_limit):
                self._push(node)
                limit_hit = True
                break
            stats.nodes += 1
            stats.selected_bounds.append(bound)
            while True:
                out = self.evaluate_node(node)
                if out.kind is not OutcomeKind.CUTS_ADDED:
                    break
            if stats.nodes == 1:
                stats.root_bound = out.lp_objective
            if out.kind is OutcomeKind.INTEGER_FEASIBLE:
                self._progress(self._best_bound(out.lp_objective))
            elif out.kind is OutcomeKind.BRANCHED:
                for child in out.children:
                    self._push(child)
            if stats.nodes % self.params.progress_every == 0:
                self._progress(self._best_bound(out.lp_objective))

        stats.wall_time = time.perf_counter() - t0
        if limit_hit:
            stats.status = SolveStatus.LIMIT
            stats.best_bound = min(item[0] for item in st.open_list)
        elif st.incumbent is None:
            stats.status = SolveStatus.INFEASIBLE
        else:
            stats.status = SolveStatus.OPTIMAL
            stats.best_bound = st.upper_bound
        return SolveResult(st.incumbent, stats, self.model)


def solve(inst: Instance, params: Optional[SolveParams] = None) -> SolveResult:
    return BranchAndCut(inst, params).solve()
