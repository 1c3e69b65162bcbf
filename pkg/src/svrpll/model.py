"""Mixed-integer model: edge variables x_e, site variables y_k and their rows.

Columns are laid out edges first (in ``all_edges`` order), then sites.
Sub-tour elimination rows are not part of the static model; the
branch-and-cut driver appends them to ``dynamic_rows`` as they are separated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from svrpll.instance import CoverSets, EdgeId, Instance, all_edges, edge


class ModelError(ValueError):
    pass


class VarKind(str, Enum):
    EDGE = "x"
    SITE = "y"


class VarId(NamedTuple):
    kind: VarKind
    index: Union[EdgeId, int]

    def __str__(self):
        if self.kind is VarKind.EDGE:
            return f"x[{self.index.i},{self.index.j}]"
        return f"y[{self.index}]"


def xvar(i: int, j: int) -> VarId:
    return VarId(VarKind.EDGE, edge(i, j))


def yvar(k: int) -> VarId:
    return VarId(VarKind.SITE, k)


class Sense(str, Enum):
    GE = ">="
    LE = "<="
    EQ = "="


@dataclass(frozen=True)
class Row:
    coefficients: Dict[VarId, float]
    sense: Sense
    rhs: float
    tag: str
    # generating target set for SEC rows, the branch variable for branch rows
    subset: Optional[FrozenSet[int]] = None

    def __post_init__(self):
        if not self.coefficients:
            raise ModelError("a row needs at least one coefficient")

    def activity(self, values: Dict[VarId, float]) -> float:
        return sum(a * values.get(v, 0.0) for v, a in self.coefficients.items())

    def violation(self, values: Dict[VarId, float]) -> float:
        """Positive amount by which ``values`` violates the row, else <= 0."""
        lhs = self.activity(values)
        if self.sense is Sense.GE:
            return self.rhs - lhs
        if self.sense is Sense.LE:
            return lhs - self.rhs
        return abs(lhs - self.rhs)


@dataclass
class MilpModel:
    n_targets: int
    n_sites: int
    edges: List[EdgeId]
    objective: Dict[VarId, float]
    static_rows: List[Row]
    dynamic_rows: List[Row] = field(default_factory=list)
    bounds: Dict[VarId, Tuple[float, float]] = field(default_factory=dict)

    @property
    def variables(self) -> List[VarId]:
        return [VarId(VarKind.EDGE, e) for e in self.edges] + [yvar(k) for k in range(self.n_sites)]

    @property
    def degree_rows(self) -> List[Row]:
        return [r for r in self.static_rows if r.tag == "degree"]

    @property
    def coverage_rows(self) -> List[Row]:
        return [r for r in self.static_rows if r.tag == "coverage"]

    def column_index(self) -> Dict[VarId, int]:
        return {v: c for c, v in enumerate(self.variables)}

    def add_sec(self, row: Row) -> None:
        self.dynamic_rows.append(row)


@dataclass
class Solution:
    tour_edges: FrozenSet[EdgeId]
    visit_order: List[int]
    placed_sites: FrozenSet[int]
    travel_cost: float
    landmark_cost: float

    @property
    def objective(self) -> float:
        return self.travel_cost + self.landmark_cost

    def values(self) -> Dict[VarId, float]:
        vals = {VarId(VarKind.EDGE, e): 1.0 for e in self.tour_edges}
        vals.update({yvar(k): 1.0 for k in self.placed_sites})
        return vals

    def to_dict(self) -> dict:
        return {
            "order": list(self.visit_order),
            "edges": sorted([e.i, e.j] for e in self.tour_edges),
            "sites": sorted(self.placed_sites),
            "travel_cost": self.travel_cost,
            "landmark_cost": self.landmark_cost,
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Solution":
        try:
            sol = cls(
                tour_edges=frozenset(edge(int(i), int(j)) for i, j in data["edges"]),
                visit_order=[int(v) for v in data["order"]],
                placed_sites=frozenset(int(k) for k in data["sites"]),
                travel_cost=float(data["travel_cost"]),
                landmark_cost=float(data["landmark_cost"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed solution data: {exc}") from exc
        if "objective" in data and not math.isclose(float(data["objective"]), sol.objective,
                                                     rel_tol=0, abs_tol=1e-9):
            raise ModelError("solution objective does not equal travel_cost + landmark_cost")
        return sol

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Solution":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_model(inst: Instance, cov: CoverSets, costs: Dict[EdgeId, float],
                lm_weight: float = 1.0) -> MilpModel:
    """Objective, one degree row per target and one coverage row per coverable edge.

    Edges with fewer than two covering sites cannot carry x_e = 1 and are
    fixed to zero through their bounds instead of a coverage row.
    """
    n = inst.n_targets
    edges = all_edges(n)
    objective: Dict[VarId, float] = {}
    bounds: Dict[VarId, Tuple[float, float]] = {}
    for e in edges:
        v = VarId(VarKind.EDGE, e)
        objective[v] = costs[e]
        bounds[v] = (0.0, 1.0 if len(cov.per_edge[e]) >= 2 else 0.0)
    for k in range(inst.n_sites):
        objective[yvar(k)] = lm_weight * inst.landmark_cost[k]
        bounds[yvar(k)] = (0.0, 1.0)

    rows = []
    for v in range(n):
        coefs = {xvar(v, u): 1.0 for u in range(n) if u != v}
        rows.append(Row(coefs, Sense.EQ, 2.0, "degree", frozenset([v])))
    for e in edges:
        sites = cov.per_edge[e]
        if len(sites) < 2:
            continue
        coefs = {yvar(k): 1.0 for k in sorted(sites)}
        coefs[VarId(VarKind.EDGE, e)] = -2.0
        rows.append(Row(coefs, Sense.GE, 0.0, "coverage"))
    return MilpModel(n, inst.n_sites, edges, objective, rows, [], bounds)


def cut_edges(subset: Iterable[int], n_targets: int) -> List[EdgeId]:
    s = set(subset)
    return [edge(i, j) for i in sorted(s) for j in range(n_targets) if j not in s]


def make_sec_row(subset: Iterable[int], n_targets: int) -> Row:
    """x(delta(S)) >= 2 for a target set S with 2 <= |S| <= n - 2."""
    s = frozenset(subset)
    if not s <= set(range(n_targets)):
        raise ModelError(f"subset {sorted(s)} contains unknown targets")
    if not 2 <= len(s) <= n_targets - 2:
        raise ModelError(f"SEC subset size {len(s)} outside [2, {n_targets - 2}]")
    coefs = {VarId(VarKind.EDGE, e): 1.0 for e in cut_edges(s, n_targets)}
    return Row(coefs, Sense.GE, 2.0, "sec", s)


def canonical_side(subset: Iterable[int], n_targets: int) -> FrozenSet[int]:
    """The shore of the cut that excludes the depot; S and V \\ S give the same SEC."""
    s = frozenset(subset)
    return frozenset(range(n_targets)) - s if 0 in s else s


@dataclass
class FeasibilityVerdict:
    violations: List[str]

    @property
    def feasible(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.feasible


def check_feasible(model: MilpModel, sol: Solution, cov: CoverSets) -> FeasibilityVerdict:
    n = model.n_targets
    problems = []
    deg = [0] * n
    adj: Dict[int, List[int]] = {v: [] for v in range(n)}
    for e in sol.tour_edges:
        if not (0 <= e.i < e.j < n):
            problems.append(f"edge {tuple(e)} outside the target set")
            continue
        deg[e.i] += 1
        deg[e.j] += 1
        adj[e.i].append(e.j)
        adj[e.j].append(e.i)
    for v, d in enumerate(deg):
        if d != 2:
            problems.append(f"degree: target {v} has {d} tour edges")

    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != n:
        problems.append(f"connectivity: tour reaches {len(seen)} of {n} targets from the depot")

    for e in sorted(sol.tour_edges):
        if e in cov.per_edge:
            got = len(cov.per_edge[e] & sol.placed_sites)
            if got < 2:
                problems.append(f"coverage: edge {tuple(e)} covered by {got} placed sites")
    for k in sol.placed_sites:
        if not 0 <= k < model.n_sites:
            problems.append(f"site {k} is not a candidate site")

    order = sol.visit_order
    if len(order) != n + 1 or order[0] != 0 or order[-1] != 0 or sorted(order[:-1]) != list(range(n)):
        problems.append("order: visit order must start and end at the depot and list every target once")
    elif {edge(a, b) for a, b in zip(order, order[1:])} != set(sol.tour_edges):
        problems.append("order: visit order disagrees with the tour edges")

    travel = sum(model.objective.get(VarId(VarKind.EDGE, e), math.nan) for e in sol.tour_edges)
    landmark = sum(model.objective.get(yvar(k), math.nan) for k in sol.placed_sites)
    if not math.isclose(travel, sol.travel_cost, rel_tol=0, abs_tol=1e-9):
        problems.append(f"objective: travel cost {sol.travel_cost} != {travel}")
    if not math.isclose(landmark, sol.landmark_cost, rel_tol=0, abs_tol=1e-9):
        problems.append(f"objective: landmark cost {sol.landmark_cost} != {landmark}")
    return FeasibilityVerdict(problems)


def order_from_edges(tour_edges: Iterable[EdgeId], n_targets: int) -> List[int]:
    """Walk a spanning cycle from the depot; smaller neighbour first."""
    adj: Dict[int, List[int]] = {v: [] for v in range(n_targets)}
    for e in tour_edges:
        adj[e.i].append(e.j)
        adj[e.j].append(e.i)
    order = [0]
    prev, cur = None, 0
    for _ in range(n_targets):
        nxt = [w for w in sorted(adj[cur]) if w != prev]
        if not nxt:
            raise ModelError("edges do not form a cycle through the depot")
        prev, cur = cur, nxt[0]
        order.append(cur)
        if cur == 0:
            break
    if len(order) != n_targets + 1 or order[-1] != 0:
        raise ModelError("edges do not form a single spanning cycle")
    return order


def solution_from_values(model: MilpModel, tour_edges: Sequence[EdgeId],
                         sites: Iterable[int]) -> Solution:
    tour = frozenset(tour_edges)
    placed = frozenset(sites)
    return Solution(
        tour_edges=tour,
        visit_order=order_from_edges(tour, model.n_targets),
        placed_sites=placed,
        travel_cost=sum(model.objective[VarId(VarKind.EDGE, e)] for e in sorted(tour)),
        landmark_cost=sum(model.objective[yvar(k)] for k in sorted(placed)),
    )
