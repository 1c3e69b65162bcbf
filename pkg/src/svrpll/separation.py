"""Sub-tour elimination separation on the support graph of an LP point."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping

import numpy as np

from svrpll.instance import EdgeId, edge
from svrpll.model import Row, VarId, VarKind, make_sec_row

SUPPORT_EPS = 1e-7
VIOLATION_TOL = 1e-6


class SeparationError(ValueError):
    pass


@dataclass
class SupportGraph:
    n: int
    weights: Dict[EdgeId, float]

    @classmethod
    def from_values(cls, x_star: Mapping[VarId, float], n_targets: int) -> "SupportGraph":
        w = {v.index: float(val) for v, val in x_star.items()
             if v.kind is VarKind.EDGE and val > SUPPORT_EPS}
        return cls(n_targets, w)

    def cut_value(self, side) -> float:
        s = set(side)
        return sum(w for e, w in self.weights.items() if (e.i in s) != (e.j in s))


@dataclass
class CutResult:
    value: float
    side: FrozenSet[int]


def connected_components(g: SupportGraph) -> List[FrozenSet[int]]:
    parent = list(range(g.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in g.weights:
        ra, rb = find(e.i), find(e.j)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: Dict[int, set] = {}
    for v in range(g.n):
        groups.setdefault(find(v), set()).add(v)
    return [frozenset(groups[r]) for r in sorted(groups)]


def global_min_cut(g: SupportGraph) -> CutResult:
    """Stoer-Wagner minimum cut.  Ties in the maximum-adjacency order go to the lowest vertex."""
    n = g.n
    if n < 2:
        raise SeparationError("minimum cut needs at least two vertices")
    if len(connected_components(g)) != 1:
        raise SeparationError("support graph is disconnected; separate its components instead")
    W = np.zeros((n, n))
    for e, w in g.weights.items():
        W[e.i, e.j] += w
        W[e.j, e.i] += w
    members = [[v] for v in range(n)]
    active = list(range(n))
    best_value = np.inf
    best_side: List[int] = []
    while len(active) > 1:
        key = np.zeros(n)
        remaining = list(active)
        prev = last = None
        while remaining:
            # argmax returns the first maximum and ``remaining`` stays sorted
            pos = int(np.argmax(key[remaining]))
            nxt = remaining.pop(pos)
            key += W[nxt]
            prev, last = last, nxt
        # the last vertex added is attached to all others: cut-of-the-phase
        phase_value = key[last]
        if phase_value < best_value:
            best_value = phase_value
            best_side = list(members[last])
        W[prev] += W[last]
        W[:, prev] += W[:, last]
        W[prev, prev] = 0.0
        W[last] = 0.0
        W[:, last] = 0.0
        members[prev].extend(members[last])
        active.remove(last)
    return CutResult(float(best_value), frozenset(best_side))


def _as_row_set(side, n):
    return side if len(side) <= n - len(side) else frozenset(range(n)) - side


def separate_secs(x_star: Mapping[VarId, float], n_targets: int) -> List[Row]:
    """Violated SEC rows for ``x_star``.

    With several components, each component C with 2 <= |C| <= n - 2 yields
    its SEC.  With one component, the global minimum cut yields at most one
    row, returned when its value is below 2 by more than ``VIOLATION_TOL``.
    """
    n = n_targets
    g = SupportGraph.from_values(x_star, n)
    comps = connected_components(g)
    rows: List[Row] = []
    if len(comps) > 1:
        for comp in comps:
            if 2 <= len(comp) <= n - 2 and g.cut_value(comp) < 2.0 - VIOLATION_TOL:
                rows.append(make_sec_row(comp, n))
        return rows
    if n < 4:
        return rows
    cut = global_min_cut(g)
    if cut.value < 2.0 - VIOLATION_TOL:
        side = _as_row_set(cut.side, n)
        if 2 <= len(side) <= n - 2:
            rows.append(make_sec_row(side, n))
    return rows


def is_spanning_cycle(tour_edges, n_targets: int) -> bool:
    """Direct walk used to cross-check integer separation."""
    adj: Dict[int, List[int]] = {v: [] for v in range(n_targets)}
    for e in tour_edges:
        e = edge(*e)
        adj[e.i].append(e.j)
        adj[e.j].append(e.i)
    if any(len(a) != 2 for a in adj.values()):
        return False
    prev, cur, steps = None, 0, 0
    while True:
        a, b = adj[cur]
        nxt = b if a == prev else a
        prev, cur = cur, nxt
        steps += 1
        if cur == 0:
            return steps == n_targets
        if steps > n_targets:
            return False
