import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_cut
from svrpll.instance import edge
from svrpll.model import xvar
from svrpll.separation import (SeparationError, SupportGraph, connected_components, global_min_cut,
                               is_spanning_cycle, separate_secs)


def graph(n, weights):
    return SupportGraph(n, {edge(i, j): w for (i, j), w in weights.items()})


def cycle_values(order):
    return {xvar(a, b): 1.0 for a, b in zip(order, order[1:] + order[:1])}


def test_components_two_triangles():
    g = graph(6, {(0, 1): 1, (1, 2): 1, (0, 2): 1, (3, 4): 1, (4, 5): 1, (3, 5): 1})
    assert connected_components(g) == [{0, 1, 2}, {3, 4, 5}]


def test_components_cycle_and_empty():
    assert connected_components(graph(5, {(0, 1): 1, (1, 2): 1, (2, 3): 1, (3, 4): 1, (0, 4): 1})) == [set(range(5))]
    assert connected_components(graph(5, {})) == [{v} for v in range(5)]


def test_min_cut_path():
    cut = global_min_cut(graph(3, {(0, 1): 1.0, (1, 2): 0.5}))
    assert cut.value == 0.5
    assert cut.side in ({2}, {0, 1})


def test_min_cut_triangle_and_k4():
    assert global_min_cut(graph(3, {(0, 1): 1, (1, 2): 1, (0, 2): 1})).value == 2.0
    k4 = graph(4, {e: 0.5 for e in itertools.combinations(range(4), 2)})
    cut = global_min_cut(k4)
    assert cut.value == 1.5
    assert len(cut.side) in (1, 3)


def test_min_cut_side_value_consistent():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        w = {e: float(rng.uniform(0.1, 1)) for e in itertools.combinations(range(n), 2) if rng.random() < 0.7}
        for i in range(n - 1):
            w.setdefault((i, i + 1), 0.3)
        g = graph(n, w)
        cut = global_min_cut(g)
        assert 1 <= len(cut.side) <= n - 1
        assert cut.value == pytest.approx(g.cut_value(cut.side), abs=1e-12)


def test_min_cut_preconditions():
    with pytest.raises(SeparationError):
        global_min_cut(graph(1, {}))
    with pytest.raises(SeparationError):
        global_min_cut(graph(4, {(0, 1): 1, (2, 3): 1}))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.data())
def test_min_cut_matches_brute_force(n, data):
    weights = {}
    for i, j in itertools.combinations(range(n), 2):
        w = data.draw(st.one_of(st.just(0.0), st.floats(0.01, 2.0)))
        if w > 0:
            weights[(i, j)] = w
    for i in range(n - 1):
        weights.setdefault((i, i + 1), 0.25)
    assert abs(global_min_cut(graph(n, weights)).value - brute_force_cut(n, weights)) <= 1e-9


def test_min_cut_deterministic_tie_break():
    # a 6-cycle of unit weights: every pair of cut edges is optimal
    g = graph(6, {(i, (i + 1) % 6): 1.0 for i in range(6)})
    a, b = global_min_cut(g), global_min_cut(g)
    assert a == b and a.value == 2.0


def test_separate_two_subtours():
    vals = cycle_values([0, 1, 2])
    vals.update(cycle_values([3, 4, 5, 6]))
    rows = separate_secs(vals, 7)
    assert sorted(len(r.subset) for r in rows) == [3, 4]
    for r in rows:
        assert r.violation(vals) >= 1e-6


def test_separate_hamiltonian_cycle_empty():
    assert separate_secs(cycle_values([0, 3, 1, 4, 2, 5]), 6) == []


def test_separate_fractional_bridge():
    vals = {xvar(0, 1): 1.0, xvar(1, 2): 1.0, xvar(0, 2): 1.0,
            xvar(3, 4): 1.0, xvar(4, 5): 1.0, xvar(3, 5): 1.0,
            xvar(2, 3): 0.5, xvar(0, 5): 0.5}
    rows = separate_secs(vals, 6)
    assert len(rows) == 1
    assert rows[0].subset in ({0, 1, 2}, {3, 4, 5})
    assert rows[0].activity(vals) == pytest.approx(1.0)


def test_separate_ignores_support_dust():
    vals = cycle_values([0, 1, 2])
    vals.update(cycle_values([3, 4, 5]))
    vals[xvar(2, 3)] = 1e-9
    assert len(separate_secs(vals, 6)) == 2


def test_separate_skips_small_components():
    # a 2-cycle plus singleton components: only the sizes 2..n-2 give rows
    vals = {xvar(0, 1): 1.0, xvar(2, 3): 1.0, xvar(3, 4): 1.0, xvar(2, 4): 1.0}
    rows = separate_secs(vals, 6)
    assert sorted(sorted(r.subset) for r in rows) == [[0, 1], [2, 3, 4]]


@settings(max_examples=60, deadline=None)
@given(st.permutations(range(8)), st.lists(st.integers(1, 7), max_size=3, unique=True))
def test_integer_completeness(perm, cuts):
    # split a permutation into cycles of length >= 3 where possible
    bounds = [0] + sorted(c for c in cuts) + [8]
    parts = [list(perm[a:b]) for a, b in zip(bounds, bounds[1:]) if b - a >= 3]
    if sum(len(p) for p in parts) != 8:
        parts = [list(perm)]
    vals = {}
    tour = []
    for p in parts:
        vals.update(cycle_values(p))
        tour += [edge(a, b) for a, b in zip(p, p[1:] + p[:1])]
    rows = separate_secs(vals, 8)
    assert (rows == []) == is_spanning_cycle(tour, 8)
    assert all(r.violation(vals) >= 1e-6 for r in rows)


def test_is_spanning_cycle():
    assert is_spanning_cycle([(0, 1), (1, 2), (2, 0)], 3)
    assert not is_spanning_cycle([(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], 6)
    assert not is_spanning_cycle([(0, 1), (1, 2)], 3)
