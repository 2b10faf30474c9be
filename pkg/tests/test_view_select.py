import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zsplat.errors import InputError
from zsplat.morton import Quantizer
from zsplat.numerics import splitmix64
from zsplat import view_select as vs


def _candidates(sets, indices=None):
    if indices is None:
        indices = range(len(sets))
    return [
        vs.ViewCandidate(i, frozenset(s)) for i, s in zip(indices, sets)
    ]


def test_hand_worked_instance():
    cands = _candidates(
        [{"a", "b", "c"}, {"b", "c"}, {"d"}], indices=[1, 2, 3]
    )
    result = vs.select(cands, max_views=2)
    assert result.selected == (1, 3)
    assert result.covered == 4
    assert result.marginal_gains == (3, 1)
    result.validate()


def test_first_pick_is_largest_set():
    cands = _candidates([{1, 2}, {1, 2, 3, 4, 5}, {6}])
    result = vs.select(cands, max_views=1)
    assert result.selected == (1,)
    assert result.covered == 5


def test_ties_break_toward_lower_index():
    cands = _candidates([{"x", "y"}, {"x", "y"}, {"z", "w"}])
    result = vs.select(cands, max_views=2)
    assert result.selected[0] == 0
    # second pick: candidate 1 now gains 0, candidate 2 gains 2
    assert result.selected == (0, 2)


def test_stops_when_no_candidate_clears_min_gain():
    # acceptance is strict: a marginal gain equal to min_gain is not enough
    cands = _candidates([{1, 2, 3}, {3, 4, 5}, {6}])
    result = vs.select(cands, max_views=3, min_gain=1)
    assert result.selected == (0, 1)  # gains 3 and 2 clear the bar, 1 does not
    assert result.covered == 5
    barely = vs.select(_candidates([{1, 2, 3}, {3, 4}]), max_views=2, min_gain=1)
    assert barely.selected == (0,)


def test_zero_budget_and_empty_candidates():
    cands = _candidates([{1}])
    assert vs.select(cands, max_views=0).selected == ()
    assert vs.select([], max_views=3).selected == ()


def test_duplicate_candidate_indices_rejected():
    cands = _candidates([{1}, {2}], indices=[7, 7])
    with pytest.raises(InputError):
        vs.select(cands, max_views=1)


def _random_instance(seed, n_sets, universe, max_size):
    words = splitmix64(seed, n_sets * max_size)
    sets = []
    for i in range(n_sets):
        chunk = words[i * max_size : (i + 1) * max_size]
        size = int(chunk[0] % max_size) + 1
        sets.append({int(w % universe) for w in chunk[:size]})
    return _candidates(sets)


@given(st.integers(min_value=0, max_value=2**62), st.integers(min_value=1, max_value=8))
@settings(max_examples=200, deadline=None)
def test_heap_selection_matches_naive_rescan(seed, budget):
    cands = _random_instance(seed, n_sets=12, universe=30, max_size=9)
    fast = vs.select(cands, max_views=budget)
    slow = vs.naive_greedy(cands, max_views=budget)
    assert fast.selected == slow.selected
    assert fast.covered == slow.covered
    assert fast.marginal_gains == slow.marginal_gains
    fast.validate()


def _optimal_coverage(cands, budget):
    best = 0
    for combo in itertools.combinations(cands, min(budget, len(cands))):
        union = frozenset().union(*(c.coverage_keys for c in combo)) if combo else frozenset()
        best = max(best, len(union))
    return best


@given(st.integers(min_value=0, max_value=2**62), st.integers(min_value=1, max_value=4))
@settings(max_examples=60, deadline=None)
def test_greedy_meets_approximation_guarantee(seed, budget):
    cands = _random_instance(seed, n_sets=10, universe=18, max_size=6)
    greedy = vs.select(cands, max_views=budget)
    optimal = _optimal_coverage(cands, budget)
    assert greedy.covered >= (1 - 1 / np.e) * optimal - 1e-9


def test_build_candidates_quantizes_points_per_view():
    q = Quantizer(origin=np.zeros(3), cell=1.0, depth=4)
    view_a = np.array([[0.2, 0.2, 0.2], [0.8, 0.3, 0.1], [3.5, 0.0, 0.0]])
    view_b = np.array([[0.1, 0.9, 0.4], [3.4, 0.2, 0.3]])
    cands = vs.build_candidates([view_a, view_b], q)
    assert [c.index for c in cands] == [0, 1]
    # first two points of view_a share cell (0,0,0)
    assert len(cands[0].coverage_keys) == 2
    assert len(cands[1].coverage_keys) == 2
    # the (3,0,0) cell is shared between views
    assert cands[0].coverage_keys & cands[1].coverage_keys


def test_build_candidates_with_explicit_indices():
    q = Quantizer(origin=np.zeros(3), cell=1.0, depth=4)
    pts = np.array([[0.5, 0.5, 0.5]])
    cands = vs.build_candidates([pts, pts], q, indices=[10, 20])
    assert [c.index for c in cands] == [10, 20]
    result = vs.select(cands, max_views=2)
    assert result.selected == (10,)  # second view adds nothing


def test_coarse_quantizer_merges_coverage():
    fine = Quantizer(origin=np.zeros(3), cell=0.25, depth=6)
    pts = np.array([[0.1, 0.1, 0.1], [0.4, 0.1, 0.1], [0.9, 0.9, 0.9]])
    fine_cands = vs.build_candidates([pts], fine)
    coarse_cands = vs.build_candidates([pts], fine.coarsen(2))
    assert len(fine_cands[0].coverage_keys) == 3
    assert len(coarse_cands[0].coverage_keys) == 1
