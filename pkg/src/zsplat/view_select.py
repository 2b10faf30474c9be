"""Greedy max-coverage selection of informative views.

Each candidate view covers a set of coarse grid cells (Morton codes of its
unprojected depth points). Selection maximizes the number of distinct cells
covered by at most ``max_views`` views with the classic lazy-free greedy:
a max-heap keyed by marginal gain, rebuilt in full after every acceptance
with zero-gain candidates dropped. Ties prefer the lower candidate index.
The greedy solution covers at least a (1 - 1/e) fraction of the optimum.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .morton import Quantizer, encode_array


@dataclass(frozen=True)
class ViewCandidate:
    """A selectable view: caller-assigned index plus covered cell keys."""

    index: int
    coverage_keys: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class SelectionResult:
    """Chosen view indices in acceptance order, total covered cells, and the
    marginal gain each acceptance contributed."""

    selected: tuple
    covered: int
    marginal_gains: tuple

    def validate(self) -> None:
        if len(self.selected) != len(self.marginal_gains):
            raise InputError("one marginal gain per selected view required")
        if len(set(self.selected)) != len(self.selected):
            raise InputError("selected view indices must be unique")
        if any(g <= 0 for g in self.marginal_gains):
            raise InputError("marginal gains must be positive")
        if sum(self.marginal_gains) != self.covered:
            raise InputError(
                f"gains sum to {sum(self.marginal_gains)}, covered is {self.covered}"
            )


def build_candidates(point_sets, quantizer: Quantizer, indices=None):
    """Candidates from world-point arrays: coverage is the set of occupied
    cells of ``quantizer``. ``indices`` defaults to 0..len-1."""
    if indices is None:
        indices = range(len(point_sets))
    candidates = []
    for idx, points in zip(indices, point_sets):
        points = np.asarray(points, dtype=np.float64)
        if points.size == 0:
            keys = frozenset()
        else:
            codes = encode_array(quantizer.quantize(points), quantizer.depth)
            keys = frozenset(int(c) for c in np.unique(codes))
        candidates.append(ViewCandidate(int(idx), keys))
    return candidates


def _check_candidates(candidates) -> dict:
    by_index = {}
    for cand in candidates:
        if cand.index in by_index:
            raise InputError(f"duplicate candidate index {cand.index}")
        by_index[cand.index] = cand
    return by_index


def select(candidates, max_views: int, min_gain: int = 0) -> SelectionResult:
    """Heap-driven greedy max coverage.

    The heap holds (-gain, index); after each acceptance it is rebuilt with
    gains recomputed against the enlarged cover and candidates whose gain
    fell to ``min_gain`` or below removed. Stops when ``max_views`` views are
    chosen or no candidate adds anything.
    """
    if max_views < 0:
        raise InputError(f"max_views must be >= 0, got {max_views}")
    by_index = _check_candidates(candidates)
    covered: set = set()
    selected: list = []
    gains: list = []
    heap = [(-len(c.coverage_keys), c.index) for c in candidates]
    heapq.heapify(heap)
    while heap and len(selected) < max_views:
        _, idx = heapq.heappop(heap)
        cand = by_index[idx]
        fresh = cand.coverage_keys - covered
        if len(fresh) <= min_gain:
            continue
        selected.append(idx)
        gains.append(len(fresh))
        covered |= fresh
        remaining = [i for (_, i) in heap]
        heap = []
        for i in remaining:
            gain = len(by_index[i].coverage_keys - covered)
            if gain > min_gain:
                heap.append((-gain, i))
        heapq.heapify(heap)
    return SelectionResult(tuple(selected), len(covered), tuple(gains))


def naive_greedy(candidates, max_views: int, min_gain: int = 0) -> SelectionResult:
    """Rescan-everything greedy; same tie rule, used as the selection oracle."""
    if max_views < 0:
        raise InputError(f"max_views must be >= 0, got {max_views}")
    by_index = _check_candidates(candidates)
    order = sorted(by_index)
    covered: set = set()
    selected: list = []
    gains: list = []
    while len(selected) < max_views:
        best_idx, best_gain = None, min_gain
        for idx in order:
            if idx in selected:
                continue
            gain = len(by_index[idx].coverage_keys - covered)
            if gain > best_gain:
                best_idx, best_gain = idx, gain
        if best_idx is None:
            break
        selected.append(best_idx)
        gains.append(best_gain)
        covered |= by_index[best_idx].coverage_keys
    return SelectionResult(tuple(selected), len(covered), tuple(gains))
