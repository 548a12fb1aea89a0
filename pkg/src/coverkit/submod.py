"""Greedy set-function maximization plus exact small-instance search.

The greedy drivers only ever call the utility through its subset
evaluator, so any deterministic nonnegative set function works. Matroid
constraints come in two shapes: pick at most N elements overall, or pick
at most one element from each agent's block.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import SearchSpaceTooLarge

SEARCH_CAP = 1_000_000


@dataclass(frozen=True)
class UniformMatroid:
    """Any subset of the ground set with at most ``limit`` elements."""

    ground: tuple
    limit: int

    def __post_init__(self):
        object.__setattr__(self, "ground", tuple(self.ground))
        if not 0 <= self.limit <= len(self.ground):
            raise ValueError("limit must lie between 0 and the ground set size")


@dataclass(frozen=True)
class PartitionMatroid:
    """At most one element from each block."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(b) for b in self.blocks)
        if any(len(b) == 0 for b in blocks):
            raise ValueError("every block needs at least one element")
        object.__setattr__(self, "blocks", blocks)


@dataclass
class GreedyTrace:
    """Elements in pick order with the marginal gain and running value."""

    chosen: list
    gains: np.ndarray
    values: np.ndarray


def _best_marginal(f, chosen, current, candidates):
    """First strict maximizer of the marginal gain, in candidate order."""
    best_gain, best_item, best_value = -np.inf, None, None
    for item in candidates:
        value = f(tuple(chosen) + (item,))
        gain = value - current
        if gain > best_gain:
            best_gain, best_item, best_value = gain, item, value
    return best_item, best_gain, best_value


def greedy_uniform(f, ground, n_pick: int) -> GreedyTrace:
    """Sequential greedy under a cardinality cap.

    Each round picks the element of largest marginal gain; ties go to
    the earliest element in ground-set order.
    """
    items = list(ground)
    if not 0 <= n_pick <= len(items):
        raise ValueError(f"cannot pick {n_pick} of {len(items)} elements")
    chosen: list = []
    gains, values = [], []
    current = float(f(()))
    for _ in range(n_pick):
        rest = [it for it in items if it not in chosen]
        item, gain, value = _best_marginal(f, chosen, current, rest)
        chosen.append(item)
        gains.append(gain)
        values.append(value)
        current = value
    return GreedyTrace(chosen=chosen, gains=np.array(gains), values=np.array(values))


def greedy_partition(f, blocks, order=None) -> GreedyTrace:
    """Sequential greedy picking one element per block.

    Blocks are visited in ascending index order unless ``order`` names a
    different visiting permutation.
    """
    blocks = [list(b) for b in blocks]
    if any(len(b) == 0 for b in blocks):
        raise ValueError("every block needs at least one element")
    if order is None:
        order = range(len(blocks))
    order = list(order)
    if sorted(order) != list(range(len(blocks))):
        raise ValueError("order must permute the block indices")
    chosen: list = []
    gains, values = [], []
    current = float(f(()))
    for i in order:
        item, gain, value = _best_marginal(f, chosen, current, blocks[i])
        chosen.append(item)
        gains.append(gain)
        values.append(value)
        current = value
    return GreedyTrace(chosen=chosen, gains=np.array(gains), values=np.array(values))


def _as_cloud(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def exemplar_utility(chosen, data, d_max: float, dist=None) -> float:
    """Drop in summed data-to-nearest-exemplar distance versus a phantom.

    Every data point starts at distance ``d_max`` (the phantom exemplar);
    adding real exemplars can only shrink its nearest distance, so the
    utility is monotone and submodular. ``dist`` defaults to Euclidean;
    a callable ``dist(exemplar, data_point)`` overrides it.
    """
    data = _as_cloud(data)
    if len(data) == 0:
        return 0.0
    chosen = _as_cloud(chosen) if len(chosen) else np.empty((0, data.shape[1]))
    if len(chosen) == 0:
        return 0.0
    if dist is None:
        dmat = cdist(data, chosen)
    else:
        dmat = np.array([[float(dist(p, d)) for p in chosen] for d in data])
    nearest = np.minimum(dmat.min(axis=1), d_max)
    return float(np.sum(d_max - nearest))


def exemplar_utility_fn(candidates, data, d_max: float, dist=None):
    """Index-subset evaluator over candidate exemplars, for the greedy drivers."""
    candidates = _as_cloud(candidates)

    def f(index_subset) -> float:
        idx = list(index_subset)
        if not idx:
            return 0.0
        return exemplar_utility(candidates[idx], data, d_max, dist)

    return f


def brute_force_opt(f, constraint):
    """Exhaustive maximizer under a matroid constraint; the greedy oracle."""
    if isinstance(constraint, UniformMatroid):
        count = math.comb(len(constraint.ground), constraint.limit)
        if count > SEARCH_CAP:
            raise SearchSpaceTooLarge(
                f"{count} subsets exceed the {SEARCH_CAP} enumeration cap")
        subsets = itertools.combinations(constraint.ground, constraint.limit)
    elif isinstance(constraint, PartitionMatroid):
        count = math.prod(len(b) for b in constraint.blocks)
        if count > SEARCH_CAP:
            raise SearchSpaceTooLarge(
                f"{count} combinations exceed the {SEARCH_CAP} enumeration cap")
        subsets = itertools.product(*constraint.blocks)
    else:
        raise TypeError("constraint must be a UniformMatroid or PartitionMatroid")

    best_set, best_value = None, -np.inf
    for subset in subsets:
        value = float(f(tuple(subset)))
        if value > best_value:
            best_set, best_value = tuple(subset), value
    return best_set, best_value
