"""Antenna position selection: assignments, equivalent channels and searches.

An assignment maps each of the M transmit antennas to a distinct candidate
position; the equivalent channel is the corresponding row selection of the
full tensor, shared by all subcarriers. Selection strategies range from
uniform random through greedy and exhaustive search to a cross-entropy
search driven by per-position inclusion weights.

Search routines score candidate subsets through a caller-supplied rate
oracle ``evaluator(indices) -> float`` that accepts any 1-D array of
distinct 0-based position indices; the achieved rate depends on the subset
only, not on its order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .scenario import ChannelTensor


@dataclass
class PositionAssignment:
    """Ordered antenna-to-position map with pairwise distinct entries."""

    indices: np.ndarray  # (M,) 0-based position indices

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)
        if self.indices.ndim != 1 or self.indices.size == 0:
            raise ValueError("assignment must be a nonempty 1-D index list")
        if len(np.unique(self.indices)) != self.indices.size:
            raise ValueError("assignment indices must be pairwise distinct")

    @property
    def num_antennas(self) -> int:
        return int(self.indices.size)


@dataclass
class EquivalentChannelTensor:
    """Channel seen by the selected antennas, indexed [user, subcarrier, antenna]."""

    values: np.ndarray  # (K, Nc, M) complex

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3:
            raise ValueError("equivalent channel must be shaped (K, Nc, M)")


@dataclass(frozen=True)
class CeoParams:
    """Cross-entropy search hyperparameters."""

    samples: int = 64
    elite_fraction: float = 0.2
    smoothing: float = 0.7
    iterations: int = 20

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if not 0.0 < self.elite_fraction < 1.0:
            raise ValueError("elite_fraction must lie in (0, 1)")
        if not 0.0 < self.smoothing <= 1.0:
            raise ValueError("smoothing must lie in (0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")


def apply_assignment(tensor: ChannelTensor, assignment: PositionAssignment) -> EquivalentChannelTensor:
    """Select the assigned rows of the channel tensor for every subcarrier."""
    n = tensor.values.shape[0]
    idx = assignment.indices
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError(f"assignment indices must lie in 0..{n - 1}")
    values = np.transpose(tensor.values[idx, :, :], (1, 2, 0))
    return EquivalentChannelTensor(values=values)


def sequential_unique_assign(scores: np.ndarray) -> PositionAssignment:
    """Column-by-column argmax with already-taken rows excluded.

    Ties break toward the lowest row index, so the result is deterministic
    for any finite score matrix.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise ValueError("scores must be an (N, M) matrix")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    n, m = scores.shape
    if n < m:
        raise ValueError("need at least as many positions as antennas")
    taken = np.zeros(n, dtype=bool)
    chosen = []
    for col in range(m):
        column = scores[:, col].copy()
        column[taken] = -np.inf
        row = int(np.argmax(column))
        chosen.append(row)
        taken[row] = True
    return PositionAssignment(indices=np.array(chosen, dtype=int))


def random_select(rng: np.random.Generator, num_positions: int, num_antennas: int) -> PositionAssignment:
    """Uniform draw of distinct positions without replacement."""
    if num_antennas < 1:
        raise ValueError("num_antennas must be at least 1")
    if num_antennas > num_positions:
        raise ValueError("cannot place more antennas than positions")
    return PositionAssignment(indices=rng.choice(num_positions, size=num_antennas, replace=False))


def exhaustive_select(tensor: ChannelTensor, num_antennas: int,
                      evaluator: Callable[[np.ndarray], float],
                      enumeration_limit: int = 100_000):
    """Score every subset and return the best one with its rate.

    Ties keep the lexicographically first subset. Refuses instances whose
    subset count exceeds ``enumeration_limit``.
    """
    n = tensor.values.shape[0]
    if num_antennas < 1 or num_antennas > n:
        raise ValueError(f"need 1 <= M <= N={n}")
    total = math.comb(n, num_antennas)
    if total > enumeration_limit:
        raise ValueError(
            f"C({n},{num_antennas}) = {total} subsets exceeds the enumeration limit {enumeration_limit}"
        )
    best_rate = -np.inf
    best_subset = None
    for subset in itertools.combinations(range(n), num_antennas):
        rate = float(evaluator(np.array(subset, dtype=int)))
        if rate > best_rate:
            best_rate = rate
            best_subset = subset
    return PositionAssignment(indices=np.array(best_subset, dtype=int)), best_rate


def greedy_select(tensor: ChannelTensor, num_antennas: int,
                  evaluator: Callable[[np.ndarray], float]) -> PositionAssignment:
    """Grow the subset one position at a time, keeping the best augmentation."""
    n = tensor.values.shape[0]
    if num_antennas < 1 or num_antennas > n:
        raise ValueError(f"need 1 <= M <= N={n}")
    chosen: list[int] = []
    for _ in range(num_antennas):
        best_rate = -np.inf
        best_pos = None
        for pos in range(n):
            if pos in chosen:
                continue
            rate = float(evaluator(np.array(chosen + [pos], dtype=int)))
            if rate > best_rate:
                best_rate = rate
                best_pos = pos
        chosen.append(best_pos)
    return PositionAssignment(indices=np.array(chosen, dtype=int))


def ceo_select(tensor: ChannelTensor, num_antennas: int,
               evaluator: Callable[[np.ndarray], float],
               params: CeoParams, rng: np.random.Generator,
               trace_out: Optional[list] = None) -> PositionAssignment:
    """Cross-entropy search over position subsets.

    Keeps one inclusion weight per position, uniform at start. Every batch
    draws ``params.samples`` distinct-index subsets by weighted sampling
    without replacement and scores them; after each of the
    ``params.iterations`` update steps the elite inclusion frequencies are
    blended into the weights with factor ``params.smoothing``. With zero
    iterations this reduces to the best of one uniform batch. Returns the
    best subset ever seen; ``trace_out``, when given, collects
    ``(batch_index, best_rate_so_far, weights)`` tuples.
    """
    n = tensor.values.shape[0]
    if num_antennas < 1 or num_antennas > n:
        raise ValueError(f"need 1 <= M <= N={n}")
    weights = np.full(n, 1.0 / n)
    num_elite = max(1, math.ceil(params.elite_fraction * params.samples))
    best_rate = -np.inf
    best_subset = None
    for batch in range(params.iterations + 1):
        probs = weights / weights.sum()
        subsets = [rng.choice(n, size=num_antennas, replace=False, p=probs)
                   for _ in range(params.samples)]
        rates = np.array([float(evaluator(s)) for s in subsets])
        order = np.argsort(-rates, kind="stable")
        if rates[order[0]] > best_rate:
            best_rate = float(rates[order[0]])
            best_subset = np.array(subsets[order[0]], dtype=int)
        if trace_out is not None:
            trace_out.append((batch, best_rate, weights.copy()))
        if batch == params.iterations:
            break
        freq = np.zeros(n)
        for e in order[:num_elite]:
            freq[subsets[e]] += 1.0
        freq /= num_elite
        weights = params.smoothing * freq + (1.0 - params.smoothing) * weights
    return PositionAssignment(indices=best_subset)
