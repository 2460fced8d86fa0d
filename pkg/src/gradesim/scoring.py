"""Score arithmetic, disagreement rules and consensus pooling.

A reading is a length-24 integer vector of ordinal corner grades in
``{0, 1, 2, 3}``; ``MISSING`` (-1) marks a corner that could not be graded.
Missing corners never enter arithmetic.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

N_CORNERS = 24
MAX_GRADE = 3
MAX_TOTAL = N_CORNERS * MAX_GRADE
MISSING = -1


class IncompleteReading(ValueError):
    """Raised when arithmetic is requested on a reading with missing corners."""


class MissingBatchContext(ValueError):
    pass


class EmptyPool(ValueError):
    pass


def corner_vector(values) -> np.ndarray:
    """Validate ``values`` and return them as an int8 corner vector.

    ``None`` entries are mapped to ``MISSING``.
    """
    arr = np.array([MISSING if v is None else v for v in values], dtype=np.int64)
    if arr.shape != (N_CORNERS,):
        raise ValueError(f"a reading has exactly {N_CORNERS} corners, got {arr.size}")
    bad = (arr != MISSING) & ((arr < 0) | (arr > MAX_GRADE))
    if bad.any():
        raise ValueError(f"corner grades must lie in 0..{MAX_GRADE}: {arr[bad].tolist()}")
    return arr.astype(np.int8)


def is_complete(reading: np.ndarray) -> bool:
    return bool((np.asarray(reading) != MISSING).all())


def total_score(reading) -> int:
    reading = np.asarray(reading)
    if reading.shape != (N_CORNERS,):
        raise ValueError(f"a reading has exactly {N_CORNERS} corners")
    if not is_complete(reading):
        raise IncompleteReading("reading has missing corners; route it through the missingness logic")
    return int(reading.sum(dtype=np.int64))


def worsening(baseline: float, followup: float) -> float:
    """Follow-up total minus baseline total (negative values are legitimate read noise)."""
    return float(followup) - float(baseline)


@dataclass(frozen=True)
class Threshold:
    """Disagreement when two totals differ by more than ``delta``."""

    delta: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("threshold delta must be >= 0")


@dataclass(frozen=True)
class Percentile:
    """Disagreement when a discrepancy is among the top ``q`` fraction of its batch."""

    q: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError("percentile q must lie in (0, 1]")


DisagreementRule = Threshold | Percentile


def percentile_cut(discrepancies: Sequence[float], q: float) -> float:
    """Smallest absolute discrepancy that still belongs to the top ``q`` fraction.

    The top ``ceil(q * N)`` items are kept; every item tied with the last kept
    one is kept too.
    """
    d = np.sort(np.abs(np.asarray(discrepancies, dtype=float)))[::-1]
    if d.size == 0:
        raise MissingBatchContext("percentile rule needs a non-empty batch of discrepancies")
    k = max(1, math.ceil(q * d.size - 1e-12))
    return float(d[min(k, d.size) - 1])


def is_disagreement(t1: float, t2: float, rule: DisagreementRule, batch_context: Sequence[float] | None = None) -> bool:
    gap = abs(float(t1) - float(t2))
    if isinstance(rule, Threshold):
        return gap > rule.delta
    if isinstance(rule, Percentile):
        if batch_context is None:
            raise MissingBatchContext("percentile rule requires the batch discrepancy list")
        # a pair that agrees exactly is never sent to adjudication
        return gap > 0 and gap >= percentile_cut(batch_context, rule.q)
    raise TypeError(f"unknown disagreement rule: {rule!r}")


class PoolingPolicy(str, enum.Enum):
    MEAN_ALL = "mean_all"
    MEAN_EXCLUDING_ARBITRATOR = "mean_excluding_arbitrator"
    ARBITRATOR_OVERRIDES = "arbitrator_overrides"


def pool_consensus(reads: Sequence[float], policy: PoolingPolicy = PoolingPolicy.MEAN_ALL,
                   arbitrator_index: int | None = None) -> float:
    """Pool total scores into a real-valued consensus (never rounded)."""
    reads = [float(r) for r in reads]
    if not reads:
        raise EmptyPool("cannot pool an empty list of reads")
    if arbitrator_index is not None and not -len(reads) <= arbitrator_index < len(reads):
        raise IndexError(f"arbitrator index {arbitrator_index} out of range for {len(reads)} reads")
    policy = PoolingPolicy(policy)

    if policy is PoolingPolicy.MEAN_ALL or arbitrator_index is None:
        return math.fsum(reads) / len(reads)
    if policy is PoolingPolicy.ARBITRATOR_OVERRIDES:
        return reads[arbitrator_index]
    rest = [r for i, r in enumerate(reads) if i != arbitrator_index % len(reads)]
    if not rest:
        raise EmptyPool("no reads left once the arbitrator is excluded")
    return math.fsum(rest) / len(rest)
