import math

import numpy as np
import pytest

from gradesim.scoring import (MISSING, EmptyPool, IncompleteReading, MissingBatchContext, Percentile, PoolingPolicy,
                              Threshold, corner_vector, is_disagreement, percentile_cut, pool_consensus, total_score,
                              worsening)


def test_total_score_examples():
    assert total_score(np.zeros(24, dtype=int)) == 0
    assert total_score(np.full(24, 3)) == 72
    assert total_score([3, 1] + [0] * 21 + [2]) == 6


def test_total_score_rejects_missing_and_wrong_length():
    reading = corner_vector([None] + [1] * 23)
    assert reading[0] == MISSING
    with pytest.raises(IncompleteReading):
        total_score(reading)
    with pytest.raises(ValueError):
        total_score([0] * 23)


def test_corner_vector_validates_grades():
    with pytest.raises(ValueError):
        corner_vector([4] + [0] * 23)
    with pytest.raises(ValueError):
        corner_vector([0] * 25)


def test_worsening():
    assert worsening(10, 10) == 0
    assert worsening(10, 12) == 2
    assert worsening(12, 10) == -2


def test_threshold_rule():
    assert not is_disagreement(10, 10, Threshold(0))
    assert is_disagreement(10, 12, Threshold(1))
    assert not is_disagreement(10, 11, Threshold(1))
    with pytest.raises(ValueError):
        Threshold(-1)


def test_percentile_rule_illustration():
    batch = [0, 0, 1, 5, 9]
    flags = [is_disagreement(0, d, Percentile(0.2), batch) for d in batch]
    assert flags == [False, False, False, False, True]


def _rank_oracle(batch, q):
    """Flags by sorting: keep the top ceil(qN) discrepancies and everything tied with the last."""
    order = sorted(batch, reverse=True)
    k = math.ceil(q * len(batch))
    cut = order[k - 1]
    return [d >= cut and d > 0 for d in batch]


@pytest.mark.parametrize("seed", range(20))
def test_percentile_matches_rank_oracle(seed):
    rng = np.random.default_rng(seed)
    batch = rng.integers(0, 12, size=rng.integers(1, 400)).tolist()
    q = float(rng.choice([0.05, 0.1, 0.33, 1.0]))
    got = [is_disagreement(0, d, Percentile(q), batch) for d in batch]
    assert got == _rank_oracle(batch, q)


def test_percentile_ties_are_expanded():
    batch = [1, 2, 3, 3, 3]
    assert percentile_cut(batch, 0.2) == 3
    assert sum(is_disagreement(0, d, Percentile(0.2), batch) for d in batch) == 3


def test_percentile_needs_context():
    with pytest.raises(MissingBatchContext):
        is_disagreement(1, 2, Percentile(0.05))
    with pytest.raises(ValueError):
        Percentile(0)


def test_pooling_policies():
    assert pool_consensus([10, 12]) == 11.0
    assert pool_consensus([36, 10, 10]) == pytest.approx(56 / 3)
    assert round(pool_consensus([36, 10, 10]), 2) == 18.67
    for policy in PoolingPolicy:
        assert pool_consensus([0, 0, 0], policy, 2) == 0
    assert pool_consensus([36, 10, 14], PoolingPolicy.MEAN_EXCLUDING_ARBITRATOR, 2) == 23
    assert pool_consensus([36, 10, 14], PoolingPolicy.ARBITRATOR_OVERRIDES, 2) == 14
    assert pool_consensus([36, 10], PoolingPolicy.ARBITRATOR_OVERRIDES, None) == 23


def test_empty_pool():
    with pytest.raises(EmptyPool):
        pool_consensus([])
