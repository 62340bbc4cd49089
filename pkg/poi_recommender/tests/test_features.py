import numpy as np
import pytest

from poi_recommender.core.exceptions import InvalidParameterError
from poi_recommender.data.checkins import CheckinHistory
from poi_recommender.data.features import (
    Transition,
    extract_visit_counts,
    sample_transition,
    split_train_test,
    truncate_history,
)


def history(*pois):
    return CheckinHistory.from_checkins("u", [(p, float(t)) for t, p in enumerate(pois)])


class TestSplitTrainTest:
    def test_holds_out_latest(self):
        train, (poi, time) = split_train_test(history(4, 2, 7))
        assert train.pois == (4, 2)
        assert (poi, time) == (7, 2.0)

    def test_two_checkins(self):
        train, (poi, _) = split_train_test(history(1, 3))
        assert train.pois == (1,)
        assert poi == 3

    def test_too_short(self):
        with pytest.raises(InvalidParameterError):
            split_train_test(history(1))


class TestVisitCounts:
    def test_counts_and_normalisation(self):
        row = extract_visit_counts(history(0, 2, 2, 5))
        assert row.counts == {0: 1, 2: 2, 5: 1}
        np.testing.assert_allclose(row.normalized(6), [0.5, 0, 1.0, 0, 0, 0.5])

    def test_empty_history(self):
        row = extract_visit_counts(CheckinHistory(user_id="x", pois=(), times=()))
        assert row.total == 0
        np.testing.assert_array_equal(row.normalized(3), np.zeros(3))


class TestSampleTransition:
    def test_single_pair(self, rng):
        assert sample_transition(history(3, 8), rng) == Transition(3, 8)

    def test_none_for_single_checkin(self, rng):
        assert sample_transition(history(3), rng) is None

    def test_uniform_over_pairs(self, rng):
        h = history(0, 1, 2, 3)
        draws = [sample_transition(h, rng) for _ in range(6000)]
        for pair in [Transition(0, 1), Transition(1, 2), Transition(2, 3)]:
            assert draws.count(pair) / 6000 == pytest.approx(1 / 3, abs=0.03)


def test_truncate_keeps_latest():
    h = history(1, 2, 3, 4, 5)
    assert truncate_history(h, 3).pois == (3, 4, 5)
    assert truncate_history(h, 0) is h
    assert truncate_history(h, 10) is h
