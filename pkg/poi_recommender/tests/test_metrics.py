import numpy as np
import pytest

from poi_recommender.core.exceptions import EvaluationError, InvalidParameterError
from poi_recommender.evaluation.metrics import (
    MetricsReport,
    average_reports,
    evaluate_ranks,
    evaluate_result,
    mrr,
    mrr_at_k,
    mrr_from_ranks,
    recall_at_k,
    recall_from_ranks,
)
from poi_recommender.recommender import rank_all
from poi_recommender.training.model import TrainConfig
from poi_recommender.training.trainer import train_spirel


class TestListMetrics:
    def test_all_hits(self):
        assert recall_at_k([[3, 1], [0, 2]], [3, 0], 1) == 1.0
        assert mrr([[3, 1], [0, 2]], [3, 0]) == 1.0

    def test_second_place(self):
        assert mrr([[1, 4, 2]], [4]) == 0.5
        assert recall_at_k([[1, 4, 2]], [4], 1) == 0.0
        assert mrr_at_k([[1, 4, 2]], [4], 1) == 0.0

    def test_mapping_input(self):
        rankings = {"a": [0, 1, 2], "b": [2, 1, 0]}
        assert recall_at_k(rankings, {"a": 1, "b": 2}, 1) == 0.5

    def test_missing_user(self):
        with pytest.raises(EvaluationError):
            recall_at_k({"a": [0, 1]}, {"a": 0, "b": 1}, 1)
        with pytest.raises(EvaluationError):
            recall_at_k([[0, 1], []], [0, 1], 1)
        with pytest.raises(EvaluationError):
            mrr([[0, 1]], [5])

    def test_bad_k(self):
        with pytest.raises(InvalidParameterError):
            recall_at_k([[0]], [0], 0)


class TestRankMetrics:
    def test_uniform_ranks(self):
        ranks = np.arange(1, 11)
        assert mrr_from_ranks(ranks) == pytest.approx(sum(1 / r for r in range(1, 11)) / 10)
        assert mrr_from_ranks(ranks) == pytest.approx(0.2929, abs=1e-4)
        assert recall_from_ranks(ranks, 3) == pytest.approx(0.3)
        assert recall_from_ranks(ranks, 10) == 1.0

    def test_truncated_mrr(self):
        assert mrr_from_ranks(np.array([1, 2, 5]), k=2) == pytest.approx(0.5)

    def test_agrees_with_list_metrics(self, rng):
        V, U = rng.normal(size=(8, 3)), rng.normal(size=(40, 3))
        targets = rng.integers(8, size=40)
        rankings = rank_all(U, None, V)
        ranks = np.array([int(np.where(rankings[i] == targets[i])[0][0]) + 1 for i in range(40)])
        for k in (1, 3, 8):
            assert recall_from_ranks(ranks, k) == pytest.approx(recall_at_k(rankings, targets, k))
            assert mrr_from_ranks(ranks, k) == pytest.approx(mrr_at_k(rankings, targets, k))
        assert mrr_from_ranks(ranks) == pytest.approx(mrr(rankings, targets))

    def test_mrr_dominates_recall_at_one(self, rng):
        ranks = rng.integers(1, 20, size=200)
        report = evaluate_ranks(ranks, [1, 5, 10])
        assert report.mrr >= report.recall_at[1]
        assert report.recall_at[1] <= report.recall_at[5] <= report.recall_at[10]

    def test_empty(self):
        with pytest.raises(EvaluationError):
            recall_from_ranks(np.array([], dtype=int), 1)


class TestReports:
    def test_rejects_out_of_range(self):
        with pytest.raises(EvaluationError):
            MetricsReport(recall_at={1: 1.5}, mrr=0.5)

    def test_rejects_decreasing_recall(self):
        with pytest.raises(EvaluationError):
            MetricsReport(recall_at={1: 0.5, 3: 0.2}, mrr=0.5)

    def test_average(self):
        first = MetricsReport(recall_at={3: 0.2}, mrr=0.1, mrr_at={3: 0.1}, metadata={"method": "npb", "seed": 0})
        second = MetricsReport(recall_at={3: 0.4}, mrr=0.3, mrr_at={3: 0.2}, metadata={"method": "npb", "seed": 1})
        mean = average_reports([first, second])
        assert mean.recall_at[3] == pytest.approx(0.3)
        assert mean.mrr == pytest.approx(0.2)
        assert mean.metadata == {"method": "npb", "seed_count": 2}

    def test_average_needs_same_ks(self):
        with pytest.raises(EvaluationError):
            average_reports([MetricsReport({3: 0.2}, 0.1), MetricsReport({5: 0.2}, 0.1)])
        with pytest.raises(EvaluationError):
            average_reports([])


class TestEvaluateResult:
    def test_report_for_trained_model(self, small_dataset):
        result = train_spirel(small_dataset, TrainConfig(d=3, gamma=0.05, iterations=3))
        report = evaluate_result(result, [1, 3, 12], {"dataset": "ring"})
        assert report.recall_at[12] == 1.0
        assert report.metadata["evaluated_users"] == small_dataset.m
        assert report.metadata["epsilon"] is None
        assert report.metadata["dataset"] == "ring"

    def test_k_beyond_domain(self, small_dataset):
        result = train_spirel(small_dataset, TrainConfig(d=3, gamma=0.05, iterations=2))
        with pytest.raises(InvalidParameterError):
            evaluate_result(result, [13])
