import pytest

from poi_recommender.core.exceptions import BudgetExceededError, InvalidParameterError
from poi_recommender.privacy.budget import PrivacyBudget, PrivacyLedger, split_budget


class TestSplitBudget:
    def test_equal_split(self):
        budget = split_budget(1.0, 0.5)
        assert budget.transition_epsilon == 0.5
        assert budget.gradient_epsilon == 0.5
        assert budget.ratio == 0.5

    def test_uneven_split_sums_to_total(self):
        budget = split_budget(0.8, 0.1)
        assert budget.transition_epsilon == pytest.approx(0.08)
        assert budget.gradient_epsilon == pytest.approx(0.72)
        assert budget.transition_epsilon + budget.gradient_epsilon == pytest.approx(0.8, rel=1e-15)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_rejects_ratio_outside_open_interval(self, ratio):
        with pytest.raises(InvalidParameterError):
            split_budget(1.0, ratio)

    def test_rejects_bad_total(self):
        with pytest.raises(InvalidParameterError):
            split_budget(0.0, 0.5)

    def test_budget_must_sum(self):
        with pytest.raises(InvalidParameterError):
            PrivacyBudget(total_epsilon=1.0, transition_epsilon=0.5, gradient_epsilon=0.6)


class TestPrivacyLedger:
    def test_charges_accumulate(self):
        ledger = PrivacyLedger(owner="u1", allocated=1.0)
        ledger.charge("transition", 0.5)
        ledger.charge("gradient", 0.5)
        assert ledger.spent == pytest.approx(1.0)
        assert ledger.remaining == pytest.approx(0.0)
        assert ledger.count("gradient") == 1

    def test_overspend_raises(self):
        ledger = PrivacyLedger(owner="u1", allocated=1.0)
        ledger.charge("transition", 0.6)
        with pytest.raises(BudgetExceededError):
            ledger.charge("gradient", 0.5)
        assert ledger.count("gradient") == 0

    def test_many_small_charges_fit(self):
        ledger = PrivacyLedger(owner="u1", allocated=1.0)
        for _ in range(10):
            ledger.charge("gradient", 1.0 / 10)
        assert ledger.count("gradient") == 10
        with pytest.raises(BudgetExceededError):
            ledger.charge("gradient", 1e-3)
