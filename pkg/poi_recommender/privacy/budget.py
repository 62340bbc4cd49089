"""
Privacy budget splitting and per-client accounting.

Budgets compose sequentially: a client running mechanisms with budgets
eps_1..eps_n is sum(eps_i)-LDP overall. The ledger records each charge and
refuses charges that would exceed the client's allocation.
"""

import math
from dataclasses import dataclass, field
from typing import List, Tuple

from ..core.exceptions import BudgetExceededError, InvalidParameterError
from .mechanisms import check_epsilon

# Tolerance for float sums of budget shares, e.g. k charges of eps/k
_SLACK = 1e-9


@dataclass(frozen=True)
class PrivacyBudget:
    """Total budget and its split between transition and gradient reports."""

    total_epsilon: float
    transition_epsilon: float
    gradient_epsilon: float

    def __post_init__(self) -> None:
        for name in ("total_epsilon", "transition_epsilon", "gradient_epsilon"):
            if not getattr(self, name) > 0.0:
                raise InvalidParameterError(f"{name} must be > 0")
        if not math.isclose(
            self.transition_epsilon + self.gradient_epsilon,
            self.total_epsilon,
            rel_tol=4 * 2.0**-52,
            abs_tol=0.0,
        ):
            raise InvalidParameterError("transition and gradient budgets must sum to the total")

    @property
    def ratio(self) -> float:
        return self.transition_epsilon / self.total_epsilon


def split_budget(total: float, ratio_transition: float) -> PrivacyBudget:
    """
    Split a total budget between transition collection and gradient reports.

    Args:
        total: Total budget per user
        ratio_transition: Share for transition collection, strictly in (0, 1)

    Returns:
        PrivacyBudget: (ratio * total, total - ratio * total)
    """
    eps = check_epsilon(total)
    ratio = float(ratio_transition)
    if not (0.0 < ratio < 1.0) or not math.isfinite(ratio):
        raise InvalidParameterError(f"ratio_transition must lie in (0, 1), got {ratio_transition!r}")
    transition = ratio * eps
    return PrivacyBudget(total_epsilon=eps, transition_epsilon=transition, gradient_epsilon=eps - transition)


@dataclass
class PrivacyLedger:
    """Budget spent by one simulated client."""

    owner: str
    allocated: float
    charges: List[Tuple[str, float]] = field(default_factory=list)

    @property
    def spent(self) -> float:
        return math.fsum(eps for _, eps in self.charges)

    @property
    def remaining(self) -> float:
        return self.allocated - self.spent

    def count(self, mechanism: str) -> int:
        """Number of charges recorded for one mechanism."""
        return sum(1 for name, _ in self.charges if name == mechanism)

    def charge(self, mechanism: str, epsilon: float) -> None:
        """
        Record that a mechanism ran with the given budget.

        Args:
            mechanism: Name of the mechanism, e.g. "transition" or "gradient"
            epsilon: Budget consumed

        Raises:
            BudgetExceededError: If the charge would exceed the allocation
        """
        eps = check_epsilon(epsilon)
        if self.spent + eps > self.allocated * (1.0 + _SLACK) + _SLACK:
            raise BudgetExceededError(
                f"client {self.owner} would spend {self.spent + eps:.6g} of {self.allocated:.6g}"
            )
        self.charges.append((mechanism, eps))
