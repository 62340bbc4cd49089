"""
Client-side feature extraction.

Everything here runs on a single user's history and never needs data from
another user.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..core.exceptions import DomainError, InvalidParameterError
from .checkins import CheckinHistory


@dataclass(frozen=True)
class Transition:
    """An ordered pair of consecutively visited POIs."""

    src: int
    dst: int

    def check(self, n: int) -> "Transition":
        if not (0 <= self.src < n and 0 <= self.dst < n):
            raise DomainError(f"transition {self.src}->{self.dst} outside domain [0, {n})")
        return self


@dataclass
class VisitCountRow:
    """Sparse visiting counts of one user."""

    counts: Dict[int, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def max_count(self) -> int:
        return max(self.counts.values(), default=0)

    def dense(self, n: int) -> np.ndarray:
        row = np.zeros(n, dtype=float)
        for poi, count in self.counts.items():
            row[poi] = count
        return row

    def normalized(self, n: int) -> np.ndarray:
        """Counts divided by this user's maximum count; all zeros without visits."""
        top = self.max_count
        row = self.dense(n)
        return row / top if top > 0 else row


def truncate_history(history: CheckinHistory, max_length: int) -> CheckinHistory:
    """Keep the latest max_length check-ins; 0 keeps everything."""
    if max_length < 0:
        raise InvalidParameterError("max_length must be >= 0")
    if max_length == 0 or len(history) <= max_length:
        return history
    return CheckinHistory(
        user_id=history.user_id,
        pois=history.pois[-max_length:],
        times=history.times[-max_length:],
    )


def split_train_test(history: CheckinHistory) -> Tuple[CheckinHistory, Tuple[int, float]]:
    """
    Hold out the latest check-in.

    Args:
        history: Full history, at least two check-ins

    Returns:
        Training prefix and the held-out (poi, time) check-in
    """
    if len(history) < 2:
        raise InvalidParameterError(f"user {history.user_id} needs at least 2 check-ins, has {len(history)}")
    train = CheckinHistory(user_id=history.user_id, pois=history.pois[:-1], times=history.times[:-1])
    return train, (history.pois[-1], history.times[-1])


def extract_visit_counts(history: CheckinHistory) -> VisitCountRow:
    counts: Dict[int, int] = {}
    for poi in history.pois:
        counts[poi] = counts.get(poi, 0) + 1
    return VisitCountRow(counts=counts)


def sample_transition(history: CheckinHistory, rng: np.random.Generator) -> Optional[Transition]:
    """
    Pick one consecutive pair uniformly at random.

    Args:
        history: Training history
        rng: The user's random source

    Returns:
        Transition or None when the history has fewer than two check-ins
    """
    if len(history) < 2:
        return None
    position = int(rng.integers(0, len(history) - 1))
    return Transition(src=history.pois[position], dst=history.pois[position + 1])
