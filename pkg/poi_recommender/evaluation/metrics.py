"""
Ranking metrics against each user's held-out latest check-in.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import EvaluationError, InvalidParameterError
from ..recommender import held_out_ranks
from ..training.trainer import TrainResult
from ..utils.helpers import mean_of

Rankings = Union[Sequence[Sequence[int]], Mapping[str, Sequence[int]], np.ndarray]
HeldOut = Union[Sequence[int], Mapping[str, int], np.ndarray]


def _align(recommendations: Rankings, held_out: HeldOut) -> List[Tuple[Sequence[int], int]]:
    if isinstance(held_out, Mapping):
        if not isinstance(recommendations, Mapping):
            raise EvaluationError("recommendations must be keyed by user when held-out POIs are")
        pairs = []
        for user, target in held_out.items():
            ranking = recommendations.get(user)
            if ranking is None or len(ranking) == 0:
                raise EvaluationError(f"no recommendation for user {user}")
            pairs.append((ranking, int(target)))
        return pairs
    if isinstance(recommendations, Mapping):
        raise EvaluationError("held-out POIs must be keyed by user when recommendations are")
    if len(recommendations) != len(held_out):
        raise EvaluationError(f"{len(recommendations)} recommendation lists for {len(held_out)} users")
    pairs = []
    for index, (ranking, target) in enumerate(zip(recommendations, held_out)):
        if ranking is None or len(ranking) == 0:
            raise EvaluationError(f"no recommendation for user #{index}")
        pairs.append((ranking, int(target)))
    return pairs


def _check_k(k: int) -> int:
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    return k


def recall_at_k(recommendations: Rankings, held_out: HeldOut, k: int) -> float:
    """
    Fraction of users whose held-out POI is among their first k recommendations.

    Args:
        recommendations: Ranked POI ids per user, best first
        held_out: Each user's held-out POI
        k: Cut-off

    Returns:
        float: Recall@k in [0, 1]
    """
    _check_k(k)
    pairs = _align(recommendations, held_out)
    if not pairs:
        raise EvaluationError("no users to evaluate")
    hits = sum(1 for ranking, target in pairs if target in list(ranking[:k]))
    return hits / len(pairs)


def _reciprocal(ranking: Sequence[int], target: int, k: Optional[int]) -> float:
    ranked = list(ranking)
    if target not in ranked:
        if k is None:
            raise EvaluationError(f"ranking does not contain the held-out POI {target}")
        return 0.0
    position = ranked.index(target) + 1
    return 1.0 / position if k is None or position <= k else 0.0


def mrr(rankings: Rankings, held_out: HeldOut) -> float:
    """Mean reciprocal rank of the held-out POI over full rankings."""
    pairs = _align(rankings, held_out)
    if not pairs:
        raise EvaluationError("no users to evaluate")
    return mean_of([_reciprocal(ranking, target, None) for ranking, target in pairs])


def mrr_at_k(rankings: Rankings, held_out: HeldOut, k: int) -> float:
    """Mean reciprocal rank, counting 0 when the answer is below position k."""
    _check_k(k)
    pairs = _align(rankings, held_out)
    if not pairs:
        raise EvaluationError("no users to evaluate")
    return mean_of([_reciprocal(ranking, target, k) for ranking, target in pairs])


def recall_from_ranks(ranks: np.ndarray, k: int) -> float:
    _check_k(k)
    if ranks.size == 0:
        raise EvaluationError("no users to evaluate")
    return float(np.mean(ranks <= k))


def mrr_from_ranks(ranks: np.ndarray, k: Optional[int] = None) -> float:
    if ranks.size == 0:
        raise EvaluationError("no users to evaluate")
    reciprocal = 1.0 / ranks
    if k is not None:
        reciprocal = np.where(ranks <= _check_k(k), reciprocal, 0.0)
    return float(np.mean(reciprocal))


@dataclass
class MetricsReport:
    """Recall@k, MRR and MRR@k of one run, or their means over seeds."""

    recall_at: Dict[int, float]
    mrr: float
    mrr_at: Dict[int, float] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ks = sorted(self.recall_at)
        values = [self.recall_at[k] for k in ks]
        if any(not 0.0 <= value <= 1.0 for value in values) or not 0.0 <= self.mrr <= 1.0:
            raise EvaluationError("metrics must lie in [0, 1]")
        if any(later < earlier for earlier, later in zip(values, values[1:])):
            raise EvaluationError("recall must be non-decreasing in k")

    @property
    def ks(self) -> List[int]:
        return sorted(self.recall_at)


def evaluate_ranks(ranks: np.ndarray, ks: Sequence[int], metadata: Optional[Dict[str, Any]] = None) -> MetricsReport:
    return MetricsReport(
        recall_at={k: recall_from_ranks(ranks, k) for k in ks},
        mrr=mrr_from_ranks(ranks),
        mrr_at={k: mrr_from_ranks(ranks, k) for k in ks},
        metadata=dict(metadata or {}),
    )


def evaluate_result(result: TrainResult, ks: Sequence[int], metadata: Optional[Dict[str, Any]] = None) -> MetricsReport:
    """
    Score a trained model on every user's held-out check-in.

    Models trained with transitions rank by u^T v_k + v_current^T v_k with the
    last training POI as the current location; the baselines use u^T v_k.

    Args:
        result: Output of a trainer
        ks: Cut-offs
        metadata: Extra run description to attach

    Returns:
        MetricsReport: Metrics with the evaluated user count in the metadata
    """
    n = result.model.n
    for k in ks:
        if not 1 <= k <= n:
            raise InvalidParameterError(f"k must lie in [1, {n}], got {k}")
    currents = [c.current for c in result.clients] if result.uses_transitions else None
    ranks = held_out_ranks(result.U, currents, [c.held_out for c in result.clients], result.model.V)
    budget = result.config.budget
    info: Dict[str, Any] = {
        "method": result.method,
        "epsilon": budget.total_epsilon if budget is not None else None,
        "iterations": result.config.iterations,
        "seed": result.config.seed,
        "d": result.config.d,
        "evaluated_users": int(ranks.size),
    }
    info.update(metadata or {})
    return evaluate_ranks(ranks, ks, info)


def average_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean of every metric over runs that share the same ks."""
    if not reports:
        raise EvaluationError("no reports to average")
    ks = reports[0].ks
    if any(report.ks != ks for report in reports):
        raise EvaluationError("reports disagree on the evaluated ks")
    metadata = dict(reports[0].metadata)
    metadata.pop("seed", None)
    metadata["seed_count"] = len(reports)
    return MetricsReport(
        recall_at={k: mean_of([r.recall_at[k] for r in reports]) for k in ks},
        mrr=mean_of([r.mrr for r in reports]),
        mrr_at={k: mean_of([r.mrr_at.get(k, 0.0) for r in reports]) for k in ks},
        metadata=metadata,
    )
