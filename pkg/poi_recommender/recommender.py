"""
Client-side next-POI recommendation.

A user scores every candidate POI k with

    pref(k) = u^T v_k + v_current^T v_k

using only its own factors, its current location and the public V. Nothing
is sent to the server. Rankings break ties by ascending POI id.
"""

from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .core.exceptions import DomainError, InvalidParameterError


@dataclass(frozen=True)
class Recommendation:
    """Top-k POIs with their scores, best first."""

    ranked: Tuple[Tuple[int, float], ...]

    def __post_init__(self) -> None:
        pois = self.pois
        if len(set(pois)) != len(pois):
            raise InvalidParameterError("recommended POIs must be distinct")
        scores = self.scores
        if any(later > earlier for earlier, later in zip(scores, scores[1:])):
            raise InvalidParameterError("recommendation scores must be non-increasing")

    @property
    def pois(self) -> List[int]:
        return [poi for poi, _ in self.ranked]

    @property
    def scores(self) -> List[float]:
        return [score for _, score in self.ranked]

    def __len__(self) -> int:
        return len(self.ranked)


def _check_poi(poi: int, n: int, what: str) -> int:
    if not 0 <= poi < n:
        raise DomainError(f"{what} POI {poi} outside domain [0, {n})")
    return int(poi)


def preference(u: np.ndarray, current: int, candidate: int, V: np.ndarray) -> float:
    """
    Preference of a user at `current` for moving to `candidate`.

    Args:
        u: User factors
        current: Current POI id
        candidate: Candidate POI id
        V: Public POI factors

    Returns:
        float: u^T v_candidate + v_current^T v_candidate
    """
    n = V.shape[0]
    j = _check_poi(current, n, "current")
    k = _check_poi(candidate, n, "candidate")
    return float(np.dot(u, V[k]) + np.dot(V[j], V[k]))


def scores(u: np.ndarray, current: Optional[int], V: np.ndarray) -> np.ndarray:
    """Preference for every POI; without a current location only u^T v_k counts."""
    if u.shape != (V.shape[1],):
        raise InvalidParameterError(f"user factors have shape {u.shape}, V has {V.shape[1]} columns")
    result = V @ u
    if current is not None:
        result = result + V @ V[_check_poi(current, V.shape[0], "current")]
    return result


def _order(values: np.ndarray) -> np.ndarray:
    # stable sort of the negated scores keeps lower ids first among ties
    return np.argsort(-values, kind="stable")


def top_k(u: np.ndarray, current: Optional[int], V: np.ndarray, k: int) -> Recommendation:
    """
    The k highest-preference POIs over all n candidates.

    Args:
        u: User factors
        current: Current POI id, or None to score with u alone
        V: Public POI factors
        k: List length, 1 <= k <= n

    Returns:
        Recommendation: Ranked POIs, ties broken by ascending id
    """
    n = V.shape[0]
    if not 1 <= k <= n:
        raise InvalidParameterError(f"k must lie in [1, {n}], got {k}")
    values = scores(u, current, V)
    order = _order(values)[:k]
    return Recommendation(ranked=tuple((int(poi), float(values[poi])) for poi in order))


def _score_chunks(
    U: np.ndarray,
    currents: Optional[Sequence[int]],
    V: np.ndarray,
    chunk_size: int,
) -> Iterator[Tuple[slice, np.ndarray]]:
    m = U.shape[0]
    if currents is not None:
        current_ids = np.asarray(currents, dtype=np.int64)
        if current_ids.shape != (m,):
            raise InvalidParameterError("need one current POI per user")
        if current_ids.size and (current_ids.min() < 0 or current_ids.max() >= V.shape[0]):
            raise DomainError(f"current POI outside domain [0, {V.shape[0]})")
    for start in range(0, m, chunk_size):
        rows = slice(start, min(start + chunk_size, m))
        block = U[rows] @ V.T
        if currents is not None:
            block += V[current_ids[rows]] @ V.T
        yield rows, block


def rank_all(
    U: np.ndarray,
    currents: Optional[Sequence[int]],
    V: np.ndarray,
    k: Optional[int] = None,
    chunk_size: int = 1024,
) -> np.ndarray:
    """
    Batched top_k for every user of the simulation.

    Args:
        U: m x d user factors
        currents: Current POI per user, or None
        V: Public POI factors
        k: List length; all n POIs when None
        chunk_size: Users scored per matrix product

    Returns:
        np.ndarray: m x k POI ids, best first
    """
    n = V.shape[0]
    k = n if k is None else k
    if not 1 <= k <= n:
        raise InvalidParameterError(f"k must lie in [1, {n}], got {k}")
    out = np.empty((U.shape[0], k), dtype=np.int64)
    for rows, block in _score_chunks(U, currents, V, chunk_size):
        out[rows] = np.argsort(-block, axis=1, kind="stable")[:, :k]
    return out


def held_out_ranks(
    U: np.ndarray,
    currents: Optional[Sequence[int]],
    held_out: Sequence[int],
    V: np.ndarray,
    chunk_size: int = 1024,
) -> np.ndarray:
    """
    1-based position of each user's held-out POI in its full ranking.

    Equivalent to locating the POI in rank_all(..., k=n) without building
    the full rankings: rank = 1 + #higher scores + #equal scores at lower ids.

    Returns:
        np.ndarray: One rank per user
    """
    n = V.shape[0]
    targets = np.asarray(held_out, dtype=np.int64)
    if targets.shape != (U.shape[0],):
        raise InvalidParameterError("need one held-out POI per user")
    if targets.size and (targets.min() < 0 or targets.max() >= n):
        raise DomainError(f"held-out POI outside domain [0, {n})")
    ranks = np.empty(targets.shape[0], dtype=np.int64)
    ids = np.arange(n)
    for rows, block in _score_chunks(U, currents, V, chunk_size):
        chunk_targets = targets[rows]
        target_scores = block[np.arange(block.shape[0]), chunk_targets][:, None]
        higher = np.sum(block > target_scores, axis=1)
        tied_before = np.sum((block == target_scores) & (ids[None, :] < chunk_targets[:, None]), axis=1)
        ranks[rows] = 1 + higher + tied_before
    return ranks
