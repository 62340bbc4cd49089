"""
Client-side training operations.

A simulated client keeps its check-ins, visiting counts and user factors to
itself. Per iteration it refreshes its factors with a closed-form ALS solve
against the public V, and, when scheduled, sends one perturbed gradient
report for a single sampled latent dimension.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..core.exceptions import DivergenceError, InvalidParameterError, NumericalError
from ..data.checkins import CheckinDataset, CheckinHistory
from ..data.features import VisitCountRow, extract_visit_counts, split_train_test
from ..privacy.budget import PrivacyLedger
from ..privacy.mechanisms import make_pm_params, pm_perturb
from ..utils.helpers import derive_seed, spawn_rngs
from .model import init_profile

# |u| components above this mean the run has diverged
MAX_PROFILE_MAGNITUDE = 1e3


@dataclass
class PrivateProfile:
    """State a client never shares: user factors and visiting counts."""

    u: np.ndarray
    visit_row: VisitCountRow
    n: int

    @property
    def normalized_row(self) -> np.ndarray:
        return self.visit_row.normalized(self.n)

    @property
    def has_visits(self) -> bool:
        return self.visit_row.total > 0


@dataclass(frozen=True)
class GradientReport:
    """Perturbed d * e_ij * u[t] for every POI j, for one sampled dimension t."""

    dim: int
    contributions: np.ndarray


@dataclass
class SimulatedClient:
    """One user of the simulation with its own random source and ledger."""

    index: int
    user_id: str
    train: CheckinHistory
    held_out: int
    profile: PrivateProfile
    rng: np.random.Generator
    ledger: Optional[PrivacyLedger] = None

    @property
    def current(self) -> int:
        """Latest training POI, used as the user's current location."""
        return self.train.pois[-1]


def build_clients(
    dataset: CheckinDataset,
    d: int,
    seed: int,
    allocated_epsilon: Optional[float] = None,
) -> List[SimulatedClient]:
    """
    Split every history and set up one simulated client per user.

    Args:
        dataset: Histories with at least two check-ins each
        d: Latent dimension for the initial user factors
        seed: Master seed; each client gets an independent child stream
        allocated_epsilon: Per-client budget, None in the non-private mode

    Returns:
        List[SimulatedClient]: Clients in dataset order
    """
    rngs = spawn_rngs(derive_seed(seed, "clients"), len(dataset))
    clients: List[SimulatedClient] = []
    for index, (history, rng) in enumerate(zip(dataset, rngs)):
        train, (held_out, _) = split_train_test(history)
        u = init_profile(d, rng)
        clients.append(
            SimulatedClient(
                index=index,
                user_id=history.user_id,
                train=train,
                held_out=held_out,
                profile=PrivateProfile(u=u, visit_row=extract_visit_counts(train), n=dataset.n),
                rng=rng,
                ledger=PrivacyLedger(owner=history.user_id, allocated=allocated_epsilon)
                if allocated_epsilon is not None
                else None,
            )
        )
    return clients


def preference_matrix(clients: Sequence[SimulatedClient], n: int) -> sp.csr_matrix:
    """
    Stack normalised visiting counts into a sparse m x n matrix.

    Only the simulation harness builds this, for exact diagnostics.
    """
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for i, client in enumerate(clients):
        top = client.profile.visit_row.max_count
        for poi, count in client.profile.visit_row.counts.items():
            rows.append(i)
            cols.append(poi)
            vals.append(count / top)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(clients), n))


def _gram(V: np.ndarray, regularization: float) -> np.ndarray:
    d = V.shape[1]
    A = V.T @ V + regularization * np.eye(d)
    if np.linalg.matrix_rank(A) < d:
        raise NumericalError("V^T V + lambda I is singular; use lambda > 0 or a full-rank V")
    return A


def als_update_user(profile: PrivateProfile, V: np.ndarray, regularization: float) -> np.ndarray:
    """
    Closed-form ridge solve u^T = P_i V (V^T V + lambda I)^{-1}.

    Args:
        profile: The client's private state; normalised counts are the target row
        V: Public POI factors
        regularization: lambda

    Returns:
        np.ndarray: New user factors
    """
    if not np.all(np.isfinite(V)):
        raise NumericalError("V contains non-finite values")
    A = _gram(V, regularization)
    try:
        return np.linalg.solve(A, V.T @ profile.normalized_row)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"ALS solve failed: {e}") from e


def als_update_users(R: sp.spmatrix, V: np.ndarray, regularization: float, U: np.ndarray) -> np.ndarray:
    """
    Batched als_update_user over all clients of the simulation.

    Users without visits skip the solve and keep their current factors.

    Args:
        R: Sparse m x n normalised counts
        V: Public POI factors
        regularization: lambda
        U: Current m x d user factors; rows of users without visits are kept

    Returns:
        np.ndarray: Updated m x d user factors
    """
    if not np.all(np.isfinite(V)):
        raise NumericalError("V contains non-finite values")
    A = _gram(V, regularization)
    try:
        solved = np.linalg.solve(A, np.asarray(R @ V).T).T
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"ALS solve failed: {e}") from e
    active = np.asarray(R.getnnz(axis=1) > 0)
    return np.where(active[:, None], solved, U)


def client_gradient_report(
    profile: PrivateProfile,
    V: np.ndarray,
    epsilon2: float,
    rng: np.random.Generator,
) -> GradientReport:
    """
    Perturb one latent dimension of the user's gradient with the Piecewise Mechanism.

    For every POI j the prediction error e_ij = r_ij - u^T v_j is clamped to
    [-1, 1], perturbed, and scaled to d * e_hat_ij * u[t].

    Args:
        profile: The client's private state
        V: Public POI factors
        epsilon2: Gradient budget for this report
        rng: The client's random source

    Returns:
        GradientReport: Sampled dimension and per-POI contributions

    Raises:
        DivergenceError: If the user factors have blown up
    """
    u = profile.u
    if not np.all(np.isfinite(u)) or np.max(np.abs(u), initial=0.0) > MAX_PROFILE_MAGNITUDE:
        raise DivergenceError(f"user factors exceed {MAX_PROFILE_MAGNITUDE:g}")
    d = u.shape[0]
    if V.shape[1] != d:
        raise InvalidParameterError(f"V has {V.shape[1]} columns, profile has {d}")

    params = make_pm_params(epsilon2)
    t = int(rng.integers(0, d))
    errors = np.clip(profile.normalized_row - V @ u, -1.0, 1.0)
    perturbed = pm_perturb(errors, params, rng)
    return GradientReport(dim=t, contributions=d * perturbed * u[t])
