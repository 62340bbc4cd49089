"""
Baselines that factorise the user-POI matrix alone.

NPB is plain SGD matrix factorisation without any privacy. PB follows the
same model but every user submits a Piecewise-Mechanism-perturbed gradient
in every iteration, spending eps/k per submission.
"""

from typing import Optional

import numpy as np
import scipy.sparse as sp
from tqdm import tqdm

from ..core.exceptions import DivergenceError
from ..data.checkins import CheckinDataset
from ..utils.helpers import derive_seed
from ..utils.logging import setup_logging
from .client import als_update_users, build_clients, client_gradient_report, preference_matrix
from .model import TrainConfig, init_model
from .optimizers import GradientDescent
from .server import apply_gradient, estimate_user_term, exact_user_term
from .trainer import GRADIENT, MAX_FACTOR_MAGNITUDE, TrainResult

logger = setup_logging(__name__)


def sgd_factorize(
    R: sp.csr_matrix,
    U: np.ndarray,
    V: np.ndarray,
    gamma: float,
    regularization: float,
    epochs: int,
    rng: np.random.Generator,
    show_progress: bool = False,
) -> None:
    """
    Fit R ~ U V^T with stochastic gradient steps, one user row at a time.

    Each step takes the whole row r_i, including unvisited POIs as zeros:

        e   = r_i - V u_i
        u_i <- u_i + gamma (V^T e - lambda u_i)
        V   <- V + gamma (e u_i^T - lambda V)

    Args:
        R: Sparse m x n target
        U: m x d user factors, updated in place
        V: n x d POI factors, updated in place
        gamma: Learning rate
        regularization: lambda
        epochs: Passes over the users, each in a fresh random order
        rng: Source of the visiting order
        show_progress: Draw a progress bar over epochs
    """
    m, n = R.shape
    indptr, indices, data = R.indptr, R.indices, R.data
    row = np.zeros(n)
    for _ in tqdm(range(epochs), desc="npb", leave=False, disable=not show_progress):
        for i in rng.permutation(m):
            start, end = indptr[i], indptr[i + 1]
            row[:] = 0.0
            row[indices[start:end]] = data[start:end]
            u = U[i].copy()
            error = row - V @ u
            U[i] += gamma * (V.T @ error - regularization * u)
            V += gamma * (np.outer(error, u) - regularization * V)
        if not (np.all(np.isfinite(V)) and np.max(np.abs(V)) <= MAX_FACTOR_MAGNITUDE):
            raise DivergenceError(f"SGD diverged with gamma={gamma:g}")


def train_npb(dataset: CheckinDataset, config: TrainConfig, show_progress: bool = False) -> TrainResult:
    """
    Non-private baseline: SGD factorisation of the normalised visiting counts.

    Args:
        dataset: Histories with at least two check-ins each
        config: d, gamma, epochs, regularization and seed are used; the budget is ignored

    Returns:
        TrainResult: Model and user factors
    """
    clients = build_clients(dataset, config.d, config.seed)
    R = preference_matrix(clients, dataset.n)
    model = init_model(dataset.n, config.d, derive_seed(config.seed, "model"))
    U = np.vstack([c.profile.u for c in clients])
    logger.info(f"Training npb on {len(clients)} users, {dataset.n} POIs, d={config.d}, {config.epochs} epochs")

    V = model.V.copy()
    sgd_factorize(
        R,
        U,
        V,
        gamma=config.gamma,
        regularization=config.regularization,
        epochs=config.epochs,
        rng=np.random.default_rng(derive_seed(config.seed, "npb-order")),
        show_progress=show_progress,
    )
    model.V = V
    for client in clients:
        client.profile.u = U[client.index]
    return TrainResult(method="npb", model=model, clients=clients, U=U, config=config)


def train_pb(dataset: CheckinDataset, config: TrainConfig, show_progress: bool = False) -> TrainResult:
    """
    Private baseline: every user reports a perturbed gradient in every iteration.

    Users refresh their factors with local ALS, then report at eps/k, so k
    iterations spend exactly eps. The server steps V along the mean of the
    reported gradients. Without a budget the exact mean gradient is used.

    Args:
        dataset: Histories with at least two check-ins each
        config: d, gamma, iterations, regularization, seed and budget are used

    Returns:
        TrainResult: Model, user factors and the clients' ledgers
    """
    budget = config.budget
    k = config.iterations
    per_iteration: Optional[float] = budget.total_epsilon / k if budget is not None else None

    clients = build_clients(
        dataset,
        config.d,
        config.seed,
        allocated_epsilon=budget.total_epsilon if budget is not None else None,
    )
    m = len(clients)
    R = preference_matrix(clients, dataset.n)
    model = init_model(dataset.n, config.d, derive_seed(config.seed, "model"))
    U = np.vstack([c.profile.u for c in clients])
    optimizer = GradientDescent(lr=config.gamma)
    logger.info(
        f"Training pb on {m} users, {dataset.n} POIs, d={config.d}, k={k}, "
        f"{'epsilon/k=' + format(per_iteration, 'g') if per_iteration else 'non-private'}"
    )

    for _ in tqdm(range(k), desc="pb", leave=False, disable=not show_progress):
        U = als_update_users(R, model.V, config.regularization, U)
        if per_iteration is None:
            user_term = exact_user_term(R, U, model.V) / m
        else:
            reports = []
            for client in clients:
                client.profile.u = U[client.index]
                client.ledger.charge(GRADIENT, per_iteration)
                reports.append(client_gradient_report(client.profile, model.V, per_iteration, client.rng))
            user_term = estimate_user_term(reports, model.n, model.d, population=1)
        model = apply_gradient(model, user_term + 2.0 * config.regularization * model.V, optimizer)
        if not model.is_finite():
            raise DivergenceError(f"V diverged with gamma={config.gamma:g}")

    U = als_update_users(R, model.V, config.regularization, U)
    for client in clients:
        client.profile.u = U[client.index]
    return TrainResult(method="pb", model=model, clients=clients, U=U, config=config)
