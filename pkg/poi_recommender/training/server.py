"""
Server-side updates of the POI latent matrix.

The joint objective is

    L(U, V) = ||P - U V^T||^2 + ||Q - V V^T||^2 + lambda (||U||^2 + ||V||^2)

The server cannot see P or U. It estimates the user term of dL/dV from the
perturbed gradient reports of one user group, computes the POI-POI term and
the regulariser itself, and steps V with the configured optimizer.
"""

from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from ..core.exceptions import InvalidParameterError, ProtocolError, SchedulingError
from .client import GradientReport
from .model import AdamState, LatentModel, TrainConfig
from .optimizers import Adam, GradientDescent, Optimizer

Matrix = Union[np.ndarray, sp.spmatrix]


def joint_objective(P: Matrix, Q: np.ndarray, U: np.ndarray, V: np.ndarray, regularization: float) -> float:
    """Value of the joint factorisation objective."""
    residual_p = _dense(P) - U @ V.T
    residual_q = Q - V @ V.T
    return float(
        np.sum(residual_p**2)
        + np.sum(residual_q**2)
        + regularization * (np.sum(U**2) + np.sum(V**2))
    )


def exact_user_term(P: Matrix, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """d/dV of ||P - U V^T||^2, i.e. -2 (P - U V^T)^T U, without densifying P."""
    return -2.0 * (np.asarray(P.T @ U) - V @ (U.T @ U))


def q_term(Q: np.ndarray, V: np.ndarray) -> np.ndarray:
    """
    d/dV of ||Q - V V^T||^2.

    v_j appears in row j and in column j of V V^T, so both contribute.
    """
    residual = Q - V @ V.T
    return -2.0 * (residual @ V + residual.T @ V)


def joint_gradient_v(P: Matrix, Q: np.ndarray, U: np.ndarray, V: np.ndarray, regularization: float) -> np.ndarray:
    """Exact gradient of the joint objective with respect to V."""
    return exact_user_term(P, U, V) + q_term(Q, V) + 2.0 * regularization * V


def estimate_user_term(reports: Sequence[GradientReport], n: int, d: int, population: int) -> np.ndarray:
    """
    Unbiased estimate of the user term from one group's reports.

    A report for dimension t carries d * e_hat_ij * u[t]; its expectation
    over the sampled dimension is e_ij * u[t] for every t. Group sums are
    rescaled to the full population.

    Args:
        reports: Reports of the current group
        n: Number of POIs
        d: Latent dimension
        population: Total number of users m

    Returns:
        np.ndarray: n x d estimate of -2 sum_i u_i (r_ij - u_i^T v_j)
    """
    if not reports:
        raise SchedulingError("no gradient reports for this iteration")
    sums = np.zeros((n, d))
    for report in reports:
        if report.contributions.shape != (n,):
            raise ProtocolError(f"report covers {report.contributions.shape} POIs, expected ({n},)")
        if not 0 <= report.dim < d:
            raise ProtocolError(f"report dimension {report.dim} outside [0, {d})")
        sums[:, report.dim] += report.contributions
    return -2.0 * (population / len(reports)) * sums


def make_optimizer(config: TrainConfig) -> Optimizer:
    if config.use_adam:
        return Adam(lr=config.gamma, beta1=config.beta1, beta2=config.beta2, epsilon=config.adam_epsilon)
    return GradientDescent(lr=config.gamma)


def apply_gradient(model: LatentModel, gradient: np.ndarray, optimizer: Optimizer) -> LatentModel:
    """Return a new model after one optimizer step."""
    if gradient.shape != model.V.shape:
        raise InvalidParameterError(f"gradient shape {gradient.shape} does not match V {model.V.shape}")
    state = AdamState(m=model.adam_state.m.copy(), v=model.adam_state.v.copy(), step=model.adam_state.step)
    V = optimizer.step(model.V, gradient, state)
    return LatentModel(V=V, adam_state=state)


def server_update_v(
    reports: Sequence[GradientReport],
    model: LatentModel,
    Q: np.ndarray,
    config: TrainConfig,
    population: int,
    optimizer: Optional[Optimizer] = None,
) -> LatentModel:
    """
    One private server step on V.

    Args:
        reports: Gradient reports of the group scheduled this iteration
        model: Current model
        Q: Target POI-POI matrix (normalised unless the ablation is active)
        config: Training settings
        population: Total number of users m
        optimizer: Update rule; built from the config when omitted

    Returns:
        LatentModel: Updated model
    """
    V = model.V
    if Q.shape != (model.n, model.n):
        raise ProtocolError(f"POI-POI matrix shape {Q.shape} does not match n={model.n}")
    gradient = (
        estimate_user_term(reports, model.n, model.d, population)
        + q_term(Q, V)
        + 2.0 * config.regularization * V
    )
    return apply_gradient(model, gradient, optimizer or make_optimizer(config))


def _dense(P: Matrix) -> np.ndarray:
    return P.toarray() if sp.issparse(P) else np.asarray(P, dtype=float)
