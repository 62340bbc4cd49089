"""
Joint factorisation of user-POI and POI-POI matrices under LDP.

A training run first collects one randomized transition report per client
and builds the POI-POI matrix. It then runs one iteration per user group:
every client refreshes its factors locally, the scheduled group sends
perturbed gradient reports, and the server steps V.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from tqdm import tqdm

from ..collection.transitions import (
    PerturbedBitString,
    TransitionMatrix,
    aggregate,
    client_report,
    count_scale,
    exact_transition_counts,
    normalize,
)
from ..core.exceptions import DivergenceError, InvalidParameterError
from ..data.checkins import CheckinDataset
from ..data.features import sample_transition
from ..privacy.budget import PrivacyLedger
from ..utils.helpers import derive_seed
from ..utils.logging import setup_logging
from .client import (
    SimulatedClient,
    als_update_users,
    build_clients,
    client_gradient_report,
    preference_matrix,
)
from .model import LatentModel, TrainConfig, init_model
from .optimizers import Optimizer
from .server import apply_gradient, joint_gradient_v, make_optimizer, server_update_v

TRANSITION = "transition"
GRADIENT = "gradient"

# |V| entries above this end a diagnostic run as diverged
MAX_FACTOR_MAGNITUDE = 1e6


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    p_rmse: float
    q_rmse: float
    objective: float


@dataclass
class TrainingTrace:
    """Per-iteration fit of both matrices, recorded in diagnostic runs."""

    points: List[TracePoint] = field(default_factory=list)
    diverged: bool = False

    def column(self, name: str) -> List[float]:
        return [getattr(point, name) for point in self.points]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(p.iteration, p.p_rmse, p.q_rmse, p.objective) for p in self.points],
            columns=["iteration", "p_rmse", "q_rmse", "objective"],
        )

    def write_csv(self, path: Union[str, Path]) -> Path:
        out = Path(path)
        out.parent.mkdir(exist_ok=True, parents=True)
        self.to_frame().to_csv(out, index=False, float_format="%.10g")
        return out


@dataclass
class TrainResult:
    """Final public model plus the client-held state of the simulation."""

    method: str
    model: LatentModel
    clients: List[SimulatedClient]
    U: np.ndarray
    config: TrainConfig
    transitions: Optional[TransitionMatrix] = None
    trace: Optional[TrainingTrace] = None

    @property
    def ledgers(self) -> List[PrivacyLedger]:
        return [c.ledger for c in self.clients if c.ledger is not None]

    @property
    def uses_transitions(self) -> bool:
        return self.transitions is not None


def partition_groups(user_ids: Sequence[object], k: int, seed: Union[int, np.random.SeedSequence]) -> List[int]:
    """
    Randomly split users into k balanced groups.

    Args:
        user_ids: One entry per user
        k: Number of groups, one per training iteration
        seed: Seed making the assignment reproducible

    Returns:
        List[int]: Group index of every user; sizes differ by at most one
    """
    m = len(user_ids)
    if k < 1 or k > m:
        raise InvalidParameterError(f"need 1 <= k <= number of users ({m}), got k={k}")
    order = np.random.default_rng(seed).permutation(m)
    assignment = np.empty(m, dtype=np.int64)
    assignment[order] = np.arange(m) % k
    return assignment.tolist()


def _rmse_p(R: sp.csr_matrix, U: np.ndarray, V: np.ndarray, chunk_size: int = 4096) -> float:
    squared = 0.0
    for start in range(0, R.shape[0], chunk_size):
        rows = slice(start, start + chunk_size)
        squared += float(np.sum((R[rows].toarray() - U[rows] @ V.T) ** 2))
    return math.sqrt(squared / (R.shape[0] * R.shape[1]))


def _rmse_q(Q: np.ndarray, V: np.ndarray) -> float:
    return float(np.sqrt(np.mean((Q - V @ V.T) ** 2)))


class SpirelTrainer:
    """Runs transition collection and the grouped joint factorisation."""

    method = "spirel"

    def __init__(self, config: TrainConfig, show_progress: bool = False):
        """
        Initialize the trainer.

        Args:
            config: Training settings; a budget of None selects the non-private mode
            show_progress: Draw a progress bar over iterations
        """
        self.config = config
        self.show_progress = show_progress
        self.logger = setup_logging(f"{__name__}.{self.__class__.__name__}")

    def collect_transitions(self, clients: Sequence[SimulatedClient], n: int) -> TransitionMatrix:
        """Every client samples one transition and reports it exactly once."""
        transitions = [sample_transition(c.train, c.rng) for c in clients]
        budget = self.config.budget
        if budget is None:
            return exact_transition_counts(transitions, n)

        def reports() -> Iterator[PerturbedBitString]:
            for client, transition in zip(clients, transitions):
                client.ledger.charge(TRANSITION, budget.transition_epsilon)
                yield client_report(transition, n, budget.transition_epsilon, client.rng)

        return aggregate(reports(), budget.transition_epsilon)

    def _target(self, transitions: TransitionMatrix, m: int) -> np.ndarray:
        if self.config.normalize_q:
            scale = self.config.sigmoid_scale
            if scale is None:
                budget = self.config.budget
                scale = count_scale(m, transitions.n, budget.transition_epsilon if budget is not None else None)
            transitions.scale = scale
            transitions.normalized = normalize(transitions.raw, scale)
            self.logger.debug(f"Normalising the POI-POI matrix with sigmoid scale {scale:.4g}")
        return transitions.target()

    def _record(
        self, trace: TrainingTrace, iteration: int, R: sp.spmatrix, Q: np.ndarray, U: np.ndarray, V: np.ndarray
    ) -> None:
        p_rmse = _rmse_p(R, U, V)
        q_rmse = _rmse_q(Q, V)
        objective = (
            p_rmse**2 * R.shape[0] * R.shape[1]
            + q_rmse**2 * Q.size
            + self.config.regularization * (float(np.sum(U**2)) + float(np.sum(V**2)))
        )
        trace.points.append(TracePoint(iteration, p_rmse, q_rmse, objective))
        self.logger.debug(f"iteration {iteration}: P-RMSE {p_rmse:.6f}, Q-RMSE {q_rmse:.6f}")

    def _private_step(
        self,
        members: Sequence[SimulatedClient],
        U: np.ndarray,
        model: LatentModel,
        Q: np.ndarray,
        population: int,
        optimizer: Optimizer,
    ) -> LatentModel:
        """The scheduled group reports once each; the server steps V."""
        eps2 = self.config.budget.gradient_epsilon
        reports = []
        for client in members:
            client.profile.u = U[client.index]
            client.ledger.charge(GRADIENT, eps2)
            reports.append(client_gradient_report(client.profile, model.V, eps2, client.rng))
        return server_update_v(reports, model, Q, self.config, population=population, optimizer=optimizer)

    def _diverged(self, model: LatentModel) -> bool:
        return not model.is_finite() or float(np.max(np.abs(model.V))) > MAX_FACTOR_MAGNITUDE

    def train(self, dataset: CheckinDataset) -> TrainResult:
        """
        Train on a dataset.

        Args:
            dataset: Histories with at least two check-ins each

        Returns:
            TrainResult: Model, refreshed client factors, transitions and trace
        """
        config = self.config
        budget = config.budget
        n = dataset.n

        clients = build_clients(
            dataset,
            config.d,
            config.seed,
            allocated_epsilon=budget.total_epsilon if budget is not None else None,
        )
        m = len(clients)
        if m == 0:
            raise InvalidParameterError("dataset has no users")
        self.logger.info(
            f"Training {self.method} on {m} users, {n} POIs, d={config.d}, k={config.iterations}, "
            f"{'epsilon=' + format(budget.total_epsilon, 'g') if budget else 'non-private'}"
        )

        transitions = self.collect_transitions(clients, n)
        Q = self._target(transitions, m)

        R = preference_matrix(clients, n)
        model = init_model(n, config.d, derive_seed(config.seed, "model"))
        U = np.vstack([c.profile.u for c in clients])
        optimizer = make_optimizer(config)

        groups: Optional[List[int]] = None
        if budget is not None:
            user_ids = [c.user_id for c in clients]
            groups = partition_groups(user_ids, config.iterations, derive_seed(config.seed, "groups"))

        track = config.track_trace or budget is None
        trace = TrainingTrace() if track else None

        U = als_update_users(R, model.V, config.regularization, U)
        if trace is not None:
            self._record(trace, 0, R, Q, U, model.V)

        for iteration in tqdm(range(config.iterations), desc=self.method, leave=False, disable=not self.show_progress):
            previous = model.V
            try:
                if budget is not None:
                    members = [c for c, g in zip(clients, groups) if g == iteration]
                    model = self._private_step(members, U, model, Q, m, optimizer)
                else:
                    members = clients
                    gradient = joint_gradient_v(R, Q, U, model.V, config.regularization)
                    model = apply_gradient(model, gradient, optimizer)
                self.logger.debug(
                    f"iteration {iteration + 1}: {len(members)} users, |dV| {np.linalg.norm(model.V - previous):.4g}"
                )
                if self._diverged(model):
                    raise DivergenceError(f"V diverged at iteration {iteration + 1}")
            except DivergenceError:
                if trace is None:
                    raise
                self.logger.warning(f"V diverged at iteration {iteration + 1}; stopping the run")
                trace.diverged = True
                for rest in range(iteration + 1, config.iterations + 1):
                    trace.points.append(TracePoint(rest, math.inf, math.inf, math.inf))
                break

            U = als_update_users(R, model.V, config.regularization, U)
            if trace is not None:
                self._record(trace, iteration + 1, R, Q, U, model.V)

        for client in clients:
            client.profile.u = U[client.index]

        return TrainResult(
            method=self.method,
            model=model,
            clients=clients,
            U=U,
            config=config,
            transitions=transitions,
            trace=trace,
        )


def train_spirel(dataset: CheckinDataset, config: TrainConfig, show_progress: bool = False) -> TrainResult:
    """Train the joint model; see SpirelTrainer."""
    return SpirelTrainer(config, show_progress=show_progress).train(dataset)


def budget_audit(result: TrainResult) -> Dict[str, int]:
    """
    Count clients whose ledger deviates from one transition report, at most
    one gradient report and a total spend equal to the allocation.

    Returns:
        Dict[str, int]: Counts of audited clients and of each violation kind
    """
    audit = {"clients": 0, "transition_reports": 0, "gradient_reports": 0, "spend": 0}
    for ledger in result.ledgers:
        audit["clients"] += 1
        if ledger.count(TRANSITION) != 1:
            audit["transition_reports"] += 1
        if ledger.count(GRADIENT) > 1:
            audit["gradient_reports"] += 1
        if not math.isclose(ledger.spent, ledger.allocated, rel_tol=1e-12):
            audit["spend"] += 1
    return audit
