"""
Latent model state, training settings and checkpoints.

The server owns the public POI factors V and the optimizer moments. User
factors never enter this module: they live with the simulated clients.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..core.exceptions import InvalidParameterError, ParseError
from ..privacy.budget import PrivacyBudget
from ..utils.helpers import load_json, save_json

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]

# step size of the noiseless diagnostic runs
DIAGNOSTIC_GAMMA = 0.02


@dataclass
class AdamState:
    """First and second moment estimates plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, shape: Tuple[int, ...]) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), step=0)


@dataclass
class LatentModel:
    """Public POI latent matrix V (n x d) and its optimizer state."""

    V: np.ndarray
    adam_state: AdamState

    def __post_init__(self) -> None:
        if self.V.ndim != 2:
            raise InvalidParameterError("V must be a 2-d matrix")
        if self.adam_state.m.shape != self.V.shape or self.adam_state.v.shape != self.V.shape:
            raise InvalidParameterError("optimizer moments must match the shape of V")

    @property
    def n(self) -> int:
        return int(self.V.shape[0])

    @property
    def d(self) -> int:
        return int(self.V.shape[1])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.V)))


@dataclass(frozen=True)
class TrainConfig:
    """
    Settings for one training run.

    A budget of None selects the non-private diagnostic mode: exact
    transition counts and exact gradients from every user.
    """

    d: int = 10
    regularization: float = 1e-8
    gamma: float = 0.1
    iterations: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    use_adam: bool = True
    normalize_q: bool = True
    sigmoid_scale: Optional[float] = None
    budget: Optional[PrivacyBudget] = None
    seed: int = 0
    epochs: int = 20
    track_trace: bool = False

    def __post_init__(self) -> None:
        if self.d < 1:
            raise InvalidParameterError("d must be >= 1")
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be >= 1")
        if self.regularization < 0:
            raise InvalidParameterError("lambda must be >= 0")
        if not self.gamma > 0:
            raise InvalidParameterError("gamma must be > 0")
        if self.sigmoid_scale is not None and not self.sigmoid_scale > 0:
            raise InvalidParameterError("sigmoid_scale must be > 0")
        if self.epochs < 1:
            raise InvalidParameterError("epochs must be >= 1")

    @property
    def private(self) -> bool:
        return self.budget is not None

    @classmethod
    def noiseless(cls, **overrides: Any) -> "TrainConfig":
        """
        Settings for a non-private diagnostic run with a trace.

        The exact gradient sums over every user rather than one group, so its
        step size is DIAGNOSTIC_GAMMA instead of the private default.
        """
        values: Dict[str, Any] = {"gamma": DIAGNOSTIC_GAMMA, "budget": None, "track_trace": True}
        values.update(overrides)
        return cls(**values)


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def init_model(n: int, d: int, seed: SeedLike) -> LatentModel:
    """
    Draw V with i.i.d. entries uniform on [0, 1/sqrt(d)].

    Args:
        n: Number of POIs
        d: Latent dimension
        seed: Seed or generator

    Returns:
        LatentModel: Fresh model with zeroed optimizer state
    """
    if n < 1 or d < 1:
        raise InvalidParameterError("n and d must be >= 1")
    V = _rng(seed).uniform(0.0, 1.0 / np.sqrt(d), size=(n, d))
    return LatentModel(V=V, adam_state=AdamState.zeros(V.shape))


def init_profile(d: int, seed: SeedLike) -> np.ndarray:
    """User factors with the same initial distribution as V's rows."""
    if d < 1:
        raise InvalidParameterError("d must be >= 1")
    return _rng(seed).uniform(0.0, 1.0 / np.sqrt(d), size=d)


_HEADER = struct.Struct("<qqq")


def save_model(model: LatentModel, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a checkpoint: n, d and the Adam step as int64, then V, m and v as
    row-major float64, all little-endian. Metadata goes to a JSON sidecar.

    Args:
        model: Model to save
        path: Checkpoint file
        metadata: Optional run description stored next to the checkpoint

    Returns:
        Path: The written checkpoint
    """
    out = Path(path)
    out.parent.mkdir(exist_ok=True, parents=True)
    with open(out, "wb") as f:
        f.write(_HEADER.pack(model.n, model.d, model.adam_state.step))
        for block in (model.V, model.adam_state.m, model.adam_state.v):
            f.write(np.ascontiguousarray(block, dtype="<f8").tobytes(order="C"))
    if metadata is not None:
        save_json(metadata, out.with_suffix(".json"))
    return out


def load_model(path: Union[str, Path]) -> Tuple[LatentModel, Dict[str, Any]]:
    """
    Read a checkpoint written by save_model.

    Returns:
        The model and its metadata (empty when no sidecar exists)
    """
    src = Path(path)
    data = src.read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{src}: truncated checkpoint header")
    n, d, step = _HEADER.unpack_from(data)
    block = n * d
    if n < 1 or d < 1 or len(data) != _HEADER.size + 3 * 8 * block:
        raise ParseError(f"{src}: payload does not match n={n}, d={d}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    V, m, v = (values[i * block : (i + 1) * block].reshape(n, d) for i in range(3))
    metadata = load_json(src.with_suffix(".json")) if src.with_suffix(".json").exists() else {}
    return LatentModel(V=V, adam_state=AdamState(m=m, v=v, step=int(step))), metadata
