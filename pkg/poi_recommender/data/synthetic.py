"""
Synthetic mobility populations.

Every user walks a first-order Markov chain over the POI set. The chain is
either supplied as a row-stochastic matrix or built as a ring random walk:
each POI moves forward to one of its next few neighbours with geometrically
decaying weights, optionally stays put, and restarts uniformly with a small
probability.
"""

import sys
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..core.config import DATASET_PRESETS
from ..core.exceptions import ConfigError, InvalidParameterError
from ..utils.logging import logger
from .checkins import CheckinDataset, CheckinHistory, PoiDomain

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

RANDOM_WALK = "random-walk"
_ROW_TOLERANCE = 1e-9
_CHUNK_USERS = 8192
_CHECKIN_INTERVAL = 3600.0

TransitionModel = Union[np.ndarray, str]


class SyntheticManifest(BaseModel):
    """Parameters of a synthetic population, as stored in a manifest file."""

    model_config = ConfigDict(extra="forbid")

    m: int = Field(ge=2, description="Number of users")
    n: int = Field(ge=2, description="Number of POIs")
    length: int = Field(ge=2, description="Check-ins per user")
    seed: int = Field(default=0, ge=0)
    model: str = Field(default=RANDOM_WALK, description="'random-walk' or a matrix file (.npy or .csv)")
    neighbors: int = Field(default=3, ge=1)
    restart: float = Field(default=0.05, ge=0.0, le=1.0)
    decay: float = Field(default=0.5, gt=0.0, le=1.0)
    stay: float = Field(default=0.0, ge=0.0, lt=1.0, description="Probability of checking in at the same POI again")
    name: Optional[str] = None

    def transition_model(self, base_dir: Optional[Path] = None) -> np.ndarray:
        if self.model == RANDOM_WALK:
            return build_random_walk_model(self.n, self.neighbors, self.restart, self.decay, self.stay)
        matrix_path = Path(self.model)
        if base_dir is not None and not matrix_path.is_absolute():
            matrix_path = base_dir / matrix_path
        return load_transition_model(matrix_path)


def load_manifest(path: Union[str, Path]) -> SyntheticManifest:
    """
    Read a synthetic dataset manifest.

    Args:
        path: TOML file with m, n, length, seed and model keys

    Returns:
        SyntheticManifest: Validated manifest
    """
    manifest_path = Path(path)
    try:
        with open(manifest_path, "rb") as f:
            data = tomllib.load(f)
        return SyntheticManifest.model_validate(data)
    except FileNotFoundError as e:
        raise ConfigError(f"manifest not found: {manifest_path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse manifest {manifest_path}: {e}") from e
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first.get("msg", str(e)), key=".".join(str(p) for p in first.get("loc", ()))) from e


def preset_manifest(preset: str, seed: int = 0) -> SyntheticManifest:
    """Manifest for one of the named population shapes."""
    if preset not in DATASET_PRESETS:
        raise InvalidParameterError(f"unknown preset {preset!r}")
    return SyntheticManifest(seed=seed, name=preset, **DATASET_PRESETS[preset])


def load_transition_model(path: Union[str, Path]) -> np.ndarray:
    matrix_path = Path(path)
    if matrix_path.suffix == ".npy":
        return np.load(matrix_path)
    return pd.read_csv(matrix_path, header=None).to_numpy(dtype=float)


def build_random_walk_model(
    n: int, neighbors: int = 3, restart: float = 0.05, decay: float = 0.5, stay: float = 0.0
) -> np.ndarray:
    """
    Build a ring random-walk transition matrix.

    Args:
        n: Number of POIs
        neighbors: How many successors on the ring each POI can move to
        restart: Probability of jumping to a uniformly random POI
        decay: Weight ratio between consecutive successors
        stay: Share of the non-restart mass kept on the current POI

    Returns:
        np.ndarray: Row-stochastic n x n matrix
    """
    if n < 1 or neighbors < 1:
        raise InvalidParameterError("n and neighbors must be >= 1")
    if not 0.0 <= restart <= 1.0:
        raise InvalidParameterError("restart must lie in [0, 1]")
    if not 0.0 <= stay < 1.0:
        raise InvalidParameterError("stay must lie in [0, 1)")

    weights = decay ** np.arange(neighbors, dtype=float)
    weights /= weights.sum()

    model = np.full((n, n), restart / n)
    rows = np.arange(n)
    model[rows, rows] += (1.0 - restart) * stay
    for step, weight in enumerate(weights, start=1):
        np.add.at(model, (rows, (rows + step) % n), (1.0 - restart) * (1.0 - stay) * weight)
    return model


def check_transition_model(model: np.ndarray, n: int) -> np.ndarray:
    """
    Validate a row-stochastic matrix.

    Raises:
        InvalidParameterError: On a wrong shape, negative entries or rows not summing to 1
    """
    matrix = np.asarray(model, dtype=float)
    if matrix.shape != (n, n):
        raise InvalidParameterError(f"transition model must be {n}x{n}, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)) or np.any(matrix < 0.0):
        raise InvalidParameterError("transition model entries must be finite and non-negative")
    row_sums = matrix.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > _ROW_TOLERANCE):
        worst = int(np.argmax(np.abs(row_sums - 1.0)))
        raise InvalidParameterError(f"row {worst} of the transition model sums to {row_sums[worst]!r}")
    return matrix


def generate_synthetic(
    m: int,
    n: int,
    length: int,
    transition_model: TransitionModel = RANDOM_WALK,
    seed: int = 0,
    initial: Optional[np.ndarray] = None,
    name: str = "synthetic",
) -> CheckinDataset:
    """
    Draw m Markov-chain check-in histories.

    Args:
        m: Number of users
        n: Number of POIs
        length: Check-ins per user
        transition_model: Row-stochastic n x n matrix or "random-walk"
        seed: Seed making the output deterministic
        initial: Distribution of the first POI, uniform when omitted
        name: Dataset descriptor

    Returns:
        CheckinDataset: Users "0".."m-1", one check-in per hour
    """
    if min(m, n, length) < 2:
        raise InvalidParameterError("m, n and length must all be >= 2")
    if isinstance(transition_model, str):
        if transition_model != RANDOM_WALK:
            raise InvalidParameterError(f"unknown transition model {transition_model!r}")
        transition_model = build_random_walk_model(n)
    model = check_transition_model(transition_model, n)

    start = np.full(n, 1.0 / n) if initial is None else np.asarray(initial, dtype=float)
    if start.shape != (n,) or np.any(start < 0) or abs(start.sum() - 1.0) > _ROW_TOLERANCE:
        raise InvalidParameterError("initial must be a probability vector of length n")

    rng = np.random.default_rng(seed)
    cdf = np.cumsum(model, axis=1)
    paths = np.empty((m, length), dtype=np.int64)
    paths[:, 0] = rng.choice(n, size=m, p=start)

    for step in range(1, length):
        draws = rng.random(m)
        for lo in range(0, m, _CHUNK_USERS):
            hi = min(lo + _CHUNK_USERS, m)
            rows = cdf[paths[lo:hi, step - 1]]
            nxt = (rows < draws[lo:hi, None] * rows[:, -1:]).sum(axis=1)
            paths[lo:hi, step] = np.minimum(nxt, n - 1)

    times = tuple(float(t) * _CHECKIN_INTERVAL for t in range(length))
    histories = [
        CheckinHistory(user_id=str(i), pois=tuple(int(p) for p in paths[i]), times=times)
        for i in range(m)
    ]
    logger.info(f"Generated {m} synthetic users over {n} POIs, {length} check-ins each")
    return CheckinDataset(domain=PoiDomain(n=n), histories=histories, name=name)


def generate_from_manifest(manifest: SyntheticManifest, base_dir: Optional[Path] = None) -> CheckinDataset:
    """Generate the population a manifest describes."""
    return generate_synthetic(
        m=manifest.m,
        n=manifest.n,
        length=manifest.length,
        transition_model=manifest.transition_model(base_dir),
        seed=manifest.seed,
        name=manifest.name or "synthetic",
    )
