"""
Private collection of transition patterns.

Each client one-hot encodes a single sampled transition into an n^2 bit
string and perturbs every bit with optimized randomized response at the full
transition budget. The server sums the reports per position and inverts the
randomisation to estimate how many users hold each transition.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from ..core.exceptions import DomainError, InvalidParameterError, ParseError, ProtocolError
from ..data.features import Transition
from ..privacy.mechanisms import make_rr_params, rr_count_stddev, rr_estimate_count, rr_perturb_bits
from ..utils.logging import logger

MAX_REPORT_BITS = 10**7

# open bounds of the normalised range
_LOWER = np.nextafter(1.0, 2.0)
_UPPER = np.nextafter(2.0, 1.0)


@dataclass(frozen=True)
class PerturbedBitString:
    """A client's randomized n^2-bit transition report."""

    bits: np.ndarray

    def __len__(self) -> int:
        return int(self.bits.shape[0])


@dataclass
class TransitionMatrix:
    """Estimated transition frequencies and their normalised form."""

    raw: np.ndarray
    normalized: Optional[np.ndarray] = None
    scale: Optional[float] = None

    @property
    def n(self) -> int:
        return int(self.raw.shape[0])

    def target(self) -> np.ndarray:
        """The matrix the factorisation fits: normalised when available."""
        return self.normalized if self.normalized is not None else self.raw


def _check_n(n: int) -> int:
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    if n * n > MAX_REPORT_BITS:
        raise InvalidParameterError(f"n^2 = {n * n} exceeds the {MAX_REPORT_BITS}-bit report limit")
    return n


def encode_transition(transition: Transition, n: int) -> int:
    """
    Bit position of a transition.

    Args:
        transition: src -> dst pair
        n: Number of POIs

    Returns:
        int: src * n + dst
    """
    if not (0 <= transition.src < n and 0 <= transition.dst < n):
        raise DomainError(f"transition {transition.src}->{transition.dst} outside domain [0, {n})")
    return transition.src * n + transition.dst


def client_report(
    transition: Optional[Transition],
    n: int,
    epsilon1: float,
    rng: np.random.Generator,
) -> PerturbedBitString:
    """
    Build and perturb one client's transition report.

    Args:
        transition: The sampled transition, or None for a user without one
        n: Number of POIs
        epsilon1: Transition budget, spent in full on every bit
        rng: The client's random source

    Returns:
        PerturbedBitString: n^2 randomized bits
    """
    _check_n(n)
    params = make_rr_params(epsilon1)
    bits = np.zeros(n * n, dtype=np.uint8)
    if transition is not None:
        bits[encode_transition(transition, n)] = 1
    return PerturbedBitString(bits=rr_perturb_bits(bits, params, rng))


def aggregate(reports: Iterable[PerturbedBitString], epsilon1: float) -> TransitionMatrix:
    """
    Estimate transition counts from all clients' reports.

    Args:
        reports: One report per client, all of length n^2
        epsilon1: Budget the reports were perturbed with

    Returns:
        TransitionMatrix: raw[i][j] estimated from bit i * n + j

    Raises:
        ProtocolError: If reports differ in length or are not square-sized
    """
    params = make_rr_params(epsilon1)
    ones: Optional[np.ndarray] = None
    m = 0
    for report in reports:
        if ones is None:
            ones = np.zeros(len(report), dtype=np.int64)
        elif len(report) != ones.shape[0]:
            raise ProtocolError(f"report of length {len(report)} after reports of length {ones.shape[0]}")
        ones += report.bits
        m += 1

    if ones is None:
        raise ProtocolError("at least one report is required")
    n = int(round(np.sqrt(ones.shape[0])))
    if n * n != ones.shape[0]:
        raise ProtocolError(f"report length {ones.shape[0]} is not a square")

    raw = rr_estimate_count(ones, m, params).reshape(n, n)
    logger.debug(f"Aggregated {m} transition reports over {n} POIs")
    return TransitionMatrix(raw=raw)


def collect_transitions(
    transitions: Sequence[Optional[Transition]],
    n: int,
    epsilon1: float,
    rngs: Sequence[np.random.Generator],
) -> TransitionMatrix:
    """
    Run the full protocol for a simulated population.

    Args:
        transitions: One sampled transition (or None) per client
        n: Number of POIs
        epsilon1: Transition budget
        rngs: One random source per client

    Returns:
        TransitionMatrix: Raw estimated counts
    """
    if len(transitions) != len(rngs):
        raise InvalidParameterError("need one random source per client")
    reports = (client_report(t, n, epsilon1, rng) for t, rng in zip(transitions, rngs))
    return aggregate(reports, epsilon1)


def exact_transition_counts(transitions: Sequence[Optional[Transition]], n: int) -> TransitionMatrix:
    """True counts of the sampled transitions, for the non-private diagnostic mode."""
    _check_n(n)
    raw = np.zeros((n, n), dtype=float)
    for transition in transitions:
        if transition is not None:
            raw[transition.check(n).src, transition.dst] += 1.0
    return TransitionMatrix(raw=raw)


def normalize(raw: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """
    Map estimated counts into (1, 2) with 1 + sigmoid(raw / scale).

    In float64 the sigmoid rounds to exactly 0 or 1 once |raw / scale|
    passes about 37; such entries are clamped to the nearest representable
    value inside the open interval.

    Args:
        raw: Estimated counts, possibly negative
        scale: Divisor applied before the sigmoid; 1 leaves counts unscaled

    Returns:
        np.ndarray: Elementwise 1 + 1 / (1 + e^{-x}), strictly inside (1, 2)
    """
    if not scale > 0:
        raise InvalidParameterError("scale must be > 0")
    return np.clip(1.0 + expit(np.asarray(raw, dtype=float) / scale), _LOWER, _UPPER)


def count_scale(m: int, n: int, epsilon1: Optional[float] = None) -> float:
    """
    Count-relative divisor for normalize.

    Private estimates are divided by the per-cell noise standard deviation of
    the count estimator, exact counts by the mean count per cell. The result
    is never below 1.

    Args:
        m: Number of reporting clients
        n: Number of POIs
        epsilon1: Transition budget, or None for exact counts

    Returns:
        float: Scale to pass to normalize
    """
    if m < 1 or n < 1:
        raise InvalidParameterError("m and n must be >= 1")
    if epsilon1 is not None:
        return max(1.0, rr_count_stddev(m, make_rr_params(epsilon1)))
    return max(1.0, m / (n * n))


def dump_raw_matrix(raw: np.ndarray, path: Union[str, Path]) -> Path:
    """
    Write n (int64) followed by the row-major float64 matrix, little-endian.

    Args:
        raw: Square matrix
        path: Destination file

    Returns:
        Path: The written file
    """
    matrix = np.asarray(raw, dtype="<f8")
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidParameterError("raw matrix must be square")
    out = Path(path)
    out.parent.mkdir(exist_ok=True, parents=True)
    with open(out, "wb") as f:
        f.write(struct.pack("<q", matrix.shape[0]))
        f.write(np.ascontiguousarray(matrix).tobytes(order="C"))
    return out


def load_raw_matrix(path: Union[str, Path]) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ParseError(f"{path}: truncated header")
    (n,) = struct.unpack("<q", data[:8])
    if n < 1 or len(data) != 8 + 8 * n * n:
        raise ParseError(f"{path}: expected {n}x{n} float64 payload")
    return np.frombuffer(data, dtype="<f8", offset=8).reshape(n, n).astype(float)
