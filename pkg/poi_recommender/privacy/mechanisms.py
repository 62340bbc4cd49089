"""
Local differential privacy mechanisms.

Optimized randomized response perturbs single bits and supports unbiased
count estimation. The Piecewise Mechanism perturbs a bounded real value in
[-1, 1] into [-C, C] while keeping its expectation. Every sampling function
takes an explicit numpy Generator; nothing here touches global randomness.
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..core.exceptions import ContractViolationError, InvalidParameterError

MAX_EPSILON = 50.0

ArrayLike = Union[float, int, np.ndarray]


def check_epsilon(epsilon: float) -> float:
    """
    Validate a privacy budget.

    Args:
        epsilon: Candidate budget

    Returns:
        float: The budget as a float

    Raises:
        InvalidParameterError: If epsilon is not finite, not positive or above MAX_EPSILON
    """
    try:
        value = float(epsilon)
    except (TypeError, ValueError) as e:
        raise InvalidParameterError(f"epsilon must be a real number, got {epsilon!r}") from e
    if not math.isfinite(value) or value <= 0.0:
        raise InvalidParameterError(f"epsilon must be finite and > 0, got {epsilon!r}")
    if value > MAX_EPSILON:
        raise InvalidParameterError(f"epsilon must be <= {MAX_EPSILON}, got {epsilon!r}")
    return value


@dataclass(frozen=True)
class RrParams:
    """Optimized randomized response: report 1 w.p. p for a true 1, q for a true 0."""

    p: float
    q: float
    epsilon: float

    @property
    def privacy_ratio(self) -> float:
        """Worst-case likelihood ratio, never above e^epsilon."""
        return max(self.p / self.q, (1.0 - self.q) / (1.0 - self.p))


@dataclass(frozen=True)
class PmParams:
    """Piecewise Mechanism parameters; outputs lie in [-C, C]."""

    epsilon: float
    C: float

    @property
    def center_probability(self) -> float:
        half = math.exp(self.epsilon / 2.0)
        return half / (half + 1.0)

    def left(self, value: ArrayLike) -> ArrayLike:
        return (self.C + 1.0) / 2.0 * value - (self.C - 1.0) / 2.0

    def right(self, value: ArrayLike) -> ArrayLike:
        return self.left(value) + self.C - 1.0

    @property
    def center_density(self) -> float:
        return self.center_probability / (self.C - 1.0)

    @property
    def tail_density(self) -> float:
        return (1.0 - self.center_probability) / (self.C + 1.0)


def make_rr_params(epsilon: float) -> RrParams:
    """
    Build optimized randomized response parameters.

    Args:
        epsilon: Privacy budget spent on each bit

    Returns:
        RrParams: p = 1/2 and q = 1/(e^epsilon + 1)
    """
    eps = check_epsilon(epsilon)
    # exp(-eps) form stays finite for every accepted eps
    q = math.exp(-eps) / (1.0 + math.exp(-eps))
    return RrParams(p=0.5, q=q, epsilon=eps)


def rr_perturb_bit(bit: int, params: RrParams, rng: np.random.Generator) -> int:
    """
    Perturb one bit with optimized randomized response.

    Args:
        bit: True bit, 0 or 1
        params: Mechanism parameters
        rng: Random source owned by the caller

    Returns:
        int: Reported bit
    """
    if bit not in (0, 1):
        raise ContractViolationError(f"bit must be 0 or 1, got {bit!r}")
    threshold = params.p if bit == 1 else params.q
    return int(rng.random() < threshold)


def rr_perturb_bits(bits: np.ndarray, params: RrParams, rng: np.random.Generator) -> np.ndarray:
    """
    Perturb every bit of an array independently.

    Args:
        bits: Array of 0/1 values
        params: Mechanism parameters
        rng: Random source owned by the caller

    Returns:
        np.ndarray: Reported bits as uint8, same shape as the input
    """
    bits = np.asarray(bits)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ContractViolationError("bits must contain only 0 and 1")
    thresholds = np.where(bits == 1, params.p, params.q)
    return (rng.random(bits.shape) < thresholds).astype(np.uint8)


def rr_estimate_count(ones_observed: ArrayLike, m: int, params: RrParams) -> ArrayLike:
    """
    Unbiased estimate of how many of m reporters hold a true 1.

    Works elementwise when ones_observed is an array of per-position counts.
    The estimate can be negative.

    Args:
        ones_observed: Number of reported ones
        m: Number of reports
        params: Mechanism parameters

    Returns:
        Estimated true count (ones_observed - m q) / (p - q)
    """
    if m < 1:
        raise InvalidParameterError(f"m must be >= 1, got {m}")
    observed = np.asarray(ones_observed, dtype=float)
    if np.any(observed < 0) or np.any(observed > m):
        raise ContractViolationError("ones_observed must lie in [0, m]")
    estimate = (observed - m * params.q) / (params.p - params.q)
    if np.ndim(estimate) == 0:
        return float(estimate)
    return estimate


def rr_count_stddev(m: int, params: RrParams) -> float:
    """Standard deviation of rr_estimate_count for a position with no true ones."""
    return math.sqrt(m * params.q * (1.0 - params.q)) / (params.p - params.q)


def make_pm_params(epsilon: float) -> PmParams:
    """
    Build Piecewise Mechanism parameters.

    Args:
        epsilon: Privacy budget for one perturbed value

    Returns:
        PmParams: With C = (e^{epsilon/2} + 1) / (e^{epsilon/2} - 1)
    """
    eps = check_epsilon(epsilon)
    half = math.exp(eps / 2.0)
    # expm1 keeps the denominator accurate for tiny eps
    C = (half + 1.0) / math.expm1(eps / 2.0)
    return PmParams(epsilon=eps, C=C)


def pm_perturb(value: ArrayLike, params: PmParams, rng: np.random.Generator) -> ArrayLike:
    """
    Perturb values in [-1, 1] with the Piecewise Mechanism.

    With probability e^{eps/2} / (e^{eps/2} + 1) the output is uniform on
    the center piece [l(v), r(v)]; otherwise it is uniform on
    [-C, l(v)) U (r(v), C], each tail weighted by its length.

    Args:
        value: Scalar or array of inputs, each in [-1, 1]
        params: Mechanism parameters
        rng: Random source owned by the caller

    Returns:
        Perturbed value(s) in [-C, C], unbiased for the input

    Raises:
        ContractViolationError: If any input lies outside [-1, 1]
    """
    values = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(np.abs(values) > 1.0):
        raise ContractViolationError("pm_perturb inputs must lie in [-1, 1]; clamp before calling")

    C = params.C
    left = params.left(values)
    right = params.right(values)

    in_center = rng.random(values.shape) < params.center_probability
    center_draw = left + (C - 1.0) * rng.random(values.shape)

    # tails have total length C + 1; the left one is l + C long
    offset = (C + 1.0) * rng.random(values.shape)
    left_length = left + C
    tail_draw = np.where(offset < left_length, -C + offset, right + (offset - left_length))

    out = np.where(in_center, center_draw, tail_draw)
    out = np.clip(out, -C, C)
    if np.ndim(out) == 0:
        return float(out)
    return out
