"""Capacity bounds for the Gilbert burst-error channel.

The channel has a good state G and a bad state B with transitions
P(G -> B) = P and P(B -> G) = Q. The noise bit Z is always 0 in G, so the noise
process is a binary unambiguous-symbol HMP: observing Z = 1 pins the channel to
the bad state. The output is Y = X xor Z and the capacity is governed by the
entropy rate of Z.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
import numpy.typing as npt
from opentelemetry import trace

from .engine import entropy_rate
from .errors import ParameterOutOfRange, SymbolOutOfRange
from .model import (
    HmpModel,
    IntArray,
    NoiseSpec,
    build_hmp_model,
    build_markov_source,
    sample_sequence,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

NoiseMapping = Literal["direct", "flip"]

DEFAULT_TERMS = 100


def _check_probability(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ParameterOutOfRange(f"{name} must be in (0, 1), got {value}")


@dataclass(frozen=True)
class GilbertChannel:
    """Gilbert channel parameters.

    Attributes:
        P: Good-to-bad transition probability.
        Q: Bad-to-good transition probability.
        h: Bad-state noise parameter.
        N: Truncation depth used for the noise entropy rate.
        mapping: How ``h`` becomes the erasure probability of the bad state:
            ``"direct"`` uses epsilon_1 = h, ``"flip"`` uses epsilon_1 = 1 - h.
    """

    P: float
    Q: float
    h: float
    N: int = DEFAULT_TERMS
    mapping: NoiseMapping = "direct"

    def __post_init__(self) -> None:
        _check_probability("P", self.P)
        _check_probability("Q", self.Q)
        _check_probability("h", self.h)
        if self.N < 0:
            raise ParameterOutOfRange(f"N must be >= 0, got {self.N}")
        if self.mapping not in ("direct", "flip"):
            raise ParameterOutOfRange(f"unknown noise mapping '{self.mapping}'")


@dataclass(frozen=True)
class CapacityBounds:
    """Capacity interval around the truncated noise entropy rate.

    ``lower``/``upper`` are 1 + H_N -/+ err_bound, the form with the noise
    entropy added. ``corrected_lower``/``corrected_upper`` are
    1 - H_N -/+ err_bound, which follows from C = 1 - H(Z).
    """

    h: float
    lower: float
    upper: float
    entropy_hN: float
    err_bound: float
    corrected_lower: float
    corrected_upper: float
    gamma: float
    B: float
    N: int
    mapping: NoiseMapping

    @property
    def width(self) -> float:
        """upper - lower."""
        return self.upper - self.lower

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping of the bounds."""
        return {
            "h": self.h,
            "lower": self.lower,
            "upper": self.upper,
            "corrected_lower": self.corrected_lower,
            "corrected_upper": self.corrected_upper,
            "entropy_hN": self.entropy_hN,
            "err_bound": self.err_bound,
            "gamma": self.gamma,
            "B": self.B,
            "N": self.N,
            "mapping": self.mapping,
        }


@dataclass(frozen=True)
class GilbertRun:
    """One simulated transmission through the channel."""

    states: IntArray
    noise: IntArray
    outputs: IntArray


def gilbert_noise_model(
    P: float, Q: float, h: float, mapping: NoiseMapping = "direct"
) -> HmpModel:
    """Binary HMP whose output is the channel noise process Z.

    Raises:
        ParameterOutOfRange: If P, Q or h is outside (0, 1).
    """
    _check_probability("P", P)
    _check_probability("Q", Q)
    _check_probability("h", h)
    epsilon = h if mapping == "direct" else 1.0 - h
    source = build_markov_source([[1.0 - P, P], [Q, 1.0 - Q]])
    return build_hmp_model(source, NoiseSpec(np.array([epsilon])))


def capacity_bounds(channel: GilbertChannel) -> CapacityBounds:
    """Bound the channel capacity from the depth-N noise entropy rate.

    Raises:
        GammaNotContracting: If the noise model has no certified bound.
    """
    with tracer.start_as_current_span("capacity_bounds") as span:
        span.set_attribute("entrate.h", channel.h)
        model = gilbert_noise_model(channel.P, channel.Q, channel.h, channel.mapping)
        estimate = entropy_rate(model, channel.N)
        H = estimate.value
        err = estimate.err_bound
        logger.debug(f"h={channel.h}: H_{channel.N}={H:.15f} err_bound={err:.3e}")

    return CapacityBounds(
        h=channel.h,
        lower=1.0 + H - err,
        upper=1.0 + H + err,
        entropy_hN=H,
        err_bound=err,
        corrected_lower=1.0 - H - err,
        corrected_upper=1.0 - H + err,
        gamma=estimate.gamma,
        B=estimate.B,
        N=channel.N,
        mapping=channel.mapping,
    )


def capacity_sweep(
    P: float,
    Q: float,
    hs: Sequence[float],
    N: int = DEFAULT_TERMS,
    mapping: NoiseMapping = "direct",
) -> list[CapacityBounds]:
    """Capacity bounds for several bad-state noise parameters."""
    return [
        capacity_bounds(GilbertChannel(P=P, Q=Q, h=h, N=N, mapping=mapping))
        for h in hs
    ]


def simulate_gilbert(
    channel: GilbertChannel,
    inputs: npt.ArrayLike,
    seed: int,
) -> GilbertRun:
    """Send ``inputs`` through the channel: Y = X xor Z.

    Raises:
        SymbolOutOfRange: If an input is not a bit.
    """
    bits = np.asarray(inputs, dtype=np.int64)
    if bits.ndim != 1 or bits.size == 0:
        raise ParameterOutOfRange("inputs must be a nonempty bit vector")
    if np.any((bits != 0) & (bits != 1)):
        raise SymbolOutOfRange("channel inputs must be 0 or 1")
    model = gilbert_noise_model(channel.P, channel.Q, channel.h, channel.mapping)
    noise = sample_sequence(model, int(bits.size), seed)
    z = np.asarray(noise.symbols)
    logger.debug(f"Simulated {bits.size} uses with {int(z.sum())} bit errors")
    return GilbertRun(
        states=np.asarray(noise.states), noise=z, outputs=np.bitwise_xor(bits, z)
    )

