"""Brute-force joint and conditional entropies by word enumeration.

S_n sums -mu(w) log mu(w) over all q^n words. Words are expanded level by level
in blocks of running row vectors start @ E_{w1} ... E_{wk}, so each prefix
product is computed once and memory stays bounded by the block size.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from opentelemetry import trace
from scipy.special import entr

from .errors import ParameterOutOfRange, TooLarge
from .linalg import FloatArray
from .model import HmpModel, InitialDistribution, initial_vector

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

DEFAULT_MAX_LENGTH = 14
DEFAULT_MAX_LEAVES = 100_000_000
CHUNK_ROWS = 1 << 15


@dataclass(frozen=True)
class OracleTrace:
    """Joint entropies S_1..S_n_max and their successive differences.

    Attributes:
        n_max: Longest word length enumerated.
        initial: Starting distribution of the hidden chain.
        s: S_1..S_{n_max}.
        g: G_2..G_{n_max}, with G_n = S_n - S_{n-1}.
        elapsed: Wall-clock seconds spent on each S_n.
        base: Logarithm base.
    """

    n_max: int
    initial: InitialDistribution
    s: list[float]
    g: list[float]
    elapsed: list[float] = field(default_factory=list)
    base: float = 2.0

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping of the trace."""
        return {
            "n_max": self.n_max,
            "initial": self.initial,
            "base": self.base,
            "S": self.s,
            "G": self.g,
            "elapsed_seconds": self.elapsed,
        }


def check_size(
    q: int,
    n: int,
    max_length: int = DEFAULT_MAX_LENGTH,
    max_leaves: int = DEFAULT_MAX_LEAVES,
) -> None:
    """Reject enumerations longer than ``max_length`` or with too many words.

    Raises:
        ParameterOutOfRange: If ``n`` < 1.
        TooLarge: If a guard is exceeded.
    """
    if n < 1:
        raise ParameterOutOfRange(f"word length must be >= 1, got {n}")
    if n > max_length:
        raise TooLarge(f"word length {n} exceeds the limit of {max_length}")
    if q**n > max_leaves:
        raise TooLarge(f"{q}^{n} words exceed the limit of {max_leaves}")


def _leaf_entropy(E_a: FloatArray, rows: FloatArray, remaining: int) -> float:
    """Natural-log entropy contribution of every extension of ``rows``."""
    if remaining == 0:
        return float(entr(rows.sum(axis=1)).sum())
    q = E_a.shape[0]
    total = 0.0
    for lo in range(0, rows.shape[0], CHUNK_ROWS):
        block = rows[lo : lo + CHUNK_ROWS]
        children = np.einsum("rk,akl->arl", block, E_a).reshape(-1, q)
        total += _leaf_entropy(E_a, children, remaining - 1)
    return total


def _joint_entropy_nats(
    model: HmpModel,
    n: int,
    initial: InitialDistribution,
    workers: int,
) -> float:
    start = initial_vector(model, initial)
    E_a = np.asarray(model.E_a)
    first = [(start @ E_a[a])[None, :] for a in range(model.q)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda rows: _leaf_entropy(E_a, rows, n - 1), first))
    else:
        parts = [_leaf_entropy(E_a, rows, n - 1) for rows in first]

    # Ascending first symbol regardless of worker count
    total = 0.0
    for part in parts:
        total += part
    return total


def joint_entropy(
    model: HmpModel,
    n: int,
    initial: InitialDistribution = "stationary",
    base: float = 2.0,
    max_length: int = DEFAULT_MAX_LENGTH,
    max_leaves: int = DEFAULT_MAX_LEAVES,
    workers: int = 1,
) -> float:
    """Joint entropy S_n of the first n output symbols.

    Args:
        model: The HMP.
        n: Word length.
        initial: Starting distribution of the hidden chain.
        base: Logarithm base.
        max_length: Longest admissible word length.
        max_leaves: Largest admissible number of words q^n.
        workers: Threads used across the first symbol.

    Raises:
        TooLarge: If a guard is exceeded.
    """
    check_size(model.q, n, max_length, max_leaves)
    return _joint_entropy_nats(model, n, initial, workers) / math.log(base)


def conditional_entropy(
    model: HmpModel,
    n: int,
    initial: InitialDistribution = "stationary",
    base: float = 2.0,
    max_length: int = DEFAULT_MAX_LENGTH,
    max_leaves: int = DEFAULT_MAX_LEAVES,
    workers: int = 1,
) -> float:
    """G_n = S_n - S_{n-1} for n >= 2.

    Raises:
        ParameterOutOfRange: If ``n`` < 2.
        TooLarge: If a guard is exceeded.
    """
    if n < 2:
        raise ParameterOutOfRange(f"conditional entropy needs n >= 2, got {n}")
    kwargs: dict[str, Any] = {
        "initial": initial,
        "base": base,
        "max_length": max_length,
        "max_leaves": max_leaves,
        "workers": workers,
    }
    return joint_entropy(model, n, **kwargs) - joint_entropy(model, n - 1, **kwargs)


def joint_entropies(
    model: HmpModel,
    n_max: int,
    initial: InitialDistribution = "stationary",
    base: float = 2.0,
    max_length: int = DEFAULT_MAX_LENGTH,
    max_leaves: int = DEFAULT_MAX_LEAVES,
    workers: int = 1,
) -> OracleTrace:
    """S_1..S_{n_max}, G_2..G_{n_max} and the time spent on each length.

    Raises:
        TooLarge: If ``n_max`` exceeds a guard; checked before any work starts.
    """
    check_size(model.q, n_max, max_length, max_leaves)
    s: list[float] = []
    elapsed: list[float] = []
    with tracer.start_as_current_span("oracle.joint_entropies") as span:
        span.set_attribute("entrate.q", model.q)
        span.set_attribute("entrate.n_max", n_max)
        for n in range(1, n_max + 1):
            started = time.perf_counter()
            s.append(_joint_entropy_nats(model, n, initial, workers) / math.log(base))
            elapsed.append(time.perf_counter() - started)
            logger.debug(f"S_{n} = {s[-1]:.15f} in {elapsed[-1]:.3f}s")

    g = [s[i] - s[i - 1] for i in range(1, len(s))]
    return OracleTrace(
        n_max=n_max, initial=initial, s=s, g=g, elapsed=elapsed, base=base
    )
