"""Markov sources and hidden Markov models with unambiguous symbols.

The hidden chain X takes values in {0, ..., q-1} and is observed through a
channel that always reports state 0 as symbol 0 and reports state a >= 1 either
as a (probability 1 - epsilon_a) or as 0 (probability epsilon_a). Every nonzero
symbol therefore identifies the hidden state.

The output measure is generated by the triplet (tau, 1, {E_a}) with

    E_0 = F_0 + sum_a epsilon_a F_a,    E_a = (1 - epsilon_a) F_a,

where F_a keeps only row a of the transition matrix E, so that word
probabilities are <tau, E_{w1} ... E_{wn} 1>.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict
from scipy.special import entr

from .errors import (
    EmptySequence,
    EntryOutOfRange,
    EpsilonOutOfRange,
    GammaNotContracting,
    NonStochastic,
    ParameterOutOfRange,
    SingularE0,
    SymbolOutOfRange,
)
from .linalg import PIVOT_TOL, FloatArray, min_pivot, solve_checked

logger = logging.getLogger(__name__)

IntArray = npt.NDArray[np.int64]
InitialDistribution = Literal["stationary", "uniform"]

ROW_SUM_TOL = 1e-9


def _frozen(array: npt.ArrayLike, dtype: type = np.float64) -> npt.NDArray[Any]:
    """Return a read-only copy of ``array``."""
    out = np.array(array, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class MarkovSource:
    """A stationary Markov chain on {0, ..., q-1}.

    Attributes:
        E: Row-stochastic transition matrix, E[i, j] = P(X_{n+1}=j | X_n=i).
        tau: Stationary distribution, tau @ E == tau.
    """

    E: FloatArray
    tau: FloatArray

    @property
    def q(self) -> int:
        """Alphabet size."""
        return int(self.E.shape[0])


@dataclass(frozen=True)
class NoiseSpec:
    """Noise parameters of the unambiguous-symbol channel.

    Attributes:
        epsilon: Length q-1 vector; epsilon[a-1] = P(Y=0 | X=a) for a = 1..q-1.
            State 0 is always received as 0 (its implicit epsilon is 1).
    """

    epsilon: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "epsilon", _frozen(self.epsilon))


@dataclass(frozen=True)
class HmpModel:
    """Hidden Markov process generated by a Markov source and a noise spec.

    Attributes:
        source: The hidden Markov chain.
        noise: Channel noise parameters.
        E_a: Array of shape (q, q, q); E_a[a] is the matrix for symbol a.
        d: E_0 @ 1 = (1, epsilon_1, ..., epsilon_{q-1}).
        emit_scale: Entry a >= 1 is 1 - epsilon_a so that E_a @ 1 is
            emit_scale[a] times the a-th unit vector; entry 0 is unused (0.0).
        seeds: Array of shape (q, q); seeds[j] = e_j, the j-th row of E.
    """

    source: MarkovSource
    noise: NoiseSpec
    E_a: FloatArray
    d: FloatArray
    emit_scale: FloatArray
    seeds: FloatArray

    @property
    def q(self) -> int:
        """Alphabet size."""
        return self.source.q

    @property
    def E0(self) -> FloatArray:
        """The zero-symbol matrix."""
        return self.E_a[0]

    @property
    def emission(self) -> FloatArray:
        """Channel matrix R with R[y, k] = P(Y=y | X=k)."""
        q = self.q
        R = np.zeros((q, q))
        R[0, :] = self.d
        R[np.arange(1, q), np.arange(1, q)] = self.emit_scale[1:]
        return R


@dataclass(frozen=True)
class ObservationSequence:
    """A finite string of output symbols, optionally with the hidden states.

    Attributes:
        symbols: Output symbols in {0, ..., q-1}.
        q: Alphabet size the symbols are checked against.
        states: Hidden states of equal length when produced by the sampler.
    """

    symbols: IntArray
    q: int
    states: IntArray | None = field(default=None)

    def __post_init__(self) -> None:
        symbols = _frozen(self.symbols, dtype=np.int64)
        if symbols.ndim != 1 or symbols.size == 0:
            raise EmptySequence("observation sequence must contain at least one symbol")
        if symbols.min() < 0 or symbols.max() >= self.q:
            bad = int(symbols[(symbols < 0) | (symbols >= self.q)][0])
            raise SymbolOutOfRange(f"symbol {bad} is outside {{0..{self.q - 1}}}")
        object.__setattr__(self, "symbols", symbols)
        if self.states is not None:
            states = _frozen(self.states, dtype=np.int64)
            if states.shape != symbols.shape:
                raise ValueError("states must have the same length as symbols")
            object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return int(self.symbols.size)


class Violation(BaseModel):
    """A single failed validity condition.

    Attributes:
        condition: Short label of the condition ("assumption (i)",
            "assumption (ii)", "stochastic", "contraction").
        message: Human-readable description of the failure.
    """

    model_config = ConfigDict(frozen=True)

    condition: str
    message: str


def stationary_distribution(E: FloatArray) -> FloatArray:
    """Solve tau @ E = tau, sum(tau) = 1 by a dense pivoted solve.

    The last balance equation is replaced by the normalization equation.

    Raises:
        SingularSystem: If a pivot falls below 1e-12.
    """
    q = E.shape[0]
    system = E.T - np.eye(q)
    system[-1, :] = 1.0
    rhs = np.zeros(q)
    rhs[-1] = 1.0
    return solve_checked(system, rhs)


def _check_transition(E: FloatArray) -> None:
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {E.shape}")
    if E.shape[0] < 2:
        raise ValueError("alphabet size q must be at least 2")
    if not np.all(np.isfinite(E)):
        raise EntryOutOfRange("transition matrix contains non-finite entries")
    row_error = np.abs(E.sum(axis=1) - 1.0)
    if row_error.max() > ROW_SUM_TOL:
        row = int(np.argmax(row_error))
        raise NonStochastic(f"row {row} sums to {E[row].sum():.12g}, expected 1")
    if np.any(E <= 0.0) or np.any(E >= 1.0):
        i, j = np.argwhere(~((E > 0.0) & (E < 1.0)))[0]
        raise EntryOutOfRange(f"entry E[{i}, {j}] = {E[i, j]} is not in (0, 1)")


def build_markov_source(E: npt.ArrayLike) -> MarkovSource:
    """Validate a transition matrix and attach its stationary distribution.

    Args:
        E: Square row-stochastic matrix with every entry in (0, 1).

    Returns:
        An immutable ``MarkovSource``.

    Raises:
        NonStochastic: If a row sum is off by more than 1e-9.
        EntryOutOfRange: If an entry is not strictly between 0 and 1.
        SingularSystem: If the stationary solve hits a pivot below 1e-12.
    """
    matrix = np.array(E, dtype=np.float64)
    _check_transition(matrix)
    tau = stationary_distribution(matrix)
    logger.debug(f"Stationary distribution for q={matrix.shape[0]}: {tau}")
    return MarkovSource(E=_frozen(matrix), tau=_frozen(tau))


def build_hmp_model(
    source: MarkovSource,
    noise: NoiseSpec,
    check_invertible: bool = True,
) -> HmpModel:
    """Assemble the triplet matrices of the unambiguous-symbol HMP.

    Args:
        source: Hidden Markov chain.
        noise: Noise parameters, one per nonzero symbol.
        check_invertible: Reject models whose E_0 is singular to tolerance.
            Equal-row (i.i.d.) sources have a rank-one E_0 and need ``False``.

    Returns:
        An immutable ``HmpModel``.

    Raises:
        EpsilonOutOfRange: If the noise vector has the wrong length or an
            entry outside (0, 1).
        SingularE0: If ``check_invertible`` and the smallest LU pivot of E_0 is
            below 1e-12.
    """
    q = source.q
    epsilon = noise.epsilon
    if epsilon.shape != (q - 1,):
        raise EpsilonOutOfRange(
            f"expected {q - 1} noise parameters for q={q}, got {epsilon.size}"
        )
    if not np.all(np.isfinite(epsilon)) or np.any(epsilon <= 0.0):
        raise EpsilonOutOfRange(f"noise parameters must be > 0, got {epsilon.tolist()}")
    if np.any(epsilon >= 1.0):
        raise EpsilonOutOfRange(f"noise parameters must be < 1, got {epsilon.tolist()}")

    E = source.E
    d = np.concatenate(([1.0], epsilon))
    emit_scale = np.concatenate(([0.0], 1.0 - epsilon))

    matrices = np.zeros((q, q, q))
    matrices[0] = d[:, None] * E
    for a in range(1, q):
        matrices[a, a, :] = emit_scale[a] * E[a]

    if check_invertible:
        pivot = min_pivot(matrices[0])
        if pivot < PIVOT_TOL:
            raise SingularE0(
                f"E0 is singular to tolerance (smallest pivot {pivot:.3e})"
            )

    return HmpModel(
        source=source,
        noise=noise,
        E_a=_frozen(matrices),
        d=_frozen(d),
        emit_scale=_frozen(emit_scale),
        seeds=_frozen(E),
    )


def _as_symbols(model: HmpModel, word: ObservationSequence | Sequence[int]) -> IntArray:
    if isinstance(word, ObservationSequence):
        if word.q != model.q:
            raise SymbolOutOfRange(
                f"sequence alphabet q={word.q} does not match model q={model.q}"
            )
        return word.symbols
    return ObservationSequence(np.asarray(word, dtype=np.int64), model.q).symbols


def initial_vector(model: HmpModel, initial: InitialDistribution) -> FloatArray:
    """Return the starting distribution named by ``initial``."""
    if initial == "stationary":
        return model.source.tau
    if initial == "uniform":
        return np.full(model.q, 1.0 / model.q)
    raise ValueError(f"unknown initial distribution '{initial}'")


def word_probability(
    model: HmpModel,
    word: ObservationSequence | Sequence[int],
    initial: InitialDistribution = "stationary",
) -> float:
    """Probability of observing ``word`` as the first symbols of the process.

    Evaluates <start, E_{w1} ... E_{wn} 1> left to right, O(n q^2).

    Raises:
        EmptySequence: If ``word`` is empty.
        SymbolOutOfRange: If a symbol is outside {0, ..., q-1}.
    """
    row = initial_vector(model, initial)
    for symbol in _as_symbols(model, word):
        row = row @ model.E_a[symbol]
    return float(row.sum())


def markov_entropy_rate(source: MarkovSource, base: float = 2.0) -> float:
    """Entropy rate of the Markov source, -sum_a tau_a sum_b E_ab log E_ab."""
    return float(source.tau @ entr(source.E).sum(axis=1)) / math.log(base)


def sample_sequence(
    model: HmpModel,
    n: int,
    seed: int,
    initial: InitialDistribution = "stationary",
) -> ObservationSequence:
    """Draw n hidden states and their channel outputs.

    The hidden chain starts from ``initial`` and follows E; state 0 emits 0 and
    state a emits 0 with probability epsilon_a, otherwise a. The result is a pure
    function of the arguments.

    Raises:
        ParameterOutOfRange: If ``n`` < 1.
    """
    if n < 1:
        raise ParameterOutOfRange(f"sequence length must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    q = model.q

    cumulative = np.cumsum(model.source.E, axis=1)
    cumulative[:, -1] = 1.0
    start = np.cumsum(initial_vector(model, initial))
    start[-1] = 1.0

    draws = rng.random(n)
    states = np.empty(n, dtype=np.int64)
    states[0] = min(int(np.searchsorted(start, draws[0], side="right")), q - 1)
    for t in range(1, n):
        row = cumulative[states[t - 1]]
        states[t] = min(int(np.searchsorted(row, draws[t], side="right")), q - 1)

    # d[0] = 1 sends state 0 to symbol 0 with certainty
    erased = rng.random(n) < model.d[states]
    symbols = np.where(erased, 0, states)
    return ObservationSequence(symbols=symbols, q=q, states=states)


def validate_parameters(
    transition: npt.ArrayLike,
    epsilon: npt.ArrayLike,
) -> list[Violation]:
    """Collect every validity condition violated by (transition, epsilon).

    Unlike the builders, which stop at the first failure, this reports all
    problems at once. The contraction check runs only when the model can be
    constructed.

    Returns:
        Violations in check order; an empty list means the model is valid.
    """
    from .engine import build_orbit, gamma_sup

    E = np.array(transition, dtype=np.float64)
    eps = np.array(epsilon, dtype=np.float64)
    q = E.shape[0]
    violations: list[Violation] = []

    row_sums = E.sum(axis=1)
    off = ~np.isfinite(row_sums) | (np.abs(row_sums - 1.0) > ROW_SUM_TOL)
    for row in np.flatnonzero(off):
        violations.append(
            Violation(
                condition="stochastic",
                message=f"row {row} sums to {row_sums[row]:.12g}, expected 1",
            )
        )
    # NaN fails every comparison, so finiteness is checked explicitly
    for i, j in np.argwhere(~np.isfinite(E) | (E <= 0.0) | (E >= 1.0)):
        violations.append(
            Violation(
                condition="assumption (i)",
                message=f"transition entry E[{i}, {j}] = {E[i, j]} is not in (0, 1)",
            )
        )
    if eps.shape != (q - 1,):
        violations.append(
            Violation(
                condition="assumption (i)",
                message=f"expected {q - 1} noise parameters, got {eps.size}",
            )
        )
    else:
        for a in np.flatnonzero(~np.isfinite(eps) | (eps <= 0.0) | (eps >= 1.0)):
            violations.append(
                Violation(
                    condition="assumption (i)",
                    message=f"epsilon[{a}] = {eps[a]} is not in (0, 1)",
                )
            )
    if violations:
        return violations

    d = np.concatenate(([1.0], eps))
    pivot = min_pivot(d[:, None] * E)
    if pivot < PIVOT_TOL:
        violations.append(
            Violation(
                condition="assumption (ii)",
                message=f"E0 is not invertible (smallest pivot {pivot:.3e})",
            )
        )
        return violations

    model = build_hmp_model(build_markov_source(E), NoiseSpec(eps))
    try:
        gamma_sup(model, build_orbit(model, 0))
    except GammaNotContracting as e:
        violations.append(Violation(condition="contraction", message=str(e)))
    return violations
