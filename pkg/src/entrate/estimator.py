"""Parameter estimation from an observation sequence and the entropy of the fit.

Baum-Welch for the unambiguous-symbol channel: the emission law has a fixed
zero pattern (a nonzero symbol a can only come from state a), so the only free
emission parameters are the erasure probabilities epsilon_a. With

    m(t) = diag(R[y_t]) E,    R[y, k] = P(Y=y | X=k),

the forward vector alpha(t) = P(X_t, Y_1..Y_{t-1}) obeys alpha(t+1) = alpha(t) m(t)
and the backward vector beta(t) = m(t) beta(t+1), beta(n+1) = 1.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
from opentelemetry import trace

from .callbacks import EmCallbacks
from .engine import EntropyEstimate, entropy_rate
from .errors import (
    DomainError,
    EmptySequence,
    GammaNotContracting,
    ParameterOutOfRange,
    ZeroLikelihood,
)
from .linalg import FloatArray
from .model import (
    HmpModel,
    InitialDistribution,
    NoiseSpec,
    ObservationSequence,
    build_hmp_model,
    build_markov_source,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

PARAMETER_FLOOR = 1e-6
DEFAULT_EPSILON0 = 0.05
JITTER_CONCENTRATION = 50.0


def _clip_parameters(
    E: FloatArray, epsilon: FloatArray
) -> tuple[FloatArray, FloatArray]:
    E = np.clip(E, PARAMETER_FLOOR, 1.0 - PARAMETER_FLOOR)
    E = E / E.sum(axis=1, keepdims=True)
    epsilon = np.clip(epsilon, PARAMETER_FLOOR, 1.0 - PARAMETER_FLOOR)
    return E, epsilon


@dataclass(frozen=True)
class EmParameters:
    """Transition matrix and noise vector being fitted.

    Attributes:
        E: Row-stochastic q x q transition matrix.
        epsilon: Length q-1 erasure probabilities.
    """

    E: FloatArray
    epsilon: FloatArray

    @property
    def q(self) -> int:
        """Alphabet size."""
        return int(self.E.shape[0])

    def clipped(self) -> "EmParameters":
        """Parameters moved into [floor, 1 - floor] with rows renormalized."""
        E, epsilon = _clip_parameters(
            np.asarray(self.E, dtype=np.float64),
            np.asarray(self.epsilon, dtype=np.float64),
        )
        return EmParameters(E=E, epsilon=epsilon)

    def to_model(self, check_invertible: bool = True) -> HmpModel:
        """Build the HMP these parameters describe."""
        return build_hmp_model(
            build_markov_source(self.E),
            NoiseSpec(self.epsilon),
            check_invertible=check_invertible,
        )

    @classmethod
    def initial_guess(
        cls,
        observations: ObservationSequence,
        seed: int | None = None,
        epsilon0: float = DEFAULT_EPSILON0,
    ) -> "EmParameters":
        """Starting point from observed symbol-pair frequencies.

        Rows are add-one smoothed counts of consecutive symbol pairs. With a seed,
        each row is replaced by a Dirichlet draw centred on it so that different
        seeds start EM from different points.

        Args:
            observations: The sequence to fit.
            seed: Optional seed for the Dirichlet jitter.
            epsilon0: Initial erasure probability for every nonzero symbol.
        """
        q = observations.q
        symbols = observations.symbols
        counts = np.ones((q, q))
        np.add.at(counts, (symbols[:-1], symbols[1:]), 1.0)
        E = counts / counts.sum(axis=1, keepdims=True)
        if seed is not None:
            rng = np.random.default_rng(seed)
            E = np.vstack([rng.dirichlet(JITTER_CONCENTRATION * q * row) for row in E])
        return cls(E=E, epsilon=np.full(q - 1, epsilon0)).clipped()


@dataclass(frozen=True)
class FbState:
    """Forward-backward quantities for one observation sequence.

    Rows are indexed t = 0..n for alpha/beta (time t+1 in 1-based notation) and
    t = 0..n-1 for the per-symbol arrays.

    Attributes:
        alpha: Shape (n+1, q) forward vectors, normalized when scaled.
        beta: Shape (n+1, q) backward vectors, normalized when scaled.
        scale: Shape (n,) normalizers; all ones when unscaled.
        loglik: log2 P(Y).
        posterior: Shape (n, q); posterior[t, k] = P(X_t = k | Y).
        pairwise: Shape (n-1, q, q); P(X_t = k, X_{t+1} = l | Y).
        scaled: Whether per-step scaling was applied.
    """

    alpha: FloatArray
    beta: FloatArray
    scale: FloatArray
    loglik: float
    posterior: FloatArray
    pairwise: FloatArray
    scaled: bool = True


@dataclass(frozen=True)
class EmResult:
    """Outcome of an EM fit.

    Attributes:
        E_hat: Fitted transition matrix.
        epsilon_hat: Fitted noise parameters.
        loglik_trace: log2-likelihood of the starting point and of every iterate.
        iterations: Number of completed iterations.
        converged: Whether the parameter change fell below the tolerance.
    """

    E_hat: FloatArray
    epsilon_hat: FloatArray
    loglik_trace: list[float]
    iterations: int
    converged: bool

    @property
    def parameters(self) -> EmParameters:
        """Fitted parameters as an ``EmParameters``."""
        return EmParameters(E=self.E_hat, epsilon=self.epsilon_hat)

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping of the fit."""
        return {
            "transition": self.E_hat.tolist(),
            "epsilon": self.epsilon_hat.tolist(),
            "loglik_trace": self.loglik_trace,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class SequenceEstimate:
    """Entropy of the model fitted to an observation sequence."""

    entropy: EntropyEstimate
    em: EmResult


def emission_matrix(epsilon: FloatArray) -> FloatArray:
    """Channel matrix R with R[y, k] = P(Y=y | X=k)."""
    q = epsilon.size + 1
    R = np.zeros((q, q))
    R[0, 0] = 1.0
    R[0, 1:] = epsilon
    R[np.arange(1, q), np.arange(1, q)] = 1.0 - epsilon
    return R


def forward_backward(
    observations: ObservationSequence,
    E: FloatArray,
    epsilon: FloatArray,
    initial: InitialDistribution | FloatArray = "uniform",
    scaled: bool = True,
) -> FbState:
    """Forward and backward recursions with state and pairwise posteriors.

    Args:
        observations: Nonempty symbol sequence.
        E: Transition matrix.
        epsilon: Erasure probabilities of symbols 1..q-1.
        initial: ``"uniform"``, ``"stationary"`` or an explicit distribution of
            X_1.
        scaled: Normalize alpha and beta at every step. Unscaled recursions
            underflow after a few hundred symbols.

    Returns:
        The ``FbState``.

    Raises:
        ZeroLikelihood: If the sequence is impossible under the parameters.
    """
    E = np.asarray(E, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    q = E.shape[0]
    if observations.q != q:
        raise ValueError(f"sequence alphabet q={observations.q} does not match q={q}")
    symbols = observations.symbols
    n = symbols.size

    if isinstance(initial, str):
        if initial == "uniform":
            start = np.full(q, 1.0 / q)
        elif initial == "stationary":
            start = build_markov_source(E).tau
        else:
            raise ValueError(f"unknown initial distribution '{initial}'")
    else:
        start = np.asarray(initial, dtype=np.float64)

    steps = emission_matrix(epsilon)[:, :, None] * E[None, :, :]

    alpha = np.empty((n + 1, q))
    beta = np.empty((n + 1, q))
    scale = np.ones(n)
    alpha[0] = start
    for t in range(n):
        nxt = alpha[t] @ steps[symbols[t]]
        if scaled:
            total = nxt.sum()
            if not total > 0.0:
                raise ZeroLikelihood(
                    f"symbol {symbols[t]} at position {t} is impossible"
                )
            scale[t] = total
            nxt = nxt / total
        alpha[t + 1] = nxt

    if scaled:
        loglik = float(np.log2(scale).sum())
        likelihood = 1.0
    else:
        likelihood = float(alpha[n].sum())
        if not likelihood > 0.0:
            raise ZeroLikelihood("observation sequence has zero probability")
        loglik = math.log2(likelihood)

    beta[n] = 1.0
    for t in range(n - 1, -1, -1):
        beta[t] = steps[symbols[t]] @ beta[t + 1] / scale[t]

    posterior = alpha[:n] * beta[:n] / likelihood
    pairwise = (
        alpha[: n - 1, :, None]
        * steps[symbols[: n - 1]]
        * beta[1:n, None, :]
        / (scale[: n - 1, None, None] * likelihood)
    )
    return FbState(
        alpha=alpha,
        beta=beta,
        scale=scale,
        loglik=loglik,
        posterior=posterior,
        pairwise=pairwise,
        scaled=scaled,
    )


def _floored_row(counts: FloatArray) -> FloatArray:
    """Maximize sum_l counts_l log p_l over the simplex subject to p_l >= floor.

    The maximizer is p_l = max(floor, counts_l / lambda); entries are pinned to
    the floor until the remaining mass can be shared in proportion to counts.
    """
    pinned = np.zeros(counts.size, dtype=bool)
    while True:
        free = np.where(pinned, 0.0, counts)
        mass = 1.0 - PARAMETER_FLOOR * pinned.sum()
        if free.sum() > 0.0:
            row = np.where(pinned, PARAMETER_FLOOR, mass * free / free.sum())
        else:
            row = np.where(pinned, PARAMETER_FLOOR, mass / (~pinned).sum())
        low = ~pinned & (row < PARAMETER_FLOOR)
        if not low.any():
            return row
        pinned |= low


def _m_step(
    observations: ObservationSequence, fb: FbState, current: EmParameters
) -> EmParameters:
    transitions = fb.pairwise.sum(axis=0)
    E = np.array(
        [
            _floored_row(counts) if counts.sum() > 0.0 else old
            for counts, old in zip(transitions, current.E, strict=True)
        ]
    )

    occupancy = fb.posterior.sum(axis=0)[1:]
    erased = fb.posterior[observations.symbols == 0].sum(axis=0)[1:]
    epsilon = np.where(
        occupancy > 0.0,
        erased / np.where(occupancy > 0.0, occupancy, 1.0),
        current.epsilon,
    )
    epsilon = np.clip(epsilon, PARAMETER_FLOOR, 1.0 - PARAMETER_FLOOR)
    return EmParameters(E=E, epsilon=epsilon)


def em_fit(
    observations: ObservationSequence,
    theta0: EmParameters,
    max_iters: int = 500,
    tol: float = 1e-6,
    initial: InitialDistribution = "uniform",
    callbacks: EmCallbacks | None = None,
) -> EmResult:
    """Fit E and epsilon by expectation-maximization.

    Each iteration runs the forward-backward E-step and the closed-form M-step

        E_kl  proportional to  sum_t P(X_t=k, X_{t+1}=l | Y)
        eps_a = sum_{t: y_t=0} P(X_t=a | Y) / sum_t P(X_t=a | Y)

    with all parameters clipped to [1e-6, 1 - 1e-6]. Iteration stops once the
    max-abs parameter change is below ``tol`` or after ``max_iters`` iterations.

    Raises:
        EmptySequence: If fewer than two symbols are given.
        ZeroLikelihood: If the sequence is impossible under ``theta0``.
        ParameterOutOfRange: If ``max_iters`` is negative.
    """
    if len(observations) < 2:
        raise EmptySequence("EM needs at least two observed symbols")
    if max_iters < 0:
        raise ParameterOutOfRange(f"max_iters must be >= 0, got {max_iters}")

    params = theta0.clipped()
    with tracer.start_as_current_span("em_fit") as span:
        span.set_attribute("entrate.q", observations.q)
        span.set_attribute("entrate.length", len(observations))
        if callbacks is not None:
            callbacks.before_fit(observations, params)

        fb = forward_backward(observations, params.E, params.epsilon, initial)
        trace_ll = [fb.loglik]
        converged = False
        iterations = 0
        for iterations in range(1, max_iters + 1):
            updated = _m_step(observations, fb, params)
            change = max(
                float(np.abs(updated.E - params.E).max()),
                float(np.abs(updated.epsilon - params.epsilon).max()),
            )
            params = updated
            fb = forward_backward(observations, params.E, params.epsilon, initial)
            trace_ll.append(fb.loglik)
            if callbacks is not None:
                callbacks.after_iteration(iterations, fb.loglik, change)
            if change < tol:
                converged = True
                break

        span.set_attribute("entrate.iterations", iterations)
        result = EmResult(
            E_hat=params.E,
            epsilon_hat=params.epsilon,
            loglik_trace=trace_ll,
            iterations=iterations,
            converged=converged,
        )
        if callbacks is not None:
            callbacks.after_fit(result)
    return result


def estimate_entropy_from_sequence(
    observations: ObservationSequence,
    theta0: EmParameters | None = None,
    max_iters: int = 500,
    tol: float = 1e-6,
    N: int = 100,
    base: float = 2.0,
    seed: int | None = None,
    callbacks: EmCallbacks | None = None,
) -> SequenceEstimate:
    """Fit the model to ``observations`` and return its entropy rate.

    When the fitted model is outside the certified region (singular E0 or no
    contraction), the entropy is still returned, flagged as uncertified.

    Args:
        observations: The sequence to fit.
        theta0: Starting parameters; defaults to ``EmParameters.initial_guess``.
        max_iters: EM iteration cap.
        tol: EM parameter-change tolerance.
        N: Truncation depth for the entropy.
        base: Logarithm base.
        seed: Seed for the default initial guess.
        callbacks: Optional EM progress hooks.
    """
    if theta0 is None:
        theta0 = EmParameters.initial_guess(observations, seed=seed)
    fit = em_fit(
        observations, theta0, max_iters=max_iters, tol=tol, callbacks=callbacks
    )

    try:
        estimate = entropy_rate(fit.parameters.to_model(), N, base=base)
    except (DomainError, GammaNotContracting) as e:
        logger.warning(f"Fitted model is outside the certified region ({e})")
        model = fit.parameters.to_model(check_invertible=False)
        estimate = entropy_rate(model, N, base=base, require_bound=False)
        if estimate.certified:
            estimate = _uncertified(estimate)
    return SequenceEstimate(entropy=estimate, em=fit)


def _uncertified(estimate: EntropyEstimate) -> EntropyEstimate:
    return replace(estimate, certified=False, B=math.inf, err_bound=math.inf)
