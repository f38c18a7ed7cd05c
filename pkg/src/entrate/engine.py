"""Fast entropy rate of unambiguous-symbol HMPs.

The belief state of the process jumps to e_j (row j of E) whenever a nonzero
symbol j is observed and otherwise drifts under the zero-symbol map

    Gamma_0(v) = E_0^T v / <v, E_0 1>.

The stationary belief distribution is therefore carried by the countable orbit
{Gamma_0^m e_j}, with mass Phi_j * c[j, m] on Gamma_0^m e_j. Truncating the orbit
at depth N gives a small least-squares system for Phi and an entropy estimate
H_N whose error decays like gamma^(N+1).
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from opentelemetry import trace
from scipy.special import entr

from .errors import (
    GammaNotContracting,
    NoConvergence,
    ParameterOutOfRange,
    RankDeficient,
    ZeroNormalizer,
)
from .linalg import FloatArray, solve_checked
from .model import HmpModel

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

Summand = Literal["predictive", "belief"]

FIXED_POINT_TOL = 1e-14
FIXED_POINT_MAX_ITERS = 100_000
GAMMA_MIN_DEPTH = 200
GAMMA_CEILING = 1.0 - 1e-12
BOOTSTRAP_DEPTH = 50


@dataclass(frozen=True)
class SupportOrbit:
    """Truncated orbit of the zero-symbol map from every collapse point.

    Attributes:
        N: Truncation depth.
        points: Shape (q-1, N+1, q); points[j-1, m] = Gamma_0^m e_j.
        c: Shape (q-1, N+1); c[j-1, m] = <e_j, E_0^m 1>, with c[:, 0] = 1.
        zero_mass: Shape (q-1, K+1) with K = max(N, 200);
            zero_mass[j-1, k] = <Gamma_0^k e_j, E_0 1>.
        fixed_point: Limit of Gamma_0 iterated from e_1.
        fixed_point_converged: False when the fixed-point iteration hit its cap.
    """

    N: int
    points: FloatArray
    c: FloatArray
    zero_mass: FloatArray
    fixed_point: FloatArray
    fixed_point_converged: bool


@dataclass(frozen=True)
class PhiSolution:
    """Least-squares weights of the collapse points.

    Attributes:
        phi: Length q-1 weight vector.
        residual: Euclidean norm of A_hat @ phi - b.
        pinv: Pseudo-inverse (A^T A)^-1 A^T of shape (q-1, q).
    """

    phi: FloatArray
    residual: float
    pinv: FloatArray


@dataclass(frozen=True)
class EntropyEstimate:
    """Truncated entropy rate with its error certificate.

    Attributes:
        value: H_N in units of ``base``.
        N: Truncation depth.
        gamma: Contraction factor.
        B: Bound constant; ``inf`` when the bound is not certified.
        err_bound: B * gamma^(N+1); ``inf`` when the bound is not certified.
        phi_hat: Least-squares weights.
        residual: Least-squares residual norm.
        normalization: sum_j sum_m c[j, m] phi_hat[j].
        certified: Whether gamma < 1 so that err_bound is meaningful.
        base: Logarithm base of ``value`` and ``err_bound``.
        fixed_point_converged: Whether the orbit's fixed point converged.
    """

    value: float
    N: int
    gamma: float
    B: float
    err_bound: float
    phi_hat: FloatArray
    residual: float
    normalization: float
    certified: bool = True
    base: float = 2.0
    fixed_point_converged: bool = True

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping of the estimate."""
        return {
            "value": self.value,
            "N": self.N,
            "gamma": self.gamma,
            "B": self.B if math.isfinite(self.B) else None,
            "err_bound": self.err_bound if math.isfinite(self.err_bound) else None,
            "phi_hat": self.phi_hat.tolist(),
            "residual": self.residual,
            "normalization": self.normalization,
            "certified": self.certified,
            "base": self.base,
            "fixed_point_converged": self.fixed_point_converged,
        }


def gamma_map(model: HmpModel, nu: FloatArray) -> FloatArray:
    """Apply the zero-symbol belief update to a point of the simplex.

    Raises:
        ZeroNormalizer: If <nu, E_0 1> is not positive.
    """
    mass = float(nu @ model.d)
    if not mass > 0.0:
        raise ZeroNormalizer(f"zero-symbol probability {mass} at belief {nu}")
    out: FloatArray = (nu @ model.E0) / mass
    return out


def _fixed_point(model: HmpModel) -> tuple[FloatArray, bool]:
    nu = model.seeds[1].copy()
    for iteration in range(FIXED_POINT_MAX_ITERS):
        nxt = gamma_map(model, nu)
        if np.max(np.abs(nxt - nu)) < FIXED_POINT_TOL:
            logger.debug(f"Fixed point reached after {iteration + 1} iterations")
            return nxt, True
        nu = nxt
    return nu, False


def build_orbit(model: HmpModel, N: int) -> SupportOrbit:
    """Iterate Gamma_0 from every collapse point e_1..e_{q-1}.

    The weights follow c[j, m] = c[j, m-1] * <Gamma_0^(m-1) e_j, E_0 1>, which
    telescopes to <e_j, E_0^m 1>. The orbit is advanced for all j at once and
    carried to depth max(N, 200) so that ``gamma_sup`` sees a long prefix.

    Args:
        model: The HMP.
        N: Truncation depth, N >= 0.

    Returns:
        The truncated ``SupportOrbit``. A fixed-point iteration that hits its
        cap is logged and flagged rather than raised.

    Raises:
        ParameterOutOfRange: If ``N`` is negative.
    """
    if N < 0:
        raise ParameterOutOfRange(f"truncation depth must be >= 0, got {N}")
    depth = max(N, GAMMA_MIN_DEPTH)
    q = model.q

    points = np.empty((q - 1, depth + 1, q))
    zero_mass = np.empty((q - 1, depth + 1))
    current = np.array(model.seeds[1:], dtype=np.float64)
    for m in range(depth + 1):
        points[:, m] = current
        mass = current @ model.d
        zero_mass[:, m] = mass
        if np.any(mass <= 0.0):
            raise ZeroNormalizer(f"zero-symbol probability vanished at depth {m}")
        current = (current @ model.E0) / mass[:, None]

    c = np.ones((q - 1, N + 1))
    if N > 0:
        c[:, 1:] = np.cumprod(zero_mass[:, :N], axis=1)

    fixed_point, converged = _fixed_point(model)
    if not converged:
        error = NoConvergence(
            f"fixed point not reached within {FIXED_POINT_MAX_ITERS} iterations"
        )
        logger.warning(f"{error}; using the last iterate")

    return SupportOrbit(
        N=N,
        points=points[:, : N + 1],
        c=c,
        zero_mass=zero_mass,
        fixed_point=fixed_point,
        fixed_point_converged=converged,
    )


def gamma_sup(model: HmpModel, orbit: SupportOrbit) -> float:
    """Largest zero-symbol probability over the orbit prefix and its limit.

    Raises:
        GammaNotContracting: If the result is not below 1 - 1e-12.
    """
    gamma = max(float(orbit.zero_mass.max()), float(orbit.fixed_point @ model.d))
    if gamma >= GAMMA_CEILING:
        raise GammaNotContracting(f"contraction factor {gamma:.15g} is not below 1")
    return gamma


def assemble_A(model: HmpModel, orbit: SupportOrbit) -> tuple[FloatArray, FloatArray]:
    """Build the truncated balance system A_hat @ phi = b.

    Rows 0..q-2 state that the mass arriving at e_i equals phi_i (all zero when
    q = 2); the last row normalizes the total mass to one.

    Returns:
        ``(A_hat, b)`` with shapes (q, q-1) and (q,).
    """
    q = model.q
    # emitted[j, m, i] = <Gamma_0^m e_j, E_i 1>
    emitted = orbit.points * model.emit_scale
    arrivals = np.einsum("jm,jmi->ij", orbit.c, emitted)

    A_hat = np.zeros((q, q - 1))
    if q > 2:
        A_hat[:-1] = arrivals[1:] - np.eye(q - 1)
    A_hat[-1] = orbit.c.sum(axis=1)
    b = np.zeros(q)
    b[-1] = 1.0
    return A_hat, b


def solve_phi(A_hat: FloatArray, b: FloatArray) -> PhiSolution:
    """Least-squares weights from the normal equations.

    Raises:
        RankDeficient: If a pivot of A^T A falls below 1e-12.
    """
    normal = A_hat.T @ A_hat
    pinv = solve_checked(normal, A_hat.T, error=RankDeficient)
    phi = pinv @ b
    residual = float(np.linalg.norm(A_hat @ phi - b))
    return PhiSolution(phi=phi, residual=residual, pinv=pinv)


def _pointwise_entropy(
    model: HmpModel, points: FloatArray, summand: Summand
) -> FloatArray:
    """Natural-log entropy of each point's summand distribution."""
    if summand == "belief":
        return entr(points).sum(axis=-1)  # type: ignore[no-any-return]
    if summand != "predictive":
        raise ValueError(f"unknown summand '{summand}'")
    predictive = points * model.emit_scale
    predictive[..., 0] = points @ model.d
    return entr(predictive).sum(axis=-1)  # type: ignore[no-any-return]


def bound_constant(q: int, gamma: float, pinv: FloatArray) -> float:
    """B = q/(1-gamma) * (1 + q * ||pinv||_1 / (1-gamma)), induced 1-norm."""
    pinv_norm = float(np.abs(pinv).sum(axis=0).max())
    return q / (1.0 - gamma) * (1.0 + q * pinv_norm / (1.0 - gamma))


def entropy_rate(
    model: HmpModel,
    N: int,
    base: float = 2.0,
    require_bound: bool = True,
    summand: Summand = "predictive",
) -> EntropyEstimate:
    """Entropy rate H_N from the depth-N truncated orbit.

    Args:
        model: The HMP.
        N: Truncation depth, N >= 0.
        base: Logarithm base of the result.
        require_bound: Raise when gamma is not below one. With ``False`` the
            estimate is returned uncertified with an infinite bound.
        summand: ``"predictive"`` uses the entropy of the next-symbol
            distribution at each belief; ``"belief"`` uses the entropy of the
            belief vector itself.

    Returns:
        The ``EntropyEstimate``.

    Raises:
        GammaNotContracting: If ``require_bound`` and gamma >= 1 - 1e-12.
        RankDeficient: If the normal equations are singular.
    """
    with tracer.start_as_current_span("entropy_rate") as span:
        span.set_attribute("entrate.q", model.q)
        span.set_attribute("entrate.N", N)

        orbit = build_orbit(model, N)
        try:
            gamma = gamma_sup(model, orbit)
            certified = True
        except GammaNotContracting:
            if require_bound:
                raise
            gamma = max(
                float(orbit.zero_mass.max()), float(orbit.fixed_point @ model.d)
            )
            certified = False
            logger.warning(
                f"Contraction factor {gamma:.6g} is not below 1; "
                "returning H_N without a certified bound"
            )

        A_hat, b = assemble_A(model, orbit)
        solution = solve_phi(A_hat, b)

        h = _pointwise_entropy(model, orbit.points, summand)
        per_seed = (orbit.c * h).sum(axis=1)
        value = float(solution.phi @ per_seed) / math.log(base)

        if certified:
            B = bound_constant(model.q, gamma, solution.pinv)
            err_bound = B * gamma ** (N + 1) / math.log2(base)
        else:
            B = err_bound = math.inf

        normalization = float(orbit.c.sum(axis=1) @ solution.phi)
        logger.debug(
            f"H_{N} = {value:.15f} (gamma={gamma:.6f}, B={B:.6g}, "
            f"residual={solution.residual:.3e})"
        )
        span.set_attribute("entrate.value", value)
        span.set_attribute("entrate.gamma", gamma)

    return EntropyEstimate(
        value=value,
        N=N,
        gamma=gamma,
        B=B,
        err_bound=err_bound,
        phi_hat=solution.phi,
        residual=solution.residual,
        normalization=normalization,
        certified=certified,
        base=base,
        fixed_point_converged=orbit.fixed_point_converged,
    )


def terms_for_accuracy(model: HmpModel, delta: float, base: float = 2.0) -> int:
    """Smallest depth N whose certified bound is at most ``delta``.

    B is evaluated at a bootstrap depth, the candidate N is taken from
    N + 1 >= log(delta / B) / log(gamma), and the candidate is then moved up or
    down until it is the smallest depth whose own bound satisfies ``delta``.

    Raises:
        ParameterOutOfRange: If ``delta`` is not positive.
        GammaNotContracting: If gamma >= 1 - 1e-12.
    """
    if not delta > 0.0:
        raise ParameterOutOfRange(f"accuracy must be > 0, got {delta}")

    def bound(N: int) -> float:
        return entropy_rate(model, N, base=base).err_bound

    bootstrap = entropy_rate(model, BOOTSTRAP_DEPTH, base=base)
    B = bootstrap.B / math.log2(base)
    N = max(0, math.ceil(math.log(delta / B) / math.log(bootstrap.gamma)) - 1)

    while bound(N) > delta:
        N += 1
    while N > 0 and bound(N - 1) <= delta:
        N -= 1
    logger.info(f"Accuracy {delta:g} reached with N={N}")
    return N


def convergence_table(
    model: HmpModel,
    depths: list[int],
    base: float = 2.0,
    require_bound: bool = True,
) -> list[EntropyEstimate]:
    """Entropy estimates for several truncation depths, in the given order."""
    return [
        entropy_rate(model, N, base=base, require_bound=require_bound) for N in depths
    ]
