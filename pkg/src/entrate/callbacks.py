"""EM lifecycle callbacks for progress monitoring.

``em_fit`` calls these hooks before the first E-step, after every iteration and
once the fit has finished. Any object with the same three methods can be passed
in their place.
"""

import logging
from typing import TYPE_CHECKING, Protocol

if TYPE_CHECKING:
    from .estimator import EmParameters, EmResult
    from .model import ObservationSequence


class EmCallbacks(Protocol):
    """Hooks invoked by ``em_fit``."""

    def before_fit(
        self, observations: "ObservationSequence", theta0: "EmParameters"
    ) -> None: ...

    def after_iteration(self, iteration: int, loglik: float, change: float) -> None: ...

    def after_fit(self, result: "EmResult") -> None: ...


class LoggingCallbacks:
    """Logs EM progress through a standard logger.

    Supports logger injection; all hooks are non-intrusive and return None.

    Attributes:
        logger: Logger instance for recording EM lifecycle events.
    """

    def __init__(self, logger: logging.Logger | None = None) -> None:
        """Initialize logging callbacks with optional logger.

        Args:
            logger: Optional logger instance. If not provided, creates one
                   using the module name.
        """
        if logger is None:
            logger = logging.getLogger(self.__class__.__module__)
        self.logger = logger

    def before_fit(
        self, observations: "ObservationSequence", theta0: "EmParameters"
    ) -> None:
        """Callback executed before the first E-step.

        Args:
            observations: The sequence being fitted.
            theta0: Starting parameters.
        """
        self.logger.info(
            f"*** Starting EM on {len(observations)} symbols "
            f"with q={observations.q} ***"
        )
        self.logger.debug(f"Initial transition matrix: {theta0.E.tolist()}")
        self.logger.debug(f"Initial noise parameters: {theta0.epsilon.tolist()}")

        return None

    def after_iteration(self, iteration: int, loglik: float, change: float) -> None:
        """Callback executed after each M-step and the E-step that follows it.

        Args:
            iteration: 1-based iteration count.
            loglik: Log-likelihood (bits) of the updated parameters.
            change: Max-abs parameter change of this iteration.
        """
        self.logger.debug(
            f"Iteration {iteration}: loglik={loglik:.10f} change={change:.3e}"
        )

        return None

    def after_fit(self, result: "EmResult") -> None:
        """Callback executed once the fit has stopped.

        Args:
            result: The finished fit.
        """
        status = "converged" if result.converged else "stopped at the iteration cap"
        self.logger.info(
            f"*** EM {status} after {result.iterations} iterations "
            f"(loglik={result.loglik_trace[-1]:.6f}) ***"
        )
        self.logger.debug(f"Fitted noise parameters: {result.epsilon_hat.tolist()}")

        return None
