"""Exception hierarchy shared by the library and the command-line surface.

Library code raises these exceptions and never exits. The CLI maps each family
to a process exit code through the ``exit_code`` class attribute:

- ``DomainError`` (2): inputs outside the model's admissible region.
- ``NumericalError`` (3): a computation that cannot produce a trustworthy number.
- ``InputError`` (4): files or environment that cannot be read or parsed.
"""

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NUMERICAL = 3
EXIT_INPUT = 4


class EntrateError(Exception):
    """Base class for all errors raised by entrate."""

    exit_code: int = 1


class DomainError(EntrateError):
    """Model parameters or arguments violate a validity condition."""

    exit_code = EXIT_DOMAIN


class NonStochastic(DomainError):
    """A transition matrix row does not sum to one."""


class EntryOutOfRange(DomainError):
    """A transition probability lies outside the open interval (0, 1)."""


class EpsilonOutOfRange(DomainError):
    """A noise parameter lies outside the open interval (0, 1)."""


class SingularE0(DomainError):
    """The zero-symbol matrix E0 is not invertible to working tolerance."""


class SymbolOutOfRange(DomainError):
    """An observation symbol is not in {0, ..., q-1}."""


class EmptySequence(DomainError):
    """An observation sequence has no symbols."""


class TooLarge(DomainError):
    """A brute-force enumeration exceeds its configured guard."""


class ParameterOutOfRange(DomainError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class NumericalError(EntrateError):
    """A numerical procedure failed or cannot certify its result."""

    exit_code = EXIT_NUMERICAL


class SingularSystem(NumericalError):
    """A dense linear solve hit a pivot below tolerance."""


class ZeroNormalizer(NumericalError):
    """The zero-symbol map was applied to a point it sends to zero mass."""


class NoConvergence(NumericalError):
    """An iteration hit its cap before reaching tolerance."""


class GammaNotContracting(NumericalError):
    """The contraction factor is not below one, so no bound can be certified."""


class RankDeficient(NumericalError):
    """The least-squares normal equations are singular to tolerance."""


class ZeroLikelihood(NumericalError):
    """An observation sequence has zero probability under the parameters."""


class InputError(EntrateError):
    """An input file or environment setting could not be read or parsed."""

    exit_code = EXIT_INPUT


class ConfigError(InputError):
    """A model configuration file is unreadable or malformed."""


class SequenceFormatError(InputError):
    """A sequence file is unreadable or contains invalid symbols."""
