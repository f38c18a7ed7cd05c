"""Configuration models for the runtime environment and input files.

This module provides Pydantic models for type-safe environment variable
validation, the model configuration file and observation sequence files. File
problems surface as ``InputError`` subclasses so the CLI can map them to exit
code 4.
"""

import json
import math
import os
import sys
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal, TypeVar

import numpy as np
from dotenv import load_dotenv
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StrictInt,
    ValidationError,
    computed_field,
    model_validator,
)

from .errors import EXIT_INPUT, ConfigError, DomainError, SequenceFormatError
from .model import (
    HmpModel,
    NoiseSpec,
    ObservationSequence,
    build_hmp_model,
    build_markov_source,
)

LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
TraceExporter = Literal["none", "console", "otlp"]

T = TypeVar("T", bound=BaseModel)


def initialize_environment(
    model_class: type[T],
    override_dotenv: bool = False,
    print_config: bool = False,
) -> T:
    """Initialize and validate environment configuration.

    Loads a ``.env`` file if present, validates ``os.environ`` with the given
    model, reports errors and optionally prints the resolved configuration.

    Args:
        model_class: Pydantic model class to validate environment with.
        override_dotenv: Whether ``.env`` values override variables that are
            already set. Defaults to False so the shell wins.
        print_config: Whether to call print_config() method if it exists.

    Returns:
        Validated environment configuration instance.

    Raises:
        SystemExit: With exit code 4 if validation fails.

    Examples:
        >>> env = initialize_environment(RuntimeEnv)
        >>> env = initialize_environment(RuntimeEnv, print_config=True)
    """
    load_dotenv(override=override_dotenv)

    try:
        env = model_class.model_validate(os.environ)
    except ValidationError as e:
        print("\n❌ Environment validation failed:\n", file=sys.stderr)
        print(e, file=sys.stderr)
        sys.exit(EXIT_INPUT)

    if print_config and hasattr(env, "print_config"):
        env.print_config()

    return env


class ValidationBase(BaseModel):
    """Base model with empty string filtering for environment configurations.

    An exported-but-empty variable (``ENTRATE_THREADS=``) is treated as unset so
    the field default applies; required fields still fail validation.
    """

    @model_validator(mode="before")
    @classmethod
    def filter_empty_strings(cls, data: Any) -> Any:
        """Filter out empty strings before field validation.

        Args:
            data: Input data to validate (typically os.environ).

        Returns:
            Filtered data dict with empty strings removed.
        """
        if isinstance(data, Mapping):
            # Works with both dict and os._Environ
            return {k: v for k, v in data.items() if v != ""}
        return data

    model_config = ConfigDict(
        populate_by_name=True,  # Allow both field names and aliases
        extra="ignore",  # Ignore extra env vars (system vars, etc.)
    )


class RuntimeEnv(ValidationBase):
    """Environment configuration for the command-line tool.

    Attributes:
        log_level: Logging verbosity level.
        threads: Worker threads for the oracle; 0 means one per CPU.
        oracle_max_length: Longest word length the oracle will enumerate.
        oracle_max_leaves: Largest number of words q^n the oracle will enumerate.
        trace_exporter: Where spans go: nowhere, stderr, or an OTLP collector.
        otlp_endpoint: Collector endpoint used with the OTLP exporter.
    """

    log_level: LogLevel = Field(
        default="INFO",
        alias="LOG_LEVEL",
        description="Logging verbosity level",
    )
    threads: int = Field(
        default=0,
        ge=0,
        alias="ENTRATE_THREADS",
        description="Worker threads for brute-force enumeration (0 = auto)",
    )
    oracle_max_length: int = Field(
        default=14,
        ge=1,
        alias="ENTRATE_ORACLE_MAX_LENGTH",
        description="Hard cap on the oracle word length",
    )
    oracle_max_leaves: int = Field(
        default=100_000_000,
        ge=1,
        alias="ENTRATE_ORACLE_MAX_LEAVES",
        description="Hard cap on the number of enumerated words",
    )
    trace_exporter: TraceExporter = Field(
        default="none",
        alias="ENTRATE_TRACE_EXPORTER",
        description="OpenTelemetry span exporter",
    )
    otlp_endpoint: str | None = Field(
        default=None,
        alias="OTEL_EXPORTER_OTLP_ENDPOINT",
        description="OTLP collector endpoint",
    )

    @computed_field  # type: ignore[prop-decorator]
    @property
    def worker_count(self) -> int:
        """Resolved number of worker threads."""
        return self.threads or os.cpu_count() or 1

    def print_config(self) -> None:
        """Print runtime configuration to stderr for user verification."""
        lines = [
            "\n✅ Runtime configuration:\n",
            f"LOG_LEVEL:                   {self.log_level}",
            f"ENTRATE_THREADS:             {self.threads} "
            f"({self.worker_count} workers)",
            f"ENTRATE_ORACLE_MAX_LENGTH:   {self.oracle_max_length}",
            f"ENTRATE_ORACLE_MAX_LEAVES:   {self.oracle_max_leaves}",
            f"ENTRATE_TRACE_EXPORTER:      {self.trace_exporter}",
            f"OTEL_EXPORTER_OTLP_ENDPOINT: {self.otlp_endpoint}\n",
        ]
        print("\n".join(lines), file=sys.stderr)


class ModelConfig(BaseModel):
    """Model configuration file contents.

    Shapes are checked here; value ranges are left to model validation so that
    every violated condition can be reported together.

    Attributes:
        transition: Square q x q transition matrix, q >= 2.
        epsilon: Noise parameters for symbols 1..q-1.
        log_base: Logarithm base of reported entropies, 2 or "e".
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    transition: list[list[float]] = Field(..., description="Transition matrix rows")
    epsilon: list[float] = Field(..., description="Noise parameters eps_1..eps_{q-1}")
    log_base: Literal[2, "e"] = Field(default=2, description="Entropy logarithm base")

    @model_validator(mode="after")
    def check_shapes(self) -> "ModelConfig":
        """Check that the matrix is square and epsilon has q-1 entries."""
        q = len(self.transition)
        if q < 2:
            raise ValueError(f"transition matrix needs at least 2 rows, got {q}")
        for i, row in enumerate(self.transition):
            if len(row) != q:
                raise ValueError(f"row {i} has {len(row)} entries, expected {q}")
        if len(self.epsilon) != q - 1:
            raise ValueError(
                f"epsilon needs {q - 1} entries for q={q}, got {len(self.epsilon)}"
            )
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def q(self) -> int:
        """Alphabet size."""
        return len(self.transition)

    @property
    def base(self) -> float:
        """Numeric logarithm base."""
        return math.e if self.log_base == "e" else 2.0

    def to_model(self, check_invertible: bool = True) -> HmpModel:
        """Build the HMP described by this configuration.

        Raises:
            DomainError: If a validity condition fails.
        """
        source = build_markov_source(self.transition)
        return build_hmp_model(
            source, NoiseSpec(np.array(self.epsilon)), check_invertible=check_invertible
        )


class SequenceFile(BaseModel):
    """Object form of a sequence file."""

    model_config = ConfigDict(extra="forbid")

    symbols: list[StrictInt]
    states: list[StrictInt] | None = None


def _read_text(path: Path, error: type[ConfigError] | type[SequenceFormatError]) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise error(f"cannot read {path}: {e}") from e


def load_model_config(path: str | Path) -> ModelConfig:
    """Read and shape-check a model configuration file.

    Raises:
        ConfigError: If the file cannot be read, is not JSON, or has the wrong
            shape.
    """
    text = _read_text(Path(path), ConfigError)
    try:
        return ModelConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid model configuration {path}:\n{e}") from e


def parse_sequence(text: str, q: int) -> ObservationSequence:
    """Parse sequence file contents.

    Accepts a JSON array of integers, a JSON object with ``symbols`` and optional
    ``states``, or one integer per line.

    Raises:
        SequenceFormatError: If the text is malformed or a symbol is not in
            {0, ..., q-1}.
    """
    stripped = text.strip()
    try:
        if stripped.startswith("{"):
            parsed = SequenceFile.model_validate_json(stripped)
        elif stripped.startswith("["):
            parsed = SequenceFile(symbols=json.loads(stripped))
        else:
            parsed = SequenceFile(symbols=[int(line) for line in stripped.split()])
    except (ValidationError, ValueError) as e:
        raise SequenceFormatError(f"malformed sequence: {e}") from e

    try:
        return ObservationSequence(
            symbols=np.array(parsed.symbols, dtype=np.int64),
            q=q,
            states=(
                None
                if parsed.states is None
                else np.array(parsed.states, dtype=np.int64)
            ),
        )
    except (DomainError, ValueError) as e:
        raise SequenceFormatError(str(e)) from e


def load_sequence(path: str | Path, q: int) -> ObservationSequence:
    """Read a sequence file; see ``parse_sequence`` for the accepted formats."""
    return parse_sequence(_read_text(Path(path), SequenceFormatError), q)


def write_sequence(
    path: str | Path, sequence: ObservationSequence, with_states: bool = False
) -> None:
    """Write ``sequence`` as a JSON object, optionally with the hidden states.

    Raises:
        SequenceFormatError: If the file cannot be written.
    """
    payload: dict[str, Any] = {"symbols": sequence.symbols.tolist()}
    if with_states and sequence.states is not None:
        payload["states"] = sequence.states.tolist()
    try:
        Path(path).write_text(
            json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8"
        )
    except OSError as e:
        raise SequenceFormatError(f"cannot write {path}: {e}") from e
