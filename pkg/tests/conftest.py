"""Common fixtures for tests."""

import json
from collections.abc import Callable, Generator
from contextlib import AbstractContextManager
from pathlib import Path
from typing import Any
from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from entrate.engine import build_orbit, gamma_sup
from entrate.errors import DomainError, GammaNotContracting
from entrate.model import HmpModel, NoiseSpec, build_hmp_model, build_markov_source

# Three-state reference model with known H_N and G_n values
REFERENCE_TRANSITION = [[0.4, 0.25, 0.35], [0.25, 0.45, 0.3], [0.2, 0.55, 0.25]]
REFERENCE_EPSILON = [0.01, 0.02]

# Model used for the sequence-estimation workflow
ESTIMATION_TRANSITION = [[0.25, 0.35, 0.4], [0.15, 0.45, 0.4], [0.25, 0.25, 0.5]]
ESTIMATION_EPSILON = [0.02, 0.03]


def make_model(
    transition: Any, epsilon: Any, check_invertible: bool = True
) -> HmpModel:
    """Build an HMP from plain lists."""
    return build_hmp_model(
        build_markov_source(transition),
        NoiseSpec(np.asarray(epsilon, dtype=np.float64)),
        check_invertible=check_invertible,
    )


def random_model(
    rng: np.random.Generator, q: int, gamma_max: float = 0.9
) -> HmpModel:
    """Draw a valid model with entries in [0.05, 0.95] and epsilon in [0.01, 0.2].

    Draws are repeated until the model is invertible and contracts below
    ``gamma_max``.
    """
    while True:
        raw = rng.uniform(0.05, 0.95, size=(q, q))
        transition = raw / raw.sum(axis=1, keepdims=True)
        epsilon = rng.uniform(0.01, 0.2, size=q - 1)
        try:
            model = make_model(transition, epsilon)
            if gamma_sup(model, build_orbit(model, 0)) <= gamma_max:
                return model
        except (DomainError, GammaNotContracting):
            continue


@pytest.fixture
def reference_model() -> HmpModel:
    """Three-state reference model.

    Returns:
        HmpModel with E = REFERENCE_TRANSITION and epsilon = REFERENCE_EPSILON.
    """
    return make_model(REFERENCE_TRANSITION, REFERENCE_EPSILON)


@pytest.fixture
def estimation_model() -> HmpModel:
    """Three-state model used to generate sequences for EM.

    Returns:
        HmpModel with E = ESTIMATION_TRANSITION and epsilon = ESTIMATION_EPSILON.
    """
    return make_model(ESTIMATION_TRANSITION, ESTIMATION_EPSILON)


@pytest.fixture
def iid_model() -> Callable[[list[float], list[float]], HmpModel]:
    """Factory for memoryless sources (every row of E equal to ``rho``).

    Returns:
        Function building the model from ``rho`` and ``epsilon``.
    """

    def _build(rho: list[float], epsilon: list[float]) -> HmpModel:
        transition = [list(rho) for _ in rho]
        return make_model(transition, epsilon, check_invertible=False)

    return _build


@pytest.fixture
def write_model_file(tmp_path: Path) -> Callable[..., Path]:
    """Factory writing a model configuration file into ``tmp_path``.

    Returns:
        Function taking transition, epsilon and optional extra keys, returning
        the file path.
    """

    def _write(
        transition: Any = REFERENCE_TRANSITION,
        epsilon: Any = REFERENCE_EPSILON,
        name: str = "model.json",
        **extra: Any,
    ) -> Path:
        path = tmp_path / name
        path.write_text(
            json.dumps({"transition": transition, "epsilon": epsilon, **extra})
        )
        return path

    return _write


class MockEnviron(dict[str, str]):
    """Mock os.environ-like object for testing.

    Mimics os._Environ behavior while being a dict subclass.
    """

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        """Initialize mock environ."""
        super().__init__(*args, **kwargs)


@pytest.fixture
def mock_environ() -> type[MockEnviron]:
    """Mock os.environ class for testing.

    Returns:
        MockEnviron class that behaves like os._Environ.
    """
    return MockEnviron


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    """Clean environment variables before each test.

    Removes any existing environment variables that might interfere
    with tests to ensure isolation.

    Args:
        monkeypatch: Pytest monkeypatch fixture.
    """
    env_vars_to_clean = [
        "LOG_LEVEL",
        "ENTRATE_THREADS",
        "ENTRATE_ORACLE_MAX_LENGTH",
        "ENTRATE_ORACLE_MAX_LEAVES",
        "ENTRATE_TRACE_EXPORTER",
        "OTEL_EXPORTER_OTLP_ENDPOINT",
        "OTEL_RESOURCE_ATTRIBUTES",
    ]

    for var in env_vars_to_clean:
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def mock_load_dotenv() -> Generator[MagicMock]:
    """Mock load_dotenv function for testing.

    Yields:
        Mock object for load_dotenv function.
    """
    with patch("entrate.config.load_dotenv") as mock:
        yield mock


@pytest.fixture
def mock_sys_exit() -> Generator[MagicMock]:
    """Mock sys.exit with SystemExit side effect for testing validation failures.

    Yields:
        Mock object for sys.exit that raises SystemExit(4).
    """
    with patch("sys.exit", side_effect=SystemExit(4)) as mock:
        yield mock


@pytest.fixture
def set_environment(
    monkeypatch: pytest.MonkeyPatch,
) -> Callable[[dict[str, str]], None]:
    """Helper fixture to set multiple environment variables at once.

    Args:
        monkeypatch: Pytest monkeypatch fixture.

    Returns:
        Function that takes a dictionary and sets all key-value pairs as env vars.
    """

    def _set_env(env_dict: dict[str, str]) -> None:
        """Set multiple environment variables from a dictionary.

        Args:
            env_dict: Dictionary of environment variable names and values.
        """
        for key, value in env_dict.items():
            monkeypatch.setenv(key, value)

    return _set_env


@pytest.fixture
def mock_print_config() -> Callable[[type], AbstractContextManager[MagicMock]]:
    """Context manager factory for mocking print_config on any model class.

    Returns:
        Function that returns a context manager for mocking print_config.
    """

    def _mock_config(model_class: type) -> AbstractContextManager[MagicMock]:
        """Create a context manager for mocking print_config on a model.

        Args:
            model_class: The Pydantic model class to mock print_config on.

        Returns:
            Context manager that yields the mock object.
        """
        return patch.object(model_class, "print_config")

    return _mock_config
