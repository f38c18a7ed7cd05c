"""Utility modules."""

from .observability import configure_otel_resource, setup_logging, setup_tracing

__all__ = [
    "configure_otel_resource",
    "setup_logging",
    "setup_tracing",
]
