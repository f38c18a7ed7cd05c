"""Logging and OpenTelemetry setup for the command-line tool.

Logs go to stderr so that stdout carries only results. Tracing is off unless an
exporter is selected; the library modules create spans through the OpenTelemetry
API, which is a no-op until a TracerProvider is installed here. Resource
attributes identify the process so that concurrent batch runs can be told apart.
"""

import logging
import os
import sys

from opentelemetry import trace
from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import (
    OTLPSpanExporter,
)
from opentelemetry.instrumentation.logging import LoggingInstrumentor
from opentelemetry.sdk.resources import SERVICE_INSTANCE_ID, SERVICE_NAME
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import (
    BatchSpanProcessor,
    ConsoleSpanExporter,
    SpanExporter,
)

LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
HANDLER_NAME = "entrate-stderr"
LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def configure_otel_resource(service_name: str = "entrate") -> None:
    """Configure OpenTelemetry resource via environment variables.

    Sets OTEL_RESOURCE_ATTRIBUTES with process-level tracking unless it is
    already set, in which case the existing value is kept.

    Args:
        service_name: Service identifier reported with every span.
    """
    if os.getenv("OTEL_RESOURCE_ATTRIBUTES"):
        return
    os.environ["OTEL_RESOURCE_ATTRIBUTES"] = (
        f"{SERVICE_INSTANCE_ID}=worker-{os.getpid()},{SERVICE_NAME}={service_name}"
    )


def setup_logging(log_level: str) -> str:
    """Attach a stderr handler to the root logger at the requested level.

    Unknown levels fall back to INFO with a warning. Calling this more than once
    replaces the level but never adds a second handler.

    Args:
        log_level: One of DEBUG, INFO, WARNING, ERROR, CRITICAL.

    Returns:
        The level actually applied.
    """
    if log_level not in LOG_LEVELS:
        print(
            f"⚠️ Received log_level: '{log_level}'. Defaulting to 'INFO'",
            file=sys.stderr,
        )
        log_level = "INFO"

    root = logging.getLogger()
    root.setLevel(log_level)
    if not any(h.get_name() == HANDLER_NAME for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.set_name(HANDLER_NAME)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    return log_level


def setup_tracing(
    exporter: str,
    endpoint: str | None = None,
) -> TracerProvider | None:
    """Install a TracerProvider exporting spans to the console or an OTLP collector.

    Args:
        exporter: ``"none"``, ``"console"`` or ``"otlp"``.
        endpoint: OTLP collector endpoint; the exporter default when None.

    Returns:
        The installed provider, which the caller shuts down to flush spans, or
        None when tracing is disabled.

    Raises:
        ValueError: If ``exporter`` is not recognized.
    """
    if exporter == "none":
        return None

    span_exporter: SpanExporter
    if exporter == "console":
        span_exporter = ConsoleSpanExporter(out=sys.stderr)
    elif exporter == "otlp":
        span_exporter = OTLPSpanExporter(endpoint=endpoint)
    else:
        raise ValueError(f"unknown trace exporter '{exporter}'")

    configure_otel_resource()

    # TracerProvider auto-detects resource from OTEL_RESOURCE_ATTRIBUTES
    provider = TracerProvider()
    provider.add_span_processor(BatchSpanProcessor(span_exporter))
    trace.set_tracer_provider(provider)

    # Inject OTel trace attributes in LogRecords
    LoggingInstrumentor().instrument(set_logging_format=False)

    return provider
