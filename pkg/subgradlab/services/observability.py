"""
Observability service for structured logging and run metrics.
"""

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from time import perf_counter
from typing import Any, Dict, Union

import structlog
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, generate_latest, write_to_textfile

from subgradlab.core.config import LOG_FORMAT, LOG_LEVEL


def configure_logging(level: str = LOG_LEVEL, fmt: str = LOG_FORMAT) -> None:
    """Configure stdlib logging and structlog; logs go to stderr so stdout stays scriptable."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(message)s",
        stream=sys.stderr,
    )
    renderer = structlog.processors.JSONRenderer() if fmt == "json" else structlog.dev.ConsoleRenderer(colors=False)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


# Prometheus metrics
REGISTRY = CollectorRegistry()

RUN_COUNT = Counter("subgradlab_runs_total", "Total subgradient runs", ["benchmark", "verdict"], registry=REGISTRY)

RUN_DURATION = Histogram("subgradlab_run_seconds", "Subgradient run duration in seconds", ["benchmark"], registry=REGISTRY)

SWEEP_ROWS = Counter("subgradlab_sweep_rows_total", "Sweep rows by outcome", ["status"], registry=REGISTRY)

CHECK_COUNT = Counter("subgradlab_checks_total", "Diagnostic checks by outcome", ["check", "outcome"], registry=REGISTRY)

LAST_TAIL_DIAMETER = Gauge("subgradlab_last_tail_diameter", "Tail diameter of the most recent run", registry=REGISTRY)


class ObservabilityService:
    """Service class for observability operations."""

    def __init__(self):
        self.logger = structlog.get_logger("subgradlab")

    def log_run(
        self,
        benchmark: str,
        steps: int,
        verdict: str,
        tail_diameter: float,
        duration: float,
        record: bool = True,
        **context: Any,
    ):
        """Log a finished subgradient run; `record=False` leaves the metrics to the caller."""
        self.logger.info(
            "run finished",
            benchmark=benchmark,
            steps=steps,
            verdict=verdict,
            tail_diameter=tail_diameter,
            duration=duration,
            **context,
        )
        if record:
            self.record_run(benchmark, verdict, tail_diameter, duration)

    def record_run(self, benchmark: str, verdict: str, tail_diameter: float, duration: float):
        """Count a finished run in the metrics registry."""
        RUN_COUNT.labels(benchmark=benchmark, verdict=verdict).inc()
        RUN_DURATION.labels(benchmark=benchmark).observe(duration)
        LAST_TAIL_DIAMETER.set(tail_diameter)

    def log_sweep_row(self, row_key: str, status: str, **context: Any):
        """Log one sweep row outcome."""
        self.logger.info("sweep row", row=row_key, status=status, **context)
        SWEEP_ROWS.labels(status=status).inc()

    def log_check(self, check: str, passed: bool, record: bool = True, **context: Any):
        """Log a diagnostic check outcome."""
        outcome = "pass" if passed else "fail"
        log = self.logger.info if passed else self.logger.warning
        log("check evaluated", check=check, outcome=outcome, **context)
        if record:
            CHECK_COUNT.labels(check=check, outcome=outcome).inc()

    def log_error(self, error: Exception, context: Dict[str, Any]):
        """Log error with context."""
        self.logger.error("Error occurred", error=str(error), error_type=type(error).__name__, context=context, exc_info=True)

    @contextmanager
    def timed(self, operation: str, **attributes: Any):
        """Time an operation and log its duration."""
        start = perf_counter()
        holder: Dict[str, float] = {}
        try:
            yield holder
        finally:
            holder["duration"] = perf_counter() - start
            self.logger.debug("Performance metric", operation=operation, duration=holder["duration"], **attributes)

    def get_metrics(self) -> str:
        """Get Prometheus metrics in text exposition format."""
        return generate_latest(REGISTRY).decode("utf-8")

    def write_metrics(self, path: Union[str, Path]) -> Path:
        """Persist the metrics registry as a node-exporter textfile."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(target), REGISTRY)
        return target


# Global observability instance
observability = ObservabilityService()
