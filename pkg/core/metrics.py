import time
import logging
import functools
from pathlib import Path
from typing import Callable, Optional, Any, Union

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

logger = logging.getLogger(__name__)

__all__ = (
    "REGISTRY",
    "BELLMAN_SWEEPS",
    "SWEEP_LATENCY",
    "SIMULATED_STEPS",
    "increment_counter",
    "observe_histogram",
    "track_stage",
    "write_metrics",
)

REGISTRY = CollectorRegistry(auto_describe=True)

BELLMAN_SWEEPS = Counter(
    "regrowth_bellman_sweeps_total",
    "Total number of Bellman operator applications",
    ["n_states"],
    registry=REGISTRY,
)

SWEEP_LATENCY = Histogram(
    "regrowth_bellman_sweep_seconds",
    "Wall time of one Bellman operator application",
    ["n_states"],
    buckets=(0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, float("inf")),
    registry=REGISTRY,
)

SIMULATED_STEPS = Counter(
    "regrowth_simulated_steps_total",
    "Total number of simulated steps of the controlled chain",
    registry=REGISTRY,
)

STAGE_LATENCY = Histogram(
    "regrowth_stage_seconds",
    "Wall time of a CLI pipeline stage",
    ["stage"],
    buckets=(0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0, 600.0, float("inf")),
    registry=REGISTRY,
)

STAGE_FAILURES = Counter(
    "regrowth_stage_failures_total",
    "Total number of failed pipeline stages",
    ["stage", "error_type"],
    registry=REGISTRY,
)


def increment_counter(
    counter: Counter,
    value: float = 1,
    **labels
) -> None:
    if labels:
        counter.labels(**labels).inc(value)
    else:
        counter.inc(value)


def observe_histogram(
    histogram: Histogram,
    value: float,
    **labels
) -> None:
    histogram.labels(**labels).observe(value)


def track_stage(stage: str) -> Callable:
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            start_time = time.time()

            try:
                return func(*args, **kwargs)
            except Exception as e:
                STAGE_FAILURES.labels(stage=stage, error_type=type(e).__name__).inc()
                raise
            finally:
                STAGE_LATENCY.labels(stage=stage).observe(time.time() - start_time)

        return wrapper

    return decorator


def write_metrics(path: Optional[Union[str, Path]]) -> None:
    if not path:
        return

    try:
        write_to_textfile(str(path), REGISTRY)
        logger.info(f"Metrics written to {path}")
    except OSError as e:
        logger.error(f"Failed to write metrics: {str(e)}")
