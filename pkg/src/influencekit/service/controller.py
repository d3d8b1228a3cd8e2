"""Drives quicksort runs against the live service.

The controller thread replays the requested runs in order. Its oracle
enqueues each wave of comparisons in canonical order (so the event log is
reproducible) and blocks until workers answer; answers already in the log,
e.g. after a restart, resolve instantly, which is what makes resumption
free of duplicate questions.
"""

from __future__ import annotations

import logging
import time

from ..ranking import OracleError, quicksort_run
from ..util import stable_hash64
from .core import AnnotationService, ServiceError

logger = logging.getLogger(__name__)


class ServiceOracle:
    """Bridges a quicksort run to the annotation queue for one run id."""

    def __init__(self, service: AnnotationService, run: int):
        self.service = service
        self.run = run

    def prefetch(self, pairs: list[tuple[str, str]]) -> None:
        self.service.enqueue_pairs(self.run, pairs)

    def answer(self, left: str, right: str) -> str:
        return self.service.await_answer(self.run, left, right)


def run_controller(service: AnnotationService) -> None:
    """Execute requested runs sequentially until none remain or stop is set."""
    state = service.state
    try:
        while True:
            with service._lock:
                if service._stop:
                    return
                done = len(state.runs_ended)
                requested = state.runs_requested
                targets = list(state.targets)
                seed = state.seed
            if done >= requested:
                service.open_partitions = 0
                return
            run = done + 1
            with service._lock:
                if run not in state.runs_started:
                    service._append({"ev": "run_start", "run": run})

            def gauge(open_partitions: int) -> None:
                service.open_partitions = open_partitions

            result = quicksort_run(
                targets,
                ServiceOracle(service, run),
                rng_seed=stable_hash64("service-run", seed, run),
                run_id=run,
                progress=gauge,
            )
            with service._lock:
                service._append({
                    "ev": "run_end",
                    "run": run,
                    "comparisons": result.comparisons,
                })
            service.open_partitions = 0
            logger.info("run %d finished after %d comparisons", run, result.comparisons)
    except (OracleError, ServiceError) as exc:
        logger.info("controller stopping: %s", exc)
    except Exception:
        logger.exception("controller crashed")
    finally:
        service.open_partitions = 0
