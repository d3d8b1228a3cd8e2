"""Live pairwise-annotation service.

Serves batches of two-profiles-plus-proxy comparison tasks to workers over
HTTP, records judgments durably in an append-only event log, enforces worker
quality rules, and drives quicksort runs that decide which pairs to ask
about next. All state is a pure fold over the log, so a restart resumes
mid-run without ever re-asking an answered pair.
"""

from .core import AnnotationService, BannedWorkerError, ServiceConfig, TargetProfile, load_profiles
from .eventlog import EventLog, replay_events

__all__ = [
    "AnnotationService",
    "BannedWorkerError",
    "ServiceConfig",
    "TargetProfile",
    "load_profiles",
    "EventLog",
    "replay_events",
]
