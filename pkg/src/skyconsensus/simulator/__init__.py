from .common import (
    ADVERSARY_KINDS,
    AdversaryStrategy,
    InitialConfiguration,
    LatencyModel,
    RunResult,
    adversary_emit,
    sample_latency,
)
from .engine import available_backends, default_backend, run_async
from .sync import run_sync

__all__ = [
    "ADVERSARY_KINDS",
    "AdversaryStrategy",
    "InitialConfiguration",
    "LatencyModel",
    "RunResult",
    "adversary_emit",
    "available_backends",
    "default_backend",
    "run_async",
    "run_sync",
    "sample_latency",
]
