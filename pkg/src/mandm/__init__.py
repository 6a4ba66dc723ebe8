"""Digital-twin monitoring service for an HPC cluster.

Ingests (simulated) node telemetry and scheduler job events, keeps a
live cluster state with per-user usage analytics, persists raw records
in a sparse triple store, archives CSV history segments for replay, and
serves everything to a browser console over HTTP + WebSocket.
"""

__version__ = "0.1.0"

from .analytics import (
    Tier,
    UsageConfig,
    avatar_scale,
    classify_usage,
    compute_usage,
    gpu_color,
)
from .core import (
    ClusterState,
    ClusterTopology,
    JobEvent,
    NodeSpec,
    NodeTelemetry,
    UserInfo,
    apply_job_event,
    apply_telemetry,
    new_state,
    snapshot,
)
from .history import (
    HistoryArchive,
    HistoryLoader,
    ReplayCursor,
    Segment,
    parse_segment,
    serialize_segment,
    segments_for_duration,
    write_segment,
)
from .simulator import SimConfig, SimUser, UserProfile, build_sim, run_scenario, tick
from .triplestore import TripleStore

__all__ = [
    "Tier", "UsageConfig", "avatar_scale", "classify_usage", "compute_usage",
    "gpu_color",
    "ClusterState", "ClusterTopology", "JobEvent", "NodeSpec", "NodeTelemetry",
    "UserInfo", "apply_job_event", "apply_telemetry", "new_state", "snapshot",
    "HistoryArchive", "HistoryLoader", "ReplayCursor", "Segment",
    "parse_segment", "serialize_segment", "segments_for_duration", "write_segment",
    "SimConfig", "SimUser", "UserProfile", "build_sim", "run_scenario", "tick",
    "TripleStore",
]
