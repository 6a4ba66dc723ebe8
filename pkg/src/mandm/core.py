"""Canonical live cluster state and event application.

The twin keeps one authoritative ClusterState: the physical topology,
the latest telemetry sample per node, the set of active jobs, and a
per-user aggregate (node/file/job/alert counts plus the derived usage
score and tier) that is recomputed eagerly on every job event so a
snapshot is always internally consistent.

States are immutable values. Applying an event returns a new state and
never mutates the old one, which is what makes the single-writer /
multi-reader concurrency model safe: readers hold point-in-time values,
the one writer swaps in successors. Keyed maps with insert-or-replace
semantics make duplicate node or user entries structurally impossible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from types import MappingProxyType
from typing import Iterable, Mapping

from . import analytics
from .analytics import Alert, Tier, UsageConfig
from .errors import (
    DuplicateJobError,
    UnknownJobError,
    UnknownNodeError,
    UnknownUserError,
    ValidationError,
)
from .history import JobRow, NodeRow, Segment, UserRow


@dataclass(frozen=True)
class NodeSpec:
    cpu_cores: int
    mem_total_mb: int
    gpu_count: int = 0

    def __post_init__(self) -> None:
        if self.cpu_cores < 1:
            raise ValidationError(f"cpu_cores must be positive, got {self.cpu_cores}")
        if self.mem_total_mb < 1:
            raise ValidationError(f"mem_total_mb must be positive, got {self.mem_total_mb}")
        if self.gpu_count < 0:
            raise ValidationError(f"gpu_count must be nonnegative, got {self.gpu_count}")


@dataclass(frozen=True)
class ClusterTopology:
    """Physical rack/node structure the twin mirrors.

    racks preserves declaration order; every node belongs to exactly one
    rack and has a spec entry.
    """

    racks: tuple[tuple[str, tuple[str, ...]], ...]
    node_specs: Mapping[str, NodeSpec]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "racks",
            tuple((rack_id, tuple(nodes)) for rack_id, nodes in self.racks),
        )
        object.__setattr__(self, "node_specs", MappingProxyType(dict(self.node_specs)))
        seen_racks: set[str] = set()
        seen_nodes: set[str] = set()
        for rack_id, nodes in self.racks:
            if rack_id in seen_racks:
                raise ValidationError(f"duplicate rack_id {rack_id!r}")
            seen_racks.add(rack_id)
            for node_id in nodes:
                if node_id in seen_nodes:
                    raise ValidationError(f"duplicate node_id {node_id!r}")
                seen_nodes.add(node_id)
        if seen_nodes != set(self.node_specs):
            missing = seen_nodes ^ set(self.node_specs)
            raise ValidationError(
                f"racks and node_specs disagree on node set: {sorted(missing)}"
            )

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n for _, nodes in self.racks for n in nodes)

    def rack_of(self, node_id: str) -> str:
        for rack_id, nodes in self.racks:
            if node_id in nodes:
                return rack_id
        raise UnknownNodeError(f"unknown node {node_id!r}")


@dataclass(frozen=True)
class NodeTelemetry:
    node_id: str
    ts: int
    cpu_load_pct: float
    mem_used_pct: float
    net_rx_mbps: float
    net_tx_mbps: float
    gpu_load_pct: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "gpu_load_pct", tuple(self.gpu_load_pct))
        for name in ("cpu_load_pct", "mem_used_pct"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValidationError(f"{name} out of [0, 100]: {v}")
        for name in ("net_rx_mbps", "net_tx_mbps"):
            if getattr(self, name) < 0.0:
                raise ValidationError(f"{name} must be nonnegative")
        for g in self.gpu_load_pct:
            if not 0.0 <= g <= 100.0:
                raise ValidationError(f"gpu load out of [0, 100]: {g}")


class JobEventKind(enum.Enum):
    START = "start"
    UPDATE = "update"
    END = "end"


@dataclass(frozen=True)
class JobEvent:
    """Scheduler-side event. Start needs nodes and files; Update carries a
    new files count and optionally a replacement node set; End carries
    neither."""

    kind: JobEventKind
    job_id: str
    user_id: str
    ts: int
    node_ids: frozenset[str] | None = None
    files_open: int | None = None

    def __post_init__(self) -> None:
        if self.node_ids is not None:
            object.__setattr__(self, "node_ids", frozenset(self.node_ids))
        if self.kind is JobEventKind.START:
            if not self.node_ids:
                raise ValidationError("Start requires a nonempty node set")
            if self.files_open is None:
                raise ValidationError("Start requires files_open")
        elif self.kind is JobEventKind.UPDATE:
            if self.files_open is None:
                raise ValidationError("Update requires files_open")
            if self.node_ids is not None and not self.node_ids:
                raise ValidationError("Update node set, when present, must be nonempty")
        if self.files_open is not None and self.files_open < 0:
            raise ValidationError("files_open must be nonnegative")

    @classmethod
    def start(cls, job_id: str, user_id: str, node_ids: Iterable[str],
              files_open: int, ts: int) -> "JobEvent":
        return cls(JobEventKind.START, job_id, user_id, ts,
                   frozenset(node_ids), files_open)

    @classmethod
    def update(cls, job_id: str, user_id: str, files_open: int, ts: int,
               node_ids: Iterable[str] | None = None) -> "JobEvent":
        return cls(JobEventKind.UPDATE, job_id, user_id, ts,
                   frozenset(node_ids) if node_ids is not None else None, files_open)

    @classmethod
    def end(cls, job_id: str, user_id: str, ts: int) -> "JobEvent":
        return cls(JobEventKind.END, job_id, user_id, ts)


@dataclass(frozen=True)
class UserInfo:
    user_id: str
    name: str
    rank: str


@dataclass(frozen=True)
class UserAggregate:
    user_id: str
    node_count: int = 0
    file_count: int = 0
    job_count: int = 0
    alert_count: int = 0
    usage: float = 0.0
    tier: Tier = Tier.NORMAL


@dataclass(frozen=True)
class ActiveJob:
    job_id: str
    user_id: str
    node_ids: frozenset[str]
    files_open: int
    start_ts: int


class TelemetryMetrics:
    """Mutable side counters for the ingestion path (not part of state values)."""

    def __init__(self) -> None:
        self.stale_dropped = 0


@dataclass(frozen=True)
class ClusterState:
    topology: ClusterTopology
    usage_cfg: UsageConfig
    latest: Mapping[str, NodeTelemetry]
    active_jobs: Mapping[str, ActiveJob]
    users: Mapping[str, UserInfo]
    aggregates: Mapping[str, UserAggregate]
    state_ts: int = 0


def new_state(
    topology: ClusterTopology,
    users: Iterable[UserInfo],
    usage_cfg: UsageConfig | None = None,
) -> ClusterState:
    """Empty twin: no telemetry, no jobs, all aggregates zero / Normal.

    When usage_cfg is omitted the node cap defaults to the cluster's
    total node count (the most permissive per-user limit that still
    saturates the node term at "owns the whole machine").
    """
    user_map: dict[str, UserInfo] = {}
    for info in users:
        if info.user_id in user_map:
            raise ValidationError(f"duplicate user_id {info.user_id!r}")
        user_map[info.user_id] = info
    cfg = usage_cfg or UsageConfig.for_cluster(len(topology.node_ids))
    aggregates = {uid: UserAggregate(user_id=uid) for uid in user_map}
    return ClusterState(
        topology=topology,
        usage_cfg=cfg,
        latest=MappingProxyType({}),
        active_jobs=MappingProxyType({}),
        users=MappingProxyType(user_map),
        aggregates=MappingProxyType(aggregates),
        state_ts=0,
    )


def apply_telemetry(
    state: ClusterState,
    t: NodeTelemetry,
    metrics: TelemetryMetrics | None = None,
) -> ClusterState:
    """Insert-or-replace the node's latest sample.

    A sample older than the stored one is dropped (the twin shows
    "latest known"); drops are counted in `metrics` when provided and
    the state is returned unchanged.
    """
    spec = state.topology.node_specs.get(t.node_id)
    if spec is None:
        raise UnknownNodeError(f"unknown node {t.node_id!r}")
    if len(t.gpu_load_pct) != spec.gpu_count:
        raise ValidationError(
            f"gpu_load_pct length {len(t.gpu_load_pct)} != gpu_count "
            f"{spec.gpu_count} of node {t.node_id!r}"
        )
    existing = state.latest.get(t.node_id)
    if existing is not None and t.ts < existing.ts:
        if metrics is not None:
            metrics.stale_dropped += 1
        return state
    latest = dict(state.latest)
    latest[t.node_id] = t
    return replace(
        state,
        latest=MappingProxyType(latest),
        state_ts=max(state.state_ts, t.ts),
    )


def _recompute_aggregate(
    user_id: str,
    active_jobs: Mapping[str, ActiveJob],
    cfg: UsageConfig,
    alert_count: int,
) -> UserAggregate:
    nodes: set[str] = set()
    files = 0
    jobs = 0
    for job in active_jobs.values():
        if job.user_id == user_id:
            nodes.update(job.node_ids)
            files += job.files_open
            jobs += 1
    usage = analytics.compute_usage(len(nodes), files, cfg)
    return UserAggregate(
        user_id=user_id,
        node_count=len(nodes),
        file_count=files,
        job_count=jobs,
        alert_count=alert_count,
        usage=usage,
        tier=analytics.classify_usage(usage, cfg),
    )


def apply_job_event(state: ClusterState, e: JobEvent) -> ClusterState:
    """Start/Update/End an active job and eagerly refresh the owner's aggregate."""
    if e.user_id not in state.users:
        raise UnknownUserError(f"unknown user {e.user_id!r}")
    if e.node_ids is not None:
        unknown = e.node_ids - set(state.topology.node_specs)
        if unknown:
            raise UnknownNodeError(f"unknown nodes in job event: {sorted(unknown)}")

    jobs = dict(state.active_jobs)
    if e.kind is JobEventKind.START:
        if e.job_id in jobs:
            raise DuplicateJobError(f"job {e.job_id!r} is already active")
        jobs[e.job_id] = ActiveJob(e.job_id, e.user_id, e.node_ids, e.files_open, e.ts)
    elif e.kind is JobEventKind.UPDATE:
        prior = jobs.get(e.job_id)
        if prior is None:
            raise UnknownJobError(f"update for unknown job {e.job_id!r}")
        # An update without node_ids keeps the prior placement.
        jobs[e.job_id] = replace(
            prior,
            node_ids=e.node_ids if e.node_ids is not None else prior.node_ids,
            files_open=e.files_open,
        )
    else:
        if e.job_id not in jobs:
            raise UnknownJobError(f"end for unknown job {e.job_id!r}")
        del jobs[e.job_id]

    aggregates = dict(state.aggregates)
    prev = aggregates[e.user_id]
    aggregates[e.user_id] = _recompute_aggregate(
        e.user_id, jobs, state.usage_cfg, prev.alert_count
    )
    return replace(
        state,
        active_jobs=MappingProxyType(jobs),
        aggregates=MappingProxyType(aggregates),
        state_ts=max(state.state_ts, e.ts),
    )


def apply_alert_counts(state: ClusterState, alerts: Iterable[Alert]) -> ClusterState:
    """Set every user's alert_count from a fresh evaluation (zero when absent)."""
    counts: dict[str, int] = {}
    for alert in alerts:
        counts[alert.user_id] = counts.get(alert.user_id, 0) + 1
    aggregates = {
        uid: replace(agg, alert_count=counts.get(uid, 0))
        for uid, agg in state.aggregates.items()
    }
    return replace(state, aggregates=MappingProxyType(aggregates))


ACTIVE_JOB_STATE = "running"


def snapshot(state: ClusterState) -> Segment:
    """Freeze the whole twin into a Segment (the unit of history archiving).

    Every topology node gets an N row (zeros until its first telemetry
    sample arrives), every registered user a U row, every active job a J
    row. Floats are quantized to the CSV grammar's 3-decimal grid here,
    at the archive boundary.
    """
    node_rows = []
    for node_id in state.topology.node_ids:
        spec = state.topology.node_specs[node_id]
        t = state.latest.get(node_id)
        if t is None:
            node_rows.append(NodeRow(node_id, 0.0, 0.0, 0.0, 0.0, (0.0,) * spec.gpu_count))
        else:
            node_rows.append(NodeRow(
                node_id, t.cpu_load_pct, t.mem_used_pct,
                t.net_rx_mbps, t.net_tx_mbps, t.gpu_load_pct,
            ))
    user_rows = []
    for uid, info in state.users.items():
        agg = state.aggregates[uid]
        user_rows.append(UserRow(
            uid, info.name, info.rank,
            agg.node_count, agg.file_count, agg.job_count, agg.alert_count,
            agg.usage,
        ))
    job_rows = [
        JobRow(job.job_id, job.user_id, ACTIVE_JOB_STATE,
               tuple(sorted(job.node_ids)), job.files_open)
        for job in state.active_jobs.values()
    ]
    return Segment.build(
        ts=state.state_ts,
        node_rows=node_rows,
        user_rows=user_rows,
        job_rows=job_rows,
    )
