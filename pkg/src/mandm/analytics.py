"""User-centric cluster metrics.

The central quantity is the per-user Usage score in [0, 100]: a weighted
blend of how many nodes and how many files the user currently holds,
each normalized by a configurable cap. Usage drives a three-tier
classification (normal/elevated/critical) that the operator console maps
to green/cyan/red, plus an avatar scale factor. The module also provides
the bidirectional user<->node correlation queries and level-triggered
alert evaluation over a cluster state snapshot.

Everything here is a pure function over immutable inputs and is safe to
call concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

from .errors import UnknownNodeError, UnknownUserError, ValidationError

if TYPE_CHECKING:
    from .core import ClusterState

DEFAULT_NODE_WEIGHT = 80.0
DEFAULT_FILE_WEIGHT = 20.0
DEFAULT_FILE_CAP = 1000
DEFAULT_ELEVATED_THRESHOLD = 50.0
DEFAULT_CRITICAL_THRESHOLD = 80.0

# Largest avatar scale, reached at usage 100. Pure presentation parameter.
AVATAR_MAX_SCALE = 4.0


class Tier(enum.IntEnum):
    """Usage classification; ordering NORMAL < ELEVATED < CRITICAL is load-bearing."""

    NORMAL = 0
    ELEVATED = 1
    CRITICAL = 2

    @property
    def color(self) -> str:
        return _TIER_COLORS[self]

    @property
    def wire(self) -> str:
        """Lowercase name used in the JSON wire protocol."""
        return self.name.lower()


_TIER_COLORS = {Tier.NORMAL: "green", Tier.ELEVATED: "cyan", Tier.CRITICAL: "red"}


@dataclass(frozen=True)
class UsageConfig:
    """Weights, normalization caps, and tier thresholds for the Usage score.

    node_weight + file_weight must equal 100 so the score stays in
    [0, 100]; each count is divided by its cap and clamped at 1 before
    weighting.
    """

    node_cap: int
    file_cap: int = DEFAULT_FILE_CAP
    node_weight: float = DEFAULT_NODE_WEIGHT
    file_weight: float = DEFAULT_FILE_WEIGHT
    elevated_threshold: float = DEFAULT_ELEVATED_THRESHOLD
    critical_threshold: float = DEFAULT_CRITICAL_THRESHOLD

    def __post_init__(self) -> None:
        if self.node_cap < 1:
            raise ValidationError(f"node_cap must be positive, got {self.node_cap}")
        if self.file_cap < 1:
            raise ValidationError(f"file_cap must be positive, got {self.file_cap}")
        if abs(self.node_weight + self.file_weight - 100.0) > 1e-9:
            raise ValidationError(
                f"node_weight + file_weight must equal 100, got "
                f"{self.node_weight} + {self.file_weight}"
            )
        if not (0.0 < self.elevated_threshold < 100.0):
            raise ValidationError("elevated_threshold must lie in (0, 100)")
        if not (0.0 < self.critical_threshold < 100.0):
            raise ValidationError("critical_threshold must lie in (0, 100)")
        if self.elevated_threshold >= self.critical_threshold:
            raise ValidationError(
                "elevated_threshold must be strictly below critical_threshold"
            )

    @classmethod
    def for_cluster(cls, total_nodes: int, **overrides) -> "UsageConfig":
        """Defaults with node_cap falling back to the cluster's node count."""
        node_cap = overrides.pop("node_cap", None) or max(total_nodes, 1)
        return cls(node_cap=node_cap, **overrides)


def compute_usage(node_count: int, file_count: int, cfg: UsageConfig) -> float:
    """Weighted usage score: node term plus file term, each capped at its weight.

    score = node_weight * min(node_count/node_cap, 1)
          + file_weight * min(file_count/file_cap, 1)
    """
    if node_count < 0 or file_count < 0:
        raise ValidationError("counts must be nonnegative")
    node_term = min(node_count / cfg.node_cap, 1.0)
    file_term = min(file_count / cfg.file_cap, 1.0)
    return cfg.node_weight * node_term + cfg.file_weight * file_term


def classify_usage(usage: float, cfg: UsageConfig) -> Tier:
    """Map a usage score to its tier; thresholds are inclusive upward."""
    if usage >= cfg.critical_threshold:
        return Tier.CRITICAL
    if usage >= cfg.elevated_threshold:
        return Tier.ELEVATED
    return Tier.NORMAL


def avatar_scale(usage: float) -> float:
    """Linear avatar size from 1.0 at usage 0 up to AVATAR_MAX_SCALE at 100."""
    return 1.0 + (usage / 100.0) * (AVATAR_MAX_SCALE - 1.0)


def gpu_color(load_pct: float) -> float:
    """GPU indicator intensity in [0, 1]: 0 renders black, 1 full red."""
    return load_pct / 100.0


def correlate_user(state: "ClusterState", user_id: str) -> frozenset[str]:
    """All nodes the user currently occupies: union over their active jobs."""
    if user_id not in state.users:
        raise UnknownUserError(f"unknown user {user_id!r}")
    nodes: set[str] = set()
    for job in state.active_jobs.values():
        if job.user_id == user_id:
            nodes.update(job.node_ids)
    return frozenset(nodes)


def correlate_node(state: "ClusterState", node_id: str) -> frozenset[str]:
    """All users with at least one active job running on the node."""
    if node_id not in state.topology.node_specs:
        raise UnknownNodeError(f"unknown node {node_id!r}")
    return frozenset(
        job.user_id for job in state.active_jobs.values() if node_id in job.node_ids
    )


class AlertKind(enum.Enum):
    USAGE_AT_LEAST = "usage_at_least"
    NODE_CPU_AT_LEAST = "node_cpu_at_least"
    GPU_ALL_BUSY = "gpu_all_busy"


@dataclass(frozen=True)
class AlertRule:
    """One alert condition. Threshold is required except for GPU_ALL_BUSY.

    GPU_ALL_BUSY fires for users on any node where every GPU reports a
    nonzero load (no GPU left idle/black).
    """

    rule_id: str
    kind: AlertKind
    threshold: float | None = None
    description: str = ""

    def __post_init__(self) -> None:
        if not self.rule_id:
            raise ValidationError("rule_id must be nonempty")
        if self.kind is AlertKind.GPU_ALL_BUSY:
            if self.threshold is not None:
                raise ValidationError("gpu_all_busy takes no threshold")
        else:
            if self.threshold is None:
                raise ValidationError(f"{self.kind.value} requires a threshold")
            if not (0.0 <= self.threshold <= 100.0):
                raise ValidationError(
                    f"threshold must lie in [0, 100], got {self.threshold}"
                )


@dataclass(frozen=True)
class Alert:
    rule_id: str
    user_id: str
    ts: int
    detail: str


def evaluate_alerts(state: "ClusterState", rules: Iterable[AlertRule]) -> list[Alert]:
    """Level-triggered alert sweep: one Alert per (rule, user) pair satisfied now.

    Node-scoped rules attribute to every user correlated to the
    offending node. Recomputed from scratch each call; there is no
    deduplication window. Results are sorted by (rule_id, user_id) so
    evaluation is deterministic.
    """
    alerts: list[Alert] = []
    for rule in rules:
        if rule.kind is AlertKind.USAGE_AT_LEAST:
            for user_id in state.users:
                agg = state.aggregates[user_id]
                if agg.usage >= rule.threshold:
                    alerts.append(
                        Alert(rule.rule_id, user_id, state.state_ts,
                              f"usage {agg.usage:.1f} >= {rule.threshold:.1f}")
                    )
        elif rule.kind is AlertKind.NODE_CPU_AT_LEAST:
            hot_by_user: dict[str, list[str]] = {}
            for node_id, tel in state.latest.items():
                if tel.cpu_load_pct >= rule.threshold:
                    for user_id in correlate_node(state, node_id):
                        hot_by_user.setdefault(user_id, []).append(node_id)
            for user_id, node_ids in hot_by_user.items():
                alerts.append(
                    Alert(rule.rule_id, user_id, state.state_ts,
                          f"cpu >= {rule.threshold:.1f} on {','.join(sorted(node_ids))}")
                )
        elif rule.kind is AlertKind.GPU_ALL_BUSY:
            busy_by_user: dict[str, list[str]] = {}
            for node_id, tel in state.latest.items():
                if tel.gpu_load_pct and all(g > 0.0 for g in tel.gpu_load_pct):
                    for user_id in correlate_node(state, node_id):
                        busy_by_user.setdefault(user_id, []).append(node_id)
            for user_id, node_ids in busy_by_user.items():
                alerts.append(
                    Alert(rule.rule_id, user_id, state.state_ts,
                          f"all GPUs busy on {','.join(sorted(node_ids))}")
                )
    alerts.sort(key=lambda a: (a.rule_id, a.user_id))
    return alerts
