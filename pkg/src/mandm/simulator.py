"""Deterministic synthetic cluster.

Stands in for the physical half of the twin: builds a rack/node
topology, a user population with workload profiles, and emits a
telemetry + job-event stream one logical tick at a time. All randomness
comes from a single seeded PCG64 generator, so an identical SimConfig
reproduces the event stream bit for bit; tests and archive generation
rely on that.

Profiles span the three usage tiers by construction: Light users stay
small, Heavy users reach about half the node cap, and Pathological
users demand the full node cap and beyond the file cap, which forces
their usage score to the critical tier.
"""

from __future__ import annotations

from dataclasses import dataclass
import enum
from typing import Iterable

import numpy as np

from . import core
from .analytics import AlertRule, UsageConfig, evaluate_alerts
from .core import (
    ClusterState,
    ClusterTopology,
    JobEvent,
    NodeSpec,
    NodeTelemetry,
    UserInfo,
)
from .errors import ValidationError
from .history import HistoryArchive, format_decimal, write_segment
from .triplestore import TripleStore, telemetry_row_key

# Load shaping constants: idle nodes stay at or below the ceiling, nodes
# hosting at least one job never draw below the floor.
IDLE_LOAD_CEILING = 10.0
BUSY_LOAD_FLOOR = 40.0

_UPDATE_PROB = 0.1  # chance per tick that a user's running job reports new file counts


class ProfileKind(enum.Enum):
    LIGHT = "light"
    HEAVY = "heavy"
    PATHOLOGICAL = "pathological"


@dataclass(frozen=True)
class UserProfile:
    kind: ProfileKind
    jobs_per_hour: float
    nodes_min: int
    nodes_max: int
    files_min: int
    files_max: int
    duration_min_s: int
    duration_max_s: int

    def __post_init__(self) -> None:
        if self.jobs_per_hour < 0:
            raise ValidationError("jobs_per_hour must be nonnegative")
        for lo, hi, what in (
            (self.nodes_min, self.nodes_max, "nodes"),
            (self.files_min, self.files_max, "files"),
            (self.duration_min_s, self.duration_max_s, "duration"),
        ):
            if lo < 0 or lo > hi:
                raise ValidationError(f"bad {what} bounds [{lo}, {hi}]")
        if self.nodes_min < 1:
            raise ValidationError("jobs need at least one node")

    @classmethod
    def light(cls) -> "UserProfile":
        return cls(ProfileKind.LIGHT, 2.0, 1, 2, 1, 20, 600, 3600)

    @classmethod
    def heavy(cls, node_cap: int) -> "UserProfile":
        return cls(ProfileKind.HEAVY, 1.0,
                   max(1, node_cap // 4), max(1, node_cap // 2),
                   100, 500, 1800, 7200)

    @classmethod
    def pathological(cls, node_cap: int, file_cap: int) -> "UserProfile":
        # Demands the whole node cap and overshoots the file cap: one such
        # job saturates both usage terms and lands the user in Critical.
        return cls(ProfileKind.PATHOLOGICAL, 6.0,
                   node_cap, node_cap,
                   file_cap, 2 * file_cap, 3600, 14400)

    @classmethod
    def from_kind(cls, kind: ProfileKind | str, node_cap: int, file_cap: int) -> "UserProfile":
        kind = ProfileKind(kind) if isinstance(kind, str) else kind
        if kind is ProfileKind.LIGHT:
            return cls.light()
        if kind is ProfileKind.HEAVY:
            return cls.heavy(node_cap)
        return cls.pathological(node_cap, file_cap)


@dataclass(frozen=True)
class SimUser:
    user_id: str
    name: str
    rank: str
    profile: UserProfile

    def info(self) -> UserInfo:
        return UserInfo(self.user_id, self.name, self.rank)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    racks: int
    nodes_per_rack: int
    gpus_per_node: int = 0
    tick_interval_s: int = 60
    users: tuple[SimUser, ...] = ()
    cpu_cores: int = 64
    mem_total_mb: int = 262144

    def __post_init__(self) -> None:
        object.__setattr__(self, "users", tuple(self.users))
        if self.racks < 1 or self.nodes_per_rack < 1:
            raise ValidationError("simulator needs at least one rack and one node per rack")
        if self.gpus_per_node < 0:
            raise ValidationError("gpus_per_node must be nonnegative")
        if self.tick_interval_s < 1:
            raise ValidationError("tick_interval_s must be positive")
        seen = set()
        for u in self.users:
            if u.user_id in seen:
                raise ValidationError(f"duplicate sim user {u.user_id!r}")
            seen.add(u.user_id)

    @property
    def total_nodes(self) -> int:
        return self.racks * self.nodes_per_rack


@dataclass
class _SimJob:
    user_id: str
    node_ids: frozenset[str]
    files_open: int
    end_ts: int


class SimState:
    """Mutable stepping state; step with tick(), never share across threads."""

    def __init__(self, cfg: SimConfig, topology: ClusterTopology) -> None:
        self.cfg = cfg
        self.topology = topology
        self.clock = 0
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self.active: dict[str, _SimJob] = {}
        self._job_seq = 0

    def _next_job_id(self) -> str:
        self._job_seq += 1
        return f"j{self._job_seq:06d}"


def build_sim(cfg: SimConfig) -> tuple[ClusterTopology, list[UserInfo], SimState]:
    """Topology of racks*nodes_per_rack nodes named r<i>n<j>, plus sim state."""
    spec = NodeSpec(cfg.cpu_cores, cfg.mem_total_mb, cfg.gpus_per_node)
    racks = []
    node_specs = {}
    for i in range(cfg.racks):
        nodes = tuple(f"r{i}n{j}" for j in range(cfg.nodes_per_rack))
        racks.append((f"r{i}", nodes))
        for n in nodes:
            node_specs[n] = spec
    topology = ClusterTopology(tuple(racks), node_specs)
    return topology, [u.info() for u in cfg.users], SimState(cfg, topology)


def _draw(rng: np.random.Generator, lo: float, hi: float) -> float:
    return round(float(rng.uniform(lo, hi)), 3)


def tick(sim: SimState) -> tuple[list[NodeTelemetry], list[JobEvent]]:
    """Advance one tick: job ends, then arrivals/updates, then telemetry.

    Node load correlates with residency: nodes hosting at least one job
    draw cpu in [BUSY_LOAD_FLOOR, 100], idle nodes in
    [0, IDLE_LOAD_CEILING]; idle GPUs report exactly 0 (rendered black).
    """
    cfg = sim.cfg
    sim.clock += cfg.tick_interval_s
    now = sim.clock
    events: list[JobEvent] = []

    for job_id in sorted(sim.active):
        if sim.active[job_id].end_ts <= now:
            job = sim.active.pop(job_id)
            events.append(JobEvent.end(job_id, job.user_id, ts=now))

    node_ids = sim.topology.node_ids
    for user in cfg.users:
        prof = user.profile
        p_start = min(prof.jobs_per_hour * cfg.tick_interval_s / 3600.0, 1.0)
        if sim.rng.random() < p_start:
            want = int(sim.rng.integers(prof.nodes_min, prof.nodes_max + 1))
            n = min(want, len(node_ids))
            picked = sim.rng.choice(len(node_ids), size=n, replace=False)
            nodes = frozenset(node_ids[i] for i in picked)
            files = int(sim.rng.integers(prof.files_min, prof.files_max + 1))
            duration = int(sim.rng.integers(prof.duration_min_s, prof.duration_max_s + 1))
            job_id = sim._next_job_id()
            sim.active[job_id] = _SimJob(user.user_id, nodes, files, now + duration)
            events.append(JobEvent.start(job_id, user.user_id, nodes, files, ts=now))
        else:
            mine = sorted(j for j, job in sim.active.items() if job.user_id == user.user_id)
            if mine and sim.rng.random() < _UPDATE_PROB:
                job_id = mine[int(sim.rng.integers(0, len(mine)))]
                prior = sim.active[job_id]
                files = int(sim.rng.integers(prof.files_min, prof.files_max + 1))
                prior.files_open = files
                events.append(JobEvent.update(job_id, user.user_id, files, ts=now))

    busy: set[str] = set()
    for job in sim.active.values():
        busy.update(job.node_ids)

    telemetry: list[NodeTelemetry] = []
    for node_id in node_ids:
        gpu_count = sim.topology.node_specs[node_id].gpu_count
        if node_id in busy:
            telemetry.append(NodeTelemetry(
                node_id=node_id, ts=now,
                cpu_load_pct=_draw(sim.rng, BUSY_LOAD_FLOOR, 100.0),
                mem_used_pct=_draw(sim.rng, 30.0, 95.0),
                net_rx_mbps=_draw(sim.rng, 50.0, 500.0),
                net_tx_mbps=_draw(sim.rng, 50.0, 500.0),
                gpu_load_pct=tuple(_draw(sim.rng, 20.0, 100.0) for _ in range(gpu_count)),
            ))
        else:
            telemetry.append(NodeTelemetry(
                node_id=node_id, ts=now,
                cpu_load_pct=_draw(sim.rng, 0.0, IDLE_LOAD_CEILING),
                mem_used_pct=_draw(sim.rng, 0.0, IDLE_LOAD_CEILING),
                net_rx_mbps=_draw(sim.rng, 0.0, 5.0),
                net_tx_mbps=_draw(sim.rng, 0.0, 5.0),
                gpu_load_pct=(0.0,) * gpu_count,
            ))
    return telemetry, events


def telemetry_triples(t: NodeTelemetry) -> list[tuple[bytes, str, str]]:
    """Explode one sample into sortable triples, one per telemetry field."""
    row = telemetry_row_key("node", t.node_id, t.ts)
    triples = [
        (row, "cpu_pct", format_decimal(t.cpu_load_pct)),
        (row, "mem_pct", format_decimal(t.mem_used_pct)),
        (row, "net_rx_mbps", format_decimal(t.net_rx_mbps)),
        (row, "net_tx_mbps", format_decimal(t.net_tx_mbps)),
    ]
    for i, g in enumerate(t.gpu_load_pct):
        triples.append((row, f"gpu{i}_pct", format_decimal(g)))
    return triples


def advance_tick(
    sim: SimState,
    state: ClusterState,
    store: TripleStore | None = None,
    rules: tuple[AlertRule, ...] = (),
):
    """One pipeline step: sim tick -> state -> triple puts -> alert sweep.

    Returns (state, telemetry, events, alerts). The caller owns segment
    archiving and publication.
    """
    telemetry, events = tick(sim)
    for e in events:
        state = core.apply_job_event(state, e)
    for t in telemetry:
        state = core.apply_telemetry(state, t)
        if store is not None:
            for row, col, value in telemetry_triples(t):
                store.put(row, col, value)
    alerts = evaluate_alerts(state, rules) if rules else []
    if rules:
        state = core.apply_alert_counts(state, alerts)
    return state, telemetry, events, alerts


@dataclass
class ScenarioResult:
    ticks: int = 0
    events: int = 0
    telemetry_samples: int = 0
    telemetry_fields: int = 0
    triples_written: int = 0
    segments_written: int = 0
    final_state: ClusterState | None = None

    def counts(self) -> dict[str, int]:
        return {
            "ticks": self.ticks,
            "events": self.events,
            "telemetry_samples": self.telemetry_samples,
            "telemetry_fields": self.telemetry_fields,
            "triples_written": self.triples_written,
            "segments_written": self.segments_written,
        }


def run_scenario(
    cfg: SimConfig,
    n_ticks: int,
    store: TripleStore | None = None,
    archive: HistoryArchive | None = None,
    usage_cfg: UsageConfig | None = None,
    alert_rules: Iterable[AlertRule] = (),
    on_tick=None,
) -> ScenarioResult:
    """Drive the full pipeline: events -> state -> triples -> periodic segments.

    Each telemetry field becomes one triple-store put; a segment is
    archived whenever the sim clock lands on a segment-interval
    boundary, so the archive interval must be a multiple of the tick
    interval. `on_tick(state, alerts)` is invoked after each tick with
    the newly published state.
    """
    if n_ticks < 0:
        raise ValidationError("n_ticks must be nonnegative")
    if archive is not None and archive.segment_interval_s % cfg.tick_interval_s != 0:
        raise ValidationError(
            "segment_interval_s must be a multiple of tick_interval_s "
            f"({archive.segment_interval_s} % {cfg.tick_interval_s} != 0)"
        )
    topology, infos, sim = build_sim(cfg)
    state = core.new_state(topology, infos, usage_cfg)
    rules = tuple(alert_rules)
    result = ScenarioResult()

    for _ in range(n_ticks):
        state, telemetry, events, alerts = advance_tick(sim, state, store, rules)
        for t in telemetry:
            fields = 4 + len(t.gpu_load_pct)
            result.telemetry_fields += fields
            if store is not None:
                result.triples_written += fields
        result.ticks += 1
        result.events += len(events)
        result.telemetry_samples += len(telemetry)
        if archive is not None and sim.clock % archive.segment_interval_s == 0:
            write_segment(archive, core.snapshot(state))
            result.segments_written += 1
        if on_tick is not None:
            on_tick(state, alerts)

    result.final_state = state
    return result
