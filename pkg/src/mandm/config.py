"""Service configuration file (YAML, versioned).

One file configures the whole service. Top-level sections:

    version   required, currently 1
    server    bind address, stream buffer, delta threshold, tick cadence
    usage     weights / caps / tier thresholds for the Usage score
    alerts    list of alert rules
    archive   segment directory and interval
    store     triple-store log path (optional; no store when absent)
    sim       synthetic cluster (seed, racks, users with profiles), OR
    topology+users  an explicit static roster for externally-fed twins

Exactly one of `sim` or `topology` must be present. The CLI falls back
to the MANDM_CONFIG environment variable when --config is not given.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .analytics import AlertKind, AlertRule, UsageConfig
from .core import ClusterTopology, NodeSpec, UserInfo
from .errors import ConfigError, ValidationError
from .history import DEFAULT_SEGMENT_INTERVAL_S, HistoryArchive
from .simulator import ProfileKind, SimConfig, SimUser, UserProfile

CONFIG_VERSION = 1
CONFIG_ENV_VAR = "MANDM_CONFIG"

_TOP_LEVEL_KEYS = {
    "version", "server", "usage", "alerts", "archive", "store",
    "sim", "topology", "users",
}


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    stream_buffer: int = 64
    delta_node_threshold: int = 200
    tick_cadence_s: float = 1.0
    static_dir: str | None = None


@dataclass(frozen=True)
class ServiceConfig:
    path: Path | None
    server: ServerConfig
    usage: UsageConfig
    alert_rules: tuple[AlertRule, ...]
    archive: HistoryArchive | None
    store_path: Path | None
    sim: SimConfig | None
    topology: ClusterTopology | None
    users: tuple[UserInfo, ...] = ()

    def require_sim(self) -> SimConfig:
        if self.sim is None:
            raise ConfigError("this command needs a `sim` section in the config")
        return self.sim

    def require_archive(self) -> HistoryArchive:
        if self.archive is None:
            raise ConfigError("this command needs an `archive` section in the config")
        return self.archive


def resolve_config_path(cli_value: str | None) -> Path:
    value = cli_value or os.environ.get(CONFIG_ENV_VAR)
    if not value:
        raise ConfigError(
            f"no config file given (pass --config or set {CONFIG_ENV_VAR})"
        )
    return Path(value)


def _section(doc: dict, key: str) -> dict:
    value = doc.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section `{key}` must be a mapping")
    return value


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a YAML mapping")

    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if doc.get("version") != CONFIG_VERSION:
        raise ConfigError(
            f"config version must be {CONFIG_VERSION}, got {doc.get('version')!r}"
        )
    if ("sim" in doc) == ("topology" in doc):
        raise ConfigError("config needs exactly one of `sim` or `topology`")

    try:
        server = ServerConfig(**_section(doc, "server"))

        usage_raw = _section(doc, "usage")
        sim_cfg: SimConfig | None = None
        topology: ClusterTopology | None = None
        users: tuple[UserInfo, ...] = ()

        if "sim" in doc:
            sim_cfg, total_nodes = _parse_sim(_section(doc, "sim"), usage_raw)
        else:
            topology, users = _parse_topology(doc)
            total_nodes = len(topology.node_ids)

        usage = UsageConfig.for_cluster(total_nodes, **usage_raw)
        alert_rules = _parse_alerts(doc.get("alerts") or [])

        archive = None
        if "archive" in doc:
            arch_raw = _section(doc, "archive")
            if "dir" not in arch_raw:
                raise ConfigError("archive section needs a `dir`")
            archive = HistoryArchive(
                directory=Path(arch_raw["dir"]),
                segment_interval_s=int(
                    arch_raw.get("segment_interval_s", DEFAULT_SEGMENT_INTERVAL_S)
                ),
            )

        store_path = None
        if "store" in doc:
            store_raw = _section(doc, "store")
            if "path" not in store_raw:
                raise ConfigError("store section needs a `path`")
            store_path = Path(store_raw["path"])
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"config {path}: {exc}") from exc

    return ServiceConfig(
        path=path,
        server=server,
        usage=usage,
        alert_rules=alert_rules,
        archive=archive,
        store_path=store_path,
        sim=sim_cfg,
        topology=topology,
        users=users,
    )


def _parse_sim(raw: dict, usage_raw: dict) -> tuple[SimConfig, int]:
    required = {"seed", "racks", "nodes_per_rack"}
    missing = required - set(raw)
    if missing:
        raise ConfigError(f"sim section missing keys: {sorted(missing)}")
    racks = int(raw["racks"])
    nodes_per_rack = int(raw["nodes_per_rack"])
    total_nodes = racks * nodes_per_rack
    node_cap = int(usage_raw.get("node_cap") or max(total_nodes, 1))
    file_cap = int(usage_raw.get("file_cap") or 1000)

    sim_users = []
    for u in raw.get("users") or []:
        profile = u.get("profile", "light")
        if isinstance(profile, str):
            profile = UserProfile.from_kind(ProfileKind(profile), node_cap, file_cap)
        else:
            profile = UserProfile(kind=ProfileKind(profile.pop("kind")), **profile)
        sim_users.append(SimUser(
            user_id=str(u["user_id"]), name=str(u.get("name", u["user_id"])),
            rank=str(u.get("rank", "user")), profile=profile,
        ))

    cfg = SimConfig(
        seed=int(raw["seed"]),
        racks=racks,
        nodes_per_rack=nodes_per_rack,
        gpus_per_node=int(raw.get("gpus_per_node", 0)),
        tick_interval_s=int(raw.get("tick_interval_s", 60)),
        users=tuple(sim_users),
    )
    return cfg, total_nodes


def _parse_topology(doc: dict) -> tuple[ClusterTopology, tuple[UserInfo, ...]]:
    topo_raw = _section(doc, "topology")
    racks = []
    node_specs = {}
    for rack in topo_raw.get("racks") or []:
        node_ids = []
        for node in rack.get("nodes") or []:
            node_id = str(node["node_id"])
            node_ids.append(node_id)
            node_specs[node_id] = NodeSpec(
                cpu_cores=int(node.get("cpu_cores", 64)),
                mem_total_mb=int(node.get("mem_total_mb", 262144)),
                gpu_count=int(node.get("gpu_count", 0)),
            )
        racks.append((str(rack["rack_id"]), tuple(node_ids)))
    topology = ClusterTopology(tuple(racks), node_specs)
    users = tuple(
        UserInfo(str(u["user_id"]), str(u.get("name", u["user_id"])),
                 str(u.get("rank", "user")))
        for u in doc.get("users") or []
    )
    return topology, users


def _parse_alerts(raw: list) -> tuple[AlertRule, ...]:
    rules = []
    for r in raw:
        if not isinstance(r, dict) or "rule_id" not in r or "kind" not in r:
            raise ConfigError(f"alert rule needs rule_id and kind: {r!r}")
        try:
            kind = AlertKind(r["kind"])
        except ValueError:
            raise ConfigError(f"unknown alert kind {r['kind']!r}") from None
        threshold = r.get("threshold")
        rules.append(AlertRule(
            rule_id=str(r["rule_id"]),
            kind=kind,
            threshold=float(threshold) if threshold is not None else None,
            description=str(r.get("description", "")),
        ))
    return tuple(rules)
