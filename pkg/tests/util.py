"""Shared builders for the test suite."""

from __future__ import annotations

import random
from pathlib import Path

from mandm.core import ClusterTopology, NodeSpec, UserInfo, new_state
from mandm.history import (
    HistoryArchive,
    JobRow,
    NodeRow,
    Segment,
    UserRow,
    write_segment,
)


def topology(racks: int = 1, nodes_per_rack: int = 2, gpus: int = 0) -> ClusterTopology:
    rack_list = []
    specs = {}
    for i in range(racks):
        nodes = tuple(f"r{i}n{j}" for j in range(nodes_per_rack))
        rack_list.append((f"r{i}", nodes))
        for n in nodes:
            specs[n] = NodeSpec(cpu_cores=16, mem_total_mb=65536, gpu_count=gpus)
    return ClusterTopology(tuple(rack_list), specs)


def users(n: int = 2) -> list[UserInfo]:
    return [UserInfo(f"u{i}", f"User {i}", "staff") for i in range(n)]


def state(racks: int = 1, nodes_per_rack: int = 2, gpus: int = 0, n_users: int = 2,
          usage_cfg=None):
    return new_state(topology(racks, nodes_per_rack, gpus), users(n_users), usage_cfg)


def q3(rng: random.Random, lo: float, hi: float) -> float:
    """A float on the 3-decimal grid, as segment fields must be."""
    return round(rng.uniform(lo, hi), 3)


def random_segment(rng: random.Random, ts: int | None = None,
                   max_gpus: int = 16) -> Segment:
    """Arbitrary but grammar-valid segment for round-trip testing."""
    n_nodes = rng.randint(0, 6)
    n_users = rng.randint(0, 4)
    n_jobs = rng.randint(0, 4)
    node_rows = []
    for i in range(n_nodes):
        gpus = rng.choice([0, 0, 1, 2, max_gpus])
        node_rows.append(NodeRow(
            node_id=f"n{i:02d}",
            cpu_load_pct=q3(rng, 0, 100),
            mem_used_pct=q3(rng, 0, 100),
            net_rx_mbps=q3(rng, 0, 10000),
            net_tx_mbps=q3(rng, 0, 10000),
            gpu_loads=tuple(q3(rng, 0, 100) for _ in range(gpus)),
        ))
    user_rows = [
        UserRow(
            user_id=f"u{i:02d}", name=f"user-{i}", rank=rng.choice(["staff", "student"]),
            node_count=rng.randint(0, 50), file_count=rng.randint(0, 5000),
            job_count=rng.randint(0, 20), alert_count=rng.randint(0, 5),
            usage=q3(rng, 0, 100),
        )
        for i in range(n_users)
    ]
    job_rows = [
        JobRow(
            job_id=f"j{i:04d}", user_id=f"u{rng.randint(0, 3):02d}", state="running",
            node_ids=tuple(f"n{k:02d}" for k in sorted(rng.sample(range(6), rng.randint(1, 3)))),
            files_open=rng.randint(0, 2000),
        )
        for i in range(n_jobs)
    ]
    return Segment.build(
        ts=ts if ts is not None else rng.randint(0, 2_000_000_000),
        node_rows=node_rows, user_rows=user_rows, job_rows=job_rows,
    )


def synthetic_archive(directory: Path, n_files: int, interval: int = 300,
                      seed: int = 7) -> HistoryArchive:
    """Archive of n_files small segments at ts = interval, 2*interval, ..."""
    archive = HistoryArchive(directory, interval)
    rng = random.Random(seed)
    for k in range(1, n_files + 1):
        write_segment(archive, random_segment(rng, ts=k * interval))
    return archive
