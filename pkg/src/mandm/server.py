"""Wire protocol and HTTP service.

Exposes the twin over HTTP/1.1 + JSON: live snapshots, user<->node
correlation queries, history load control with progress polling, and
replay segment access, plus a WebSocket stream that pushes one message
per applied sim tick. Requests are answered from the newest published
immutable state, so every response is internally consistent and the
single event-application loop is the only writer.

Every number on the wire is produced by an analytics call over the
published state (tier, avatar scale, GPU intensity); the server adds no
arithmetic of its own and the browser client is expected to add none
either.

Slow stream subscribers are disconnected rather than allowed to block
the twin: each subscription owns a bounded queue, and a publish that
finds the queue full closes that subscription with a protocol-level
reason while the others keep receiving.
"""

from __future__ import annotations

import asyncio
import json
import logging
import queue
import threading

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from . import analytics, core, simulator
from .analytics import UsageConfig
from .config import ServiceConfig
from .core import ClusterState, ClusterTopology
from .errors import (
    ArchiveError,
    LoadBusyError,
    MandmError,
    UnknownNodeError,
    UnknownUserError,
    ValidationError,
)
from .history import (
    HistoryLoader,
    LoadState,
    LoadStatus,
    ReplayCursor,
    Segment,
    write_segment,
)
from .triplestore import TripleStore

log = logging.getLogger(__name__)

WIRE_VERSION = 1


def wire_snapshot(state: ClusterState) -> dict:
    """Render a cluster state as the versioned JSON snapshot document."""
    nodes = []
    for node_id in sorted(state.topology.node_ids):
        spec = state.topology.node_specs[node_id]
        t = state.latest.get(node_id)
        gpu_loads = t.gpu_load_pct if t is not None else (0.0,) * spec.gpu_count
        nodes.append({
            "id": node_id,
            "rack": state.topology.rack_of(node_id),
            "cpu": t.cpu_load_pct if t else 0.0,
            "mem": t.mem_used_pct if t else 0.0,
            "net_rx": t.net_rx_mbps if t else 0.0,
            "net_tx": t.net_tx_mbps if t else 0.0,
            "gpus": [analytics.gpu_color(g) for g in gpu_loads],
        })
    users = []
    for user_id in sorted(state.users):
        info = state.users[user_id]
        agg = state.aggregates[user_id]
        users.append({
            "id": user_id,
            "name": info.name,
            "rank": info.rank,
            "nodes": agg.node_count,
            "files": agg.file_count,
            "jobs": agg.job_count,
            "alerts": agg.alert_count,
            "usage": agg.usage,
            "tier": agg.tier.wire,
            "scale": analytics.avatar_scale(agg.usage),
        })
    jobs = []
    for job_id in sorted(state.active_jobs):
        job = state.active_jobs[job_id]
        jobs.append({
            "id": job_id,
            "user": job.user_id,
            "nodes": sorted(job.node_ids),
            "files": job.files_open,
        })
    return {"v": WIRE_VERSION, "ts": state.state_ts,
            "nodes": nodes, "users": users, "jobs": jobs}


def wire_from_segment(
    segment: Segment,
    topology: ClusterTopology | None,
    usage_cfg: UsageConfig,
) -> dict:
    """Render an archived segment through the same snapshot schema.

    Tier and scale are re-derived from the archived usage value, so the
    UI replays history through its ordinary rendering path.
    """
    nodes = []
    for n in segment.node_rows:
        rack = ""
        if topology is not None and n.node_id in topology.node_specs:
            rack = topology.rack_of(n.node_id)
        nodes.append({
            "id": n.node_id,
            "rack": rack,
            "cpu": n.cpu_load_pct,
            "mem": n.mem_used_pct,
            "net_rx": n.net_rx_mbps,
            "net_tx": n.net_tx_mbps,
            "gpus": [analytics.gpu_color(g) for g in n.gpu_loads],
        })
    users = []
    for u in segment.user_rows:
        users.append({
            "id": u.user_id,
            "name": u.name,
            "rank": u.rank,
            "nodes": u.node_count,
            "files": u.file_count,
            "jobs": u.job_count,
            "alerts": u.alert_count,
            "usage": u.usage,
            "tier": analytics.classify_usage(u.usage, usage_cfg).wire,
            "scale": analytics.avatar_scale(u.usage),
        })
    jobs = [
        {"id": j.job_id, "user": j.user_id, "nodes": list(j.node_ids), "files": j.files_open}
        for j in segment.job_rows
    ]
    return {"v": WIRE_VERSION, "ts": segment.ts,
            "nodes": nodes, "users": users, "jobs": jobs}


def wire_delta(prev: dict, cur: dict) -> dict:
    """Entity-keyed diff between two snapshot documents.

    Lists carry only added/changed entries; `removed` names vanished
    ids. Applying a delta to the previous snapshot reproduces the
    current one.
    """
    out: dict = {"v": cur["v"], "ts": cur["ts"], "removed": {}}
    for kind in ("nodes", "users", "jobs"):
        before = {e["id"]: e for e in prev[kind]}
        after = {e["id"]: e for e in cur[kind]}
        out[kind] = [e for eid, e in after.items() if before.get(eid) != e]
        out["removed"][kind] = sorted(set(before) - set(after))
    return out


class Subscription:
    """One stream consumer: a bounded queue plus a closed flag."""

    def __init__(self, buffer_size: int) -> None:
        self._q: queue.Queue[str] = queue.Queue(maxsize=buffer_size)
        self.closed = threading.Event()
        self.close_reason: str | None = None

    def get(self, timeout: float) -> str | None:
        try:
            return self._q.get(timeout=timeout)
        except queue.Empty:
            return None

    def _offer(self, message: str) -> bool:
        try:
            self._q.put_nowait(message)
            return True
        except queue.Full:
            return False


class StreamBus:
    """Fan-out of per-tick messages to subscribers with bounded buffering."""

    def __init__(self, buffer_size: int) -> None:
        self.buffer_size = buffer_size
        self._lock = threading.Lock()
        self._subs: list[Subscription] = []

    def subscribe(self, initial: str | None = None) -> Subscription:
        sub = Subscription(self.buffer_size)
        if initial is not None:
            sub._offer(initial)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, message: str) -> None:
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            if sub.closed.is_set():
                continue
            if not sub._offer(message):
                sub.close_reason = "slow consumer: stream buffer overflow"
                sub.closed.set()


class TwinService:
    """Owns the live twin: sim stepping, published state, history mode.

    Exactly one logical writer calls tick_once (the pacing thread or a
    test driving ticks manually); readers get the newest published
    immutable state. History loading runs on its own thread inside
    HistoryLoader and touches nothing live.
    """

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        if config.sim is not None:
            topology, users, sim = simulator.build_sim(config.sim)
            self._sim = sim
        else:
            topology, users = config.topology, list(config.users)
            self._sim = None
        self._state = core.new_state(topology, users, config.usage)
        self._lock = threading.Lock()
        self._published: ClusterState | None = None
        self._published_wire: dict | None = None
        self.bus = StreamBus(config.server.stream_buffer)
        self.store = TripleStore(config.store_path) if config.store_path else None
        self.loader = HistoryLoader(config.archive) if config.archive else None
        self._history_job = None
        self._history_cursor: ReplayCursor | None = None
        self._ticker: threading.Thread | None = None
        self._stop = threading.Event()

    # -- live path ---------------------------------------------------------

    def publish_initial(self) -> None:
        """Make the pre-tick (empty telemetry) state visible to readers."""
        self._publish(self._state, kind="snapshot")

    def tick_once(self) -> None:
        if self._sim is None:
            raise MandmError("service has no simulator; feed events externally")
        state, telemetry, events, alerts = simulator.advance_tick(
            self._sim, self._state, self.store, self.config.alert_rules
        )
        self._state = state
        archive = self.config.archive
        if archive is not None and self._sim.clock % archive.segment_interval_s == 0:
            try:
                write_segment(archive, core.snapshot(state))
            except ArchiveError as exc:
                log.warning("segment not archived: %s", exc)
        self._publish(state, kind="snapshot")

    def _publish(self, state: ClusterState, kind: str) -> None:
        wire = wire_snapshot(state)
        with self._lock:
            prev_wire = self._published_wire
            self._published = state
            self._published_wire = wire
        threshold = self.config.server.delta_node_threshold
        if prev_wire is not None and len(wire["nodes"]) >= threshold:
            message = {"kind": "delta", **wire_delta(prev_wire, wire)}
        else:
            message = {"kind": "snapshot", **wire}
        self.bus.publish(json.dumps(message, separators=(",", ":")))

    def current_state(self) -> ClusterState | None:
        with self._lock:
            return self._published

    def current_wire(self) -> dict | None:
        with self._lock:
            return self._published_wire

    def current_message(self) -> str | None:
        wire = self.current_wire()
        if wire is None:
            return None
        return json.dumps({"kind": "snapshot", **wire}, separators=(",", ":"))

    def start_ticking(self, cadence_s: float | None = None) -> None:
        if self._ticker is not None:
            return
        cadence = cadence_s if cadence_s is not None else self.config.server.tick_cadence_s
        self.publish_initial()

        def loop() -> None:
            while not self._stop.wait(cadence):
                try:
                    self.tick_once()
                except Exception:
                    log.exception("tick failed")

        self._ticker = threading.Thread(target=loop, name="mandm-tick", daemon=True)
        self._ticker.start()

    def stop(self) -> None:
        self._stop.set()
        if self._ticker is not None:
            self._ticker.join(timeout=2.0)
        if self.store is not None:
            self.store.close()

    # -- history mode --------------------------------------------------------

    def history_load(self, from_ts: int, to_ts: int):
        if self.loader is None:
            raise MandmError("no archive configured")
        job = self.loader.begin_load(from_ts, to_ts)
        self._history_job = job
        self._history_cursor = None
        return job

    def history_status(self) -> LoadStatus:
        if self._history_job is None:
            return LoadStatus(LoadState.IDLE)
        return self.loader.load_status(self._history_job)

    def history_segment(self, index: int) -> Segment:
        status = self.history_status()
        if status.state is not LoadState.READY:
            raise LoadBusyError(f"history not ready (state {status.state.value})")
        if self._history_cursor is None:
            self._history_cursor = self.loader.cursor(self._history_job)
        return self._history_cursor.seek(index)

    def history_exit(self) -> None:
        self._history_job = None
        self._history_cursor = None


def create_app(service: TwinService) -> FastAPI:
    app = FastAPI(title="mandm", version="1")

    def _not_ready() -> JSONResponse:
        return JSONResponse({"error": "no state published yet"}, status_code=503)

    @app.get("/api/v1/cluster")
    def cluster():
        wire = service.current_wire()
        if wire is None:
            return _not_ready()
        return wire

    @app.get("/api/v1/correlate/user/{user_id}")
    def correlate_user(user_id: str):
        state = service.current_state()
        if state is None:
            return _not_ready()
        try:
            nodes = analytics.correlate_user(state, user_id)
        except UnknownUserError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        return {"nodes": sorted(nodes)}

    @app.get("/api/v1/correlate/node/{node_id}")
    def correlate_node(node_id: str):
        state = service.current_state()
        if state is None:
            return _not_ready()
        try:
            users = analytics.correlate_node(state, node_id)
        except UnknownNodeError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        return {"users": sorted(users)}

    @app.post("/api/v1/history/load", status_code=202)
    def history_load(body: dict):
        try:
            from_ts, to_ts = int(body["from_ts"]), int(body["to_ts"])
        except (KeyError, TypeError, ValueError):
            return JSONResponse({"error": "body needs integer from_ts and to_ts"},
                                status_code=422)
        try:
            job = service.history_load(from_ts, to_ts)
        except LoadBusyError as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        except MandmError as exc:
            return JSONResponse({"error": str(exc)}, status_code=503)
        return {"job": id(job), "state": job.status().state.value}

    @app.get("/api/v1/history/status")
    def history_status():
        status = service.history_status()
        doc = {"state": status.state.value, "loaded": status.loaded, "total": status.total}
        if status.reason is not None:
            doc["reason"] = status.reason
        return doc

    @app.get("/api/v1/history/segments/{index}")
    def history_segment(index: int):
        try:
            segment = service.history_segment(index)
        except LoadBusyError as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        except ValidationError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        state = service.current_state()
        topology = state.topology if state is not None else None
        return wire_from_segment(segment, topology, service.config.usage)

    @app.post("/api/v1/history/exit")
    def history_exit():
        service.history_exit()
        return {"state": "live"}

    @app.websocket("/api/v1/live")
    async def live(ws: WebSocket):
        await ws.accept()
        sub = service.bus.subscribe(initial=service.current_message())
        try:
            while True:
                message = await asyncio.to_thread(sub.get, 0.25)
                if sub.closed.is_set():
                    await ws.close(code=1013, reason=sub.close_reason or "closed")
                    break
                if message is not None:
                    await ws.send_text(message)
        except WebSocketDisconnect:
            pass
        finally:
            service.bus.unsubscribe(sub)

    static_dir = service.config.server.static_dir
    if static_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
