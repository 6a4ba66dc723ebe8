"""Point-in-time segment archiving and replay.

A Segment is a full snapshot of the cluster (node telemetry, user
aggregates, active jobs) serialized to a strict line-oriented CSV file,
one file per snapshot, written roughly every few minutes. This module
owns the grammar, the on-disk archive of `segment_<ts>.csv` files, a
background bulk loader that caches a time range into one in-memory
array with progress reporting, a replay cursor for scrubbing through
that array, and a synchronous bench harness that measures load cost.

Segment CSV grammar (version 1, line terminator "\\n"):

    #MANDM,1,<ts>
    N,<node_id>,<cpu>,<mem>,<net_rx>,<net_tx>,<gpu_count>,<g1>,...,<gk>
    U,<user_id>,<name>,<rank>,<nodes>,<files>,<jobs>,<alerts>,<usage>
    J,<job_id>,<user_id>,<state>,<node_ids ';'-joined>,<files_open>

All N rows come first, then U, then J, each group sorted by id
bytewise. Decimals carry at most 3 fractional digits (at least one, so
integral floats read back unambiguously as floats), never exponent
form. Fields must not contain ",", ";", or newlines.
"""

from __future__ import annotations

import enum
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    ArchiveError,
    LoadBusyError,
    MandmError,
    SegmentFormatError,
    ValidationError,
)

log = logging.getLogger(__name__)

SEGMENT_VERSION = 1
HEADER_MAGIC = "#MANDM"
DEFAULT_SEGMENT_INTERVAL_S = 300

_FILENAME_RE = re.compile(r"^segment_(\d+)\.csv$")
_FORBIDDEN_CHARS = (",", ";", "\n", "\r")


def _quant(x: float) -> float:
    """Quantize to the 3-fractional-digit grid the CSV grammar can carry."""
    return round(float(x), 3) + 0.0  # + 0.0 folds -0.0 into 0.0


def format_decimal(x: float) -> str:
    """Canonical decimal rendering: <= 3 fractional digits, >= 1, no exponent."""
    s = f"{x:.3f}".rstrip("0")
    return s + "0" if s.endswith(".") else s


def _check_field(value: str, what: str) -> str:
    for ch in _FORBIDDEN_CHARS:
        if ch in value:
            raise ValidationError(f"{what} {value!r} contains forbidden character {ch!r}")
    if not value:
        raise ValidationError(f"{what} must be nonempty")
    return value


@dataclass(frozen=True)
class NodeRow:
    node_id: str
    cpu_load_pct: float
    mem_used_pct: float
    net_rx_mbps: float
    net_tx_mbps: float
    gpu_loads: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        _check_field(self.node_id, "node_id")
        object.__setattr__(self, "cpu_load_pct", _quant(self.cpu_load_pct))
        object.__setattr__(self, "mem_used_pct", _quant(self.mem_used_pct))
        object.__setattr__(self, "net_rx_mbps", _quant(self.net_rx_mbps))
        object.__setattr__(self, "net_tx_mbps", _quant(self.net_tx_mbps))
        object.__setattr__(self, "gpu_loads", tuple(_quant(g) for g in self.gpu_loads))


@dataclass(frozen=True)
class UserRow:
    user_id: str
    name: str
    rank: str
    node_count: int
    file_count: int
    job_count: int
    alert_count: int
    usage: float

    def __post_init__(self) -> None:
        _check_field(self.user_id, "user_id")
        _check_field(self.name, "name")
        _check_field(self.rank, "rank")
        object.__setattr__(self, "usage", _quant(self.usage))


@dataclass(frozen=True)
class JobRow:
    job_id: str
    user_id: str
    state: str
    node_ids: tuple[str, ...]
    files_open: int

    def __post_init__(self) -> None:
        _check_field(self.job_id, "job_id")
        _check_field(self.user_id, "user_id")
        _check_field(self.state, "state")
        for n in self.node_ids:
            _check_field(n, "node_id")
        object.__setattr__(self, "node_ids", tuple(self.node_ids))


@dataclass(frozen=True)
class Segment:
    """One archived snapshot. Immutable; rows are pre-sorted by id on build."""

    ts: int
    node_rows: tuple[NodeRow, ...] = ()
    user_rows: tuple[UserRow, ...] = ()
    job_rows: tuple[JobRow, ...] = ()
    version: int = SEGMENT_VERSION

    @classmethod
    def build(
        cls,
        ts: int,
        node_rows: Iterable[NodeRow] = (),
        user_rows: Iterable[UserRow] = (),
        job_rows: Iterable[JobRow] = (),
    ) -> "Segment":
        """Sort each row group bytewise by id, as the file grammar requires."""
        return cls(
            ts=ts,
            node_rows=tuple(sorted(node_rows, key=lambda r: r.node_id.encode())),
            user_rows=tuple(sorted(user_rows, key=lambda r: r.user_id.encode())),
            job_rows=tuple(sorted(job_rows, key=lambda r: r.job_id.encode())),
        )


def serialize_segment(segment: Segment) -> str:
    lines = [f"{HEADER_MAGIC},{segment.version},{segment.ts}"]
    for n in segment.node_rows:
        gpu_fields = [format_decimal(g) for g in n.gpu_loads]
        lines.append(",".join(
            ["N", n.node_id,
             format_decimal(n.cpu_load_pct), format_decimal(n.mem_used_pct),
             format_decimal(n.net_rx_mbps), format_decimal(n.net_tx_mbps),
             str(len(n.gpu_loads))] + gpu_fields
        ))
    for u in segment.user_rows:
        lines.append(",".join(
            ["U", u.user_id, u.name, u.rank,
             str(u.node_count), str(u.file_count), str(u.job_count),
             str(u.alert_count), format_decimal(u.usage)]
        ))
    for j in segment.job_rows:
        lines.append(",".join(
            ["J", j.job_id, j.user_id, j.state,
             ";".join(j.node_ids), str(j.files_open)]
        ))
    return "\n".join(lines) + "\n"


_DECIMAL_RE = re.compile(r"^-?\d+(\.\d{1,3})?$")


def _parse_decimal(s: str, lineno: int) -> float:
    if not _DECIMAL_RE.match(s):
        raise SegmentFormatError(f"line {lineno}: not a decimal number: {s!r}")
    return float(s)


def _parse_int(s: str, lineno: int) -> int:
    if not re.match(r"^-?\d+$", s):
        raise SegmentFormatError(f"line {lineno}: not an integer: {s!r}")
    return int(s)


def parse_segment(data: bytes | str) -> Segment:
    """Strict parse of one segment file; rejects anything off-grammar.

    Errors name the offending line number. Row-group order (N, U, J) and
    bytewise id sorting within each group are enforced, which also makes
    duplicate entities unrepresentable.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    if not text.endswith("\n"):
        raise SegmentFormatError("line 1: missing trailing newline terminator")
    lines = text.split("\n")[:-1]
    if not lines:
        raise SegmentFormatError("line 1: empty file")

    header = lines[0].split(",")
    if len(header) != 3 or header[0] != HEADER_MAGIC:
        raise SegmentFormatError(f"line 1: bad header magic: {lines[0]!r}")
    if header[1] != str(SEGMENT_VERSION):
        raise SegmentFormatError(f"line 1: unsupported version {header[1]!r}")
    ts = _parse_int(header[2], 1)

    node_rows: list[NodeRow] = []
    user_rows: list[UserRow] = []
    job_rows: list[JobRow] = []
    phase = 0  # 0 = N rows, 1 = U rows, 2 = J rows
    prev_id: bytes | None = None

    for i, line in enumerate(lines[1:], start=2):
        if not line:
            raise SegmentFormatError(f"line {i}: empty line")
        fields = line.split(",")
        tag = fields[0]
        if tag not in ("N", "U", "J"):
            raise SegmentFormatError(f"line {i}: unknown row tag {tag!r}")
        tag_phase = {"N": 0, "U": 1, "J": 2}[tag]
        if tag_phase < phase:
            raise SegmentFormatError(f"line {i}: {tag} row out of group order")
        if tag_phase > phase:
            phase, prev_id = tag_phase, None

        row_id = fields[1].encode() if len(fields) > 1 else b""
        if prev_id is not None and row_id <= prev_id:
            raise SegmentFormatError(
                f"line {i}: id {fields[1]!r} not strictly ascending within group"
            )
        prev_id = row_id

        if tag == "N":
            if len(fields) < 7:
                raise SegmentFormatError(f"line {i}: N row needs >= 7 fields")
            gpu_count = _parse_int(fields[6], i)
            if gpu_count < 0:
                raise SegmentFormatError(f"line {i}: negative gpu_count")
            if len(fields) != 7 + gpu_count:
                raise SegmentFormatError(
                    f"line {i}: expected {7 + gpu_count} fields for gpu_count "
                    f"{gpu_count}, got {len(fields)}"
                )
            node_rows.append(NodeRow(
                node_id=fields[1],
                cpu_load_pct=_parse_decimal(fields[2], i),
                mem_used_pct=_parse_decimal(fields[3], i),
                net_rx_mbps=_parse_decimal(fields[4], i),
                net_tx_mbps=_parse_decimal(fields[5], i),
                gpu_loads=tuple(_parse_decimal(f, i) for f in fields[7:]),
            ))
        elif tag == "U":
            if len(fields) != 9:
                raise SegmentFormatError(f"line {i}: U row needs 9 fields, got {len(fields)}")
            user_rows.append(UserRow(
                user_id=fields[1], name=fields[2], rank=fields[3],
                node_count=_parse_int(fields[4], i),
                file_count=_parse_int(fields[5], i),
                job_count=_parse_int(fields[6], i),
                alert_count=_parse_int(fields[7], i),
                usage=_parse_decimal(fields[8], i),
            ))
        else:
            if len(fields) != 6:
                raise SegmentFormatError(f"line {i}: J row needs 6 fields, got {len(fields)}")
            node_ids = tuple(fields[4].split(";")) if fields[4] else ()
            job_rows.append(JobRow(
                job_id=fields[1], user_id=fields[2], state=fields[3],
                node_ids=node_ids,
                files_open=_parse_int(fields[5], i),
            ))

    return Segment(
        ts=ts,
        node_rows=tuple(node_rows),
        user_rows=tuple(user_rows),
        job_rows=tuple(job_rows),
    )


@dataclass(frozen=True)
class HistoryArchive:
    """A directory of immutable `segment_<unix_ts>.csv` files."""

    directory: Path
    segment_interval_s: int = DEFAULT_SEGMENT_INTERVAL_S

    def __post_init__(self) -> None:
        object.__setattr__(self, "directory", Path(self.directory))
        if self.segment_interval_s < 1:
            raise ValidationError("segment_interval_s must be positive")

    def path_for(self, ts: int) -> Path:
        return self.directory / f"segment_{ts}.csv"


def write_segment(archive: HistoryArchive, segment: Segment) -> str:
    """Atomically write one segment file; returns the bare filename.

    Segments are immutable: a second write at the same ts is a collision
    error, and a failed write never leaves a partial file visible.
    """
    target = archive.path_for(segment.ts)
    if target.exists():
        raise ArchiveError(f"segment for ts {segment.ts} already archived: {target.name}")
    archive.directory.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(f".{target.name}.tmp-{os.getpid()}")
    try:
        tmp.write_text(serialize_segment(segment), encoding="utf-8")
        os.replace(tmp, target)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise
    return target.name


def read_segment_file(path: Path) -> Segment:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ArchiveError(f"cannot read segment file {path}: {exc}") from exc
    return parse_segment(data)


def list_segments(archive: HistoryArchive, from_ts: int, to_ts: int) -> list[tuple[int, str]]:
    """All (ts, filename) with from_ts <= ts < to_ts, ascending by ts.

    Non-segment filenames in the directory are skipped with a warning.
    """
    if from_ts > to_ts:
        raise ValidationError(f"inverted range: from_ts {from_ts} > to_ts {to_ts}")
    try:
        names = os.listdir(archive.directory)
    except OSError as exc:
        raise ArchiveError(f"cannot list archive {archive.directory}: {exc}") from exc
    out: list[tuple[int, str]] = []
    for name in names:
        m = _FILENAME_RE.match(name)
        if not m:
            if not name.startswith("."):
                log.warning("ignoring non-segment file in archive: %s", name)
            continue
        ts = int(m.group(1))
        if from_ts <= ts < to_ts:
            out.append((ts, name))
    out.sort()
    return out


def segments_for_duration(duration_s: int, interval_s: int) -> int:
    """How many segment files a duration spans at a fixed cadence."""
    if interval_s <= 0:
        raise ValidationError("interval_s must be positive")
    return int(duration_s // interval_s)


class LoadState(enum.Enum):
    IDLE = "idle"
    LOADING = "loading"
    READY = "ready"
    FAILED = "failed"


@dataclass(frozen=True)
class LoadStatus:
    state: LoadState
    loaded: int = 0
    total: int = 0
    reason: str | None = None


class LoadJob:
    """Handle for one background bulk load; state transitions are monotone.

    IDLE -> LOADING -> READY | FAILED, and READY/FAILED are final: every
    later poll returns the same status.
    """

    def __init__(self, loader: "HistoryLoader", started_at: int) -> None:
        self._loader = loader
        self.started_at = started_at
        self._lock = threading.Lock()
        self._status = LoadStatus(LoadState.IDLE)
        self._segments: tuple[Segment, ...] = ()

    def status(self) -> LoadStatus:
        with self._lock:
            return self._status

    def _set(self, status: LoadStatus) -> None:
        with self._lock:
            if self._status.state in (LoadState.READY, LoadState.FAILED):
                return  # final states never regress
            self._status = status


class ReplayCursor:
    """O(1) scrubbing over the loaded, ts-ascending segment array."""

    def __init__(self, segments: Sequence[Segment]) -> None:
        self._segments = tuple(segments)
        self._index = 0

    @property
    def count(self) -> int:
        return len(self._segments)

    @property
    def index(self) -> int:
        return self._index

    def seek(self, index: int) -> Segment:
        if not 0 <= index < len(self._segments):
            raise ValidationError(
                f"cursor index {index} out of range [0, {len(self._segments)})"
            )
        self._index = index
        return self._segments[index]

    def step(self, delta: int) -> Segment:
        return self.seek(self._index + delta)


@dataclass(frozen=True)
class BenchReport:
    """Timing of one synchronous full load; no assertions, just measurement."""

    files: int
    total_s: float
    s_per_file: float
    per_file: tuple[tuple[int, str, float], ...] = ()


class HistoryLoader:
    """Bulk-loads archive ranges off the request-serving path.

    At most one load may be in flight; progress is observable through
    the returned LoadJob. A corrupt file anywhere in the range fails the
    whole load (no silent holes in a replay). `per_file_latency_s`
    injects artificial per-file delay so tests and benches can simulate
    fetching segments over a network or VPN instead of local disk.
    """

    def __init__(self, archive: HistoryArchive, per_file_latency_s: float = 0.0) -> None:
        self.archive = archive
        self.per_file_latency_s = per_file_latency_s
        self._lock = threading.Lock()
        self._current: LoadJob | None = None

    def begin_load(self, from_ts: int, to_ts: int) -> LoadJob:
        """Start a background load; returns immediately with the job handle."""
        with self._lock:
            if self._current is not None and self._current.status().state is LoadState.LOADING:
                raise LoadBusyError("a history load is already in flight")
            job = LoadJob(self, started_at=int(time.time()))
            self._current = job
        try:
            entries = list_segments(self.archive, from_ts, to_ts)
        except (ArchiveError, ValidationError) as exc:
            job._set(LoadStatus(LoadState.FAILED, reason=str(exc)))
            return job
        job._set(LoadStatus(LoadState.LOADING, loaded=0, total=len(entries)))
        worker = threading.Thread(
            target=self._run, args=(job, entries), name="mandm-history-load", daemon=True
        )
        worker.start()
        return job

    def _run(self, job: LoadJob, entries: list[tuple[int, str]]) -> None:
        segments: list[Segment] = []
        total = len(entries)
        for ts, name in entries:
            try:
                segments.append(self._read_one(name))
            except (ArchiveError, SegmentFormatError) as exc:
                job._set(LoadStatus(LoadState.FAILED, loaded=len(segments),
                                    total=total, reason=f"{name}: {exc}"))
                return
            job._set(LoadStatus(LoadState.LOADING, loaded=len(segments), total=total))
        job._segments = tuple(segments)
        job._set(LoadStatus(LoadState.READY, loaded=total, total=total))

    def _read_one(self, name: str) -> Segment:
        if self.per_file_latency_s > 0:
            time.sleep(self.per_file_latency_s)
        return read_segment_file(self.archive.directory / name)

    def load_status(self, job: LoadJob) -> LoadStatus:
        if job is None or job._loader is not self:
            raise MandmError("stale load handle")
        return job.status()

    def cursor(self, job: LoadJob) -> ReplayCursor:
        status = self.load_status(job)
        if status.state is not LoadState.READY:
            raise MandmError(f"load not ready (state {status.state.value})")
        return ReplayCursor(job._segments)

    def bench_load(self, from_ts: int, to_ts: int) -> BenchReport:
        """Synchronous full load with per-file wall-clock timing."""
        entries = list_segments(self.archive, from_ts, to_ts)
        per_file: list[tuple[int, str, float]] = []
        t0 = time.perf_counter()
        for ts, name in entries:
            f0 = time.perf_counter()
            self._read_one(name)
            per_file.append((ts, name, time.perf_counter() - f0))
        total = time.perf_counter() - t0
        n = len(entries)
        return BenchReport(
            files=n,
            total_s=total if n else 0.0,
            s_per_file=(total / n) if n else 0.0,
            per_file=tuple(per_file),
        )
