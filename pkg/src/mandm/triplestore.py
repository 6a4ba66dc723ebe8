"""Embedded sparse associative-array store.

Every ingested record lands here as a (row, col, value) triple of byte
strings, queryable by row (primary index) or by column (transpose
index) without full scans, plus bytewise row-range scans for
time-window analysis. Rows for telemetry use sortable keys of the form
``<entity>|<id>|<iso8601-basic-ts>`` so a time interval is a row range.

Storage is a single append-only write-ahead log; both in-memory indexes
are rebuilt by replaying it on open. A torn tail record (from a crash
mid-write) is truncated during recovery, so the store always reopens at
the last acknowledged put. Duplicate (row, col) puts replace the value,
last write wins.

On-disk format (bit-exact so other implementations can interoperate):

    header   16 bytes: magic "MNMT", u32 LE format version, 8 reserved
    record   [u32 row_len][row][u32 col_len][col][u32 val_len][value]
             lengths little-endian, repeated to EOF

Concurrency: one writer, any number of readers. All index access is
serialized by a lock, so a reader never observes a put applied to the
primary index but not yet to the transpose.
"""

from __future__ import annotations

import bisect
import os
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import StoreError, ValidationError

MAGIC = b"MNMT"
FORMAT_VERSION = 1
_HEADER = MAGIC + struct.pack("<I", FORMAT_VERSION) + b"\x00" * 8
_LEN = struct.Struct("<I")


@dataclass(frozen=True, order=True)
class Triple:
    row: bytes
    col: bytes
    value: bytes


@dataclass(frozen=True)
class StoreStats:
    triple_count: int
    bytes_on_disk: int


def _as_bytes(v: bytes | str) -> bytes:
    return v.encode("utf-8") if isinstance(v, str) else bytes(v)


def telemetry_row_key(entity: str, entity_id: str, ts: int) -> bytes:
    """Sortable row key: `<entity>|<id>|<iso8601-basic-ts>` (UTC)."""
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime(ts))
    return f"{entity}|{entity_id}|{stamp}".encode()


class TripleStore:
    """Single-file triple store; open with `TripleStore(path)`, close when done."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._rows: dict[bytes, dict[bytes, bytes]] = {}
        self._cols: dict[bytes, dict[bytes, bytes]] = {}
        self._count = 0
        self._sorted_rows: list[bytes] | None = None
        self._open()

    def _open(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        existing = self.path.exists()
        self._f = open(self.path, "a+b")
        if not existing or os.fstat(self._f.fileno()).st_size == 0:
            self._f.write(_HEADER)
            self._f.flush()
            self._bytes = len(_HEADER)
            return
        self._replay()

    def _replay(self) -> None:
        """Rebuild indexes from the log; truncate any torn tail record."""
        self._f.seek(0)
        header = self._f.read(16)
        if len(header) < 16 or header[:4] != MAGIC:
            raise StoreError(f"{self.path}: bad store header magic")
        version = _LEN.unpack(header[4:8])[0]
        if version != FORMAT_VERSION:
            raise StoreError(f"{self.path}: unsupported format version {version}")
        good = 16
        while True:
            rec = self._read_record()
            if rec is None:
                break
            row, col, value, end = rec
            self._index_put(row, col, value)
            good = end
        size = os.fstat(self._f.fileno()).st_size
        if size != good:
            self._f.truncate(good)
            self._f.flush()
        self._f.seek(0, os.SEEK_END)
        self._bytes = good

    def _read_record(self) -> tuple[bytes, bytes, bytes, int] | None:
        parts = []
        for _ in range(3):
            raw = self._f.read(4)
            if len(raw) < 4:
                return None
            n = _LEN.unpack(raw)[0]
            data = self._f.read(n)
            if len(data) < n:
                return None
            parts.append(data)
        return parts[0], parts[1], parts[2], self._f.tell()

    def _index_put(self, row: bytes, col: bytes, value: bytes) -> None:
        row_map = self._rows.get(row)
        if row_map is None:
            row_map = self._rows[row] = {}
            self._sorted_rows = None
        if col not in row_map:
            self._count += 1
        row_map[col] = value
        col_map = self._cols.get(col)
        if col_map is None:
            col_map = self._cols[col] = {}
        col_map[row] = value

    def put(self, row: bytes | str, col: bytes | str, value: bytes | str) -> None:
        """Append to the log, then make the triple visible in both indexes.

        The write is flushed to the OS before the indexes change and
        before this returns, so every acknowledged put survives process
        death and is replayed on the next open.
        """
        row_b, col_b, val_b = _as_bytes(row), _as_bytes(col), _as_bytes(value)
        if not row_b:
            raise ValidationError("triple row must be nonempty")
        if not col_b:
            raise ValidationError("triple col must be nonempty")
        record = b"".join((
            _LEN.pack(len(row_b)), row_b,
            _LEN.pack(len(col_b)), col_b,
            _LEN.pack(len(val_b)), val_b,
        ))
        with self._lock:
            try:
                self._f.write(record)
                self._f.flush()
            except OSError as exc:
                raise StoreError(f"{self.path}: write failed: {exc}") from exc
            self._bytes += len(record)
            self._index_put(row_b, col_b, val_b)

    def get_row(self, row: bytes | str) -> list[tuple[bytes, bytes]]:
        """All (col, value) for the exact row, sorted by col bytewise."""
        row_b = _as_bytes(row)
        with self._lock:
            row_map = self._rows.get(row_b)
            if not row_map:
                return []
            return sorted(row_map.items())

    def get_col(self, col: bytes | str) -> list[tuple[bytes, bytes]]:
        """All (row, value) for the exact col, from the transpose index."""
        col_b = _as_bytes(col)
        with self._lock:
            col_map = self._cols.get(col_b)
            if not col_map:
                return []
            return sorted(col_map.items())

    def scan_row_range(self, start_row: bytes | str, end_row: bytes | str) -> Iterator[Triple]:
        """All triples with start_row <= row < end_row, ordered by (row, col)."""
        start_b, end_b = _as_bytes(start_row), _as_bytes(end_row)
        if start_b > end_b:
            raise ValidationError("inverted row range")
        with self._lock:
            if self._sorted_rows is None:
                self._sorted_rows = sorted(self._rows)
            lo = bisect.bisect_left(self._sorted_rows, start_b)
            hi = bisect.bisect_left(self._sorted_rows, end_b)
            out = []
            for row in self._sorted_rows[lo:hi]:
                for col, value in sorted(self._rows[row].items()):
                    out.append(Triple(row, col, value))
        return iter(out)

    def stats(self) -> StoreStats:
        with self._lock:
            return StoreStats(triple_count=self._count, bytes_on_disk=self._bytes)

    def close(self) -> None:
        self._f.close()

    def __enter__(self) -> "TripleStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
