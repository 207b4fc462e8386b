"""Dual-store memory persistence: vector index, metadata table, LRU cache, write buffer.

Reads hit an LRU cache of full records; writes accumulate in an ordered buffer
that batch-upserts into the (exact, brute-force cosine) vector index and the
metadata table. Reads from the index therefore lag unflushed writes, which is
the modeled behavior of a batched remote store; the buffer is consulted on
cache misses so the store itself never serves stale data.
"""

from __future__ import annotations

import csv
import logging
from collections import OrderedDict
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import MemoryRecord, ProtocolConfig, make_embedding
from .relevance import DimensionMismatch

logger = logging.getLogger(__name__)

__all__ = [
    "EmptyIndex",
    "VectorIndex",
    "MetadataTable",
    "WriteBuffer",
    "MemoryStore",
]


class EmptyIndex(LookupError):
    """Similarity query against an index with no entries."""


class VectorIndex:
    """Exact cosine-similarity index over fixed-dimension embeddings.

    Brute force by design: the corpus is a few thousand vectors and exactness
    keeps ranking verifiable against a by-hand oracle.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self._entries: dict[str, np.ndarray] = {}
        self.upsert_calls = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, memory_id: str) -> bool:
        return memory_id in self._entries

    def ids(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def upsert(self, items: Sequence[tuple[str, np.ndarray]]) -> int:
        """Insert or replace a batch; one call counts once toward the write budget."""
        if not items:
            return 0
        staged = []
        for memory_id, embedding in items:
            vec = make_embedding(embedding)
            if vec.shape[0] != self.dimension:
                raise DimensionMismatch(
                    f"embedding length {vec.shape[0]} != index dimension {self.dimension}"
                )
            staged.append((memory_id, vec))
        self.upsert_calls += 1
        for memory_id, vec in staged:
            self._entries[memory_id] = vec
        return len(staged)

    def fetch(self, memory_id: str) -> np.ndarray | None:
        return self._entries.get(memory_id)

    def delete(self, memory_ids: Iterable[str]) -> int:
        removed = 0
        for memory_id in memory_ids:
            if self._entries.pop(memory_id, None) is not None:
                removed += 1
        return removed

    def query(self, embedding: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Top-k (id, cosine) pairs, descending score, ties broken by id."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if not self._entries:
            raise EmptyIndex("similarity query against an empty index")
        probe = make_embedding(embedding)
        if probe.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"query length {probe.shape[0]} != index dimension {self.dimension}"
            )
        probe_norm = float(np.linalg.norm(probe))
        scored: list[tuple[str, float]] = []
        for memory_id, vec in self._entries.items():
            denom = probe_norm * float(np.linalg.norm(vec))
            score = float(np.dot(probe, vec) / denom) if denom > 0.0 else 0.0
            scored.append((memory_id, score))
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored[:k]


class MetadataTable:
    """Relational-style rows: id -> (agent_id, timestamp, salience)."""

    def __init__(self) -> None:
        self.rows: dict[str, tuple[str, float, float]] = {}

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, memory_id: str) -> bool:
        return memory_id in self.rows

    def update(self, rows: dict[str, tuple[str, float, float]]) -> None:
        self.rows.update(rows)

    def get(self, memory_id: str) -> tuple[str, float, float] | None:
        return self.rows.get(memory_id)

    def delete(self, memory_ids: Iterable[str]) -> int:
        removed = 0
        for memory_id in memory_ids:
            if self.rows.pop(memory_id, None) is not None:
                removed += 1
        return removed

    def write_snapshot(self, path) -> int:
        """Rewrite the CSV snapshot (RFC 4180, CRLF, minimal quoting)."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["id", "agent_id", "timestamp", "salience"])
            for memory_id, (agent_id, timestamp, salience) in self.rows.items():
                writer.writerow([memory_id, agent_id, f"{timestamp:.6f}", repr(salience)])
        return len(self.rows)


class WriteBuffer:
    """Ordered pending writes; later writes to the same id overwrite in place."""

    def __init__(self, last_flush: float = 0.0):
        self.pending: dict[str, MemoryRecord] = {}
        self.last_flush = last_flush

    def __len__(self) -> int:
        return len(self.pending)

    def append(self, record: MemoryRecord) -> None:
        self.pending[record.id] = record

    def get(self, memory_id: str) -> MemoryRecord | None:
        return self.pending.get(memory_id)

    def discard(self, memory_id: str) -> bool:
        return self.pending.pop(memory_id, None) is not None

    def take_all(self) -> list[MemoryRecord]:
        records = list(self.pending.values())
        self.pending.clear()
        return records


class MemoryStore:
    """Single-owner composite store; callers serialize through it.

    Read path: cache hit refreshes t_last (the record was just accessed) and
    re-buffers the touched record; a miss reconstructs from buffer or
    index+table without refreshing t_last. Every buffered write runs the
    flush check: flush when the batch is full or the interval since the last
    flush has elapsed.
    """

    def __init__(
        self,
        dimension: int,
        *,
        cache_capacity: int = 100,
        batch_size: int = 50,
        batch_interval_s: float = 10.0,
        snapshot_path=None,
        start_time: float = 0.0,
    ):
        if cache_capacity < 1:
            raise ValueError(f"cache_capacity must be >= 1, got {cache_capacity}")
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if batch_interval_s <= 0.0:
            raise ValueError(f"batch_interval_s must be > 0, got {batch_interval_s}")
        self.index = VectorIndex(dimension)
        self.table = MetadataTable()
        self.buffer = WriteBuffer(last_flush=start_time)
        self.cache_capacity = cache_capacity
        self.batch_size = batch_size
        self.batch_interval_s = batch_interval_s
        self.snapshot_path = snapshot_path
        self._cache: OrderedDict[str, MemoryRecord] = OrderedDict()
        self._insertion: dict[str, None] = {}
        self.hits = 0
        self.misses = 0
        self.size_flushes = 0
        self.time_flushes = 0
        self.forced_flushes = 0
        self.unknown_deletes = 0

    @classmethod
    def from_config(cls, cfg: ProtocolConfig, dimension: int, **kwargs) -> "MemoryStore":
        return cls(
            dimension,
            cache_capacity=cfg.cache_capacity,
            batch_size=cfg.batch_size,
            batch_interval_s=cfg.batch_interval_s,
            **kwargs,
        )

    # --- cache internals ---

    def _cache_set(self, record: MemoryRecord) -> None:
        self._cache[record.id] = record
        self._cache.move_to_end(record.id)
        while len(self._cache) > self.cache_capacity:
            self._cache.popitem(last=False)

    # --- read/write operations ---

    def get(self, memory_id: str, now: float) -> MemoryRecord | None:
        """Fetch one record; absence is a value, not an error."""
        cached = self._cache.get(memory_id)
        if cached is not None:
            self.hits += 1
            touched = cached.touched(now)
            self._cache_set(touched)
            self.buffer.append(touched)
            self.maybe_flush(now)
            return touched
        record = self.buffer.get(memory_id)
        if record is None:
            embedding = self.index.fetch(memory_id)
            row = self.table.get(memory_id)
            if embedding is None or row is None:
                self.misses += 1
                logger.error("memory id not found: %s", memory_id)
                return None
            agent_id, timestamp, salience = row
            record = MemoryRecord(
                id=memory_id,
                embedding=embedding,
                agent_id=agent_id,
                t_last=timestamp,
                salience=salience,
            )
        self.misses += 1
        self._cache_set(record)
        self.buffer.append(record)
        self.maybe_flush(now)
        return record

    def put(self, record: MemoryRecord, now: float) -> None:
        if record.embedding.shape[0] != self.index.dimension:
            raise DimensionMismatch(
                f"embedding length {record.embedding.shape[0]} != store dimension {self.index.dimension}"
            )
        self._insertion[record.id] = None
        self._cache_set(record)
        self.buffer.append(record)
        self.maybe_flush(now)

    def maybe_flush(self, now: float) -> int:
        """Flush when the batch is full or the flush interval has elapsed."""
        if not self.buffer.pending:
            return 0
        size_hit = len(self.buffer.pending) >= self.batch_size
        time_hit = (now - self.buffer.last_flush) > self.batch_interval_s
        if not (size_hit or time_hit):
            return 0
        if size_hit:
            self.size_flushes += 1
        else:
            self.time_flushes += 1
        return self._flush(now)

    def _flush(self, now: float) -> int:
        records = self.buffer.take_all()
        self.index.upsert([(r.id, r.embedding) for r in records])
        self.table.update({r.id: (r.agent_id, r.t_last, r.salience) for r in records})
        self.buffer.last_flush = now
        return len(records)

    def commit(self, now: float) -> int:
        """Force any pending writes down and rewrite the snapshot if configured."""
        flushed = 0
        if self.buffer.pending:
            self.forced_flushes += 1
            flushed = self._flush(now)
        else:
            self.buffer.last_flush = now
        if self.snapshot_path is not None:
            self.table.write_snapshot(self.snapshot_path)
        return flushed

    def delete(self, memory_ids: Iterable[str]) -> int:
        """Purge ids from cache, buffer, index, and table; unknown ids are counted, not errors.

        Purging the buffer prevents a pending write from resurrecting a
        deleted record at the next flush.
        """
        removed = 0
        for memory_id in memory_ids:
            present = self._cache.pop(memory_id, None) is not None
            present = self.buffer.discard(memory_id) or present
            present = bool(self.index.delete([memory_id])) or present
            present = bool(self.table.delete([memory_id])) or present
            if present:
                removed += 1
                self._insertion.pop(memory_id, None)
            else:
                self.unknown_deletes += 1
        return removed

    def query_similar(self, embedding: np.ndarray, k: int) -> list[str]:
        """Top-k ids from the vector index; unflushed writes are not yet visible."""
        return [memory_id for memory_id, _ in self.index.query(embedding, k)]

    # --- bulk views (no cache accounting) ---

    def peek(self, memory_id: str) -> MemoryRecord | None:
        """Read without touching counters, t_last, or cache order."""
        record = self.buffer.get(memory_id)
        if record is not None:
            return record
        record = self._cache.get(memory_id)
        if record is not None:
            return record
        embedding = self.index.fetch(memory_id)
        row = self.table.get(memory_id)
        if embedding is None or row is None:
            return None
        agent_id, timestamp, salience = row
        return MemoryRecord(
            id=memory_id,
            embedding=embedding,
            agent_id=agent_id,
            t_last=timestamp,
            salience=salience,
        )

    def scan_t_last(self) -> Iterator[tuple[str, float]]:
        """Yield (id, freshest t_last) per live id without rebuilding records.

        The buffer always holds the newest timestamp for any id it contains;
        everything else is authoritative in the table.
        """
        for memory_id in self._insertion:
            buffered = self.buffer.get(memory_id)
            if buffered is not None:
                yield memory_id, buffered.t_last
                continue
            row = self.table.get(memory_id)
            if row is not None:
                yield memory_id, row[1]
                continue
            cached = self._cache.get(memory_id)
            if cached is not None:
                yield memory_id, cached.t_last

    def records_snapshot(self) -> list[MemoryRecord]:
        """Materialize every live record through the freshest-first overlay."""
        return [record for record in map(self.peek, self._insertion) if record is not None]

    def ids(self) -> tuple[str, ...]:
        return tuple(self._insertion)

    def count(self) -> int:
        return len(self._insertion)

    def cache_len(self) -> int:
        return len(self._cache)
