"""Stream processing: time sync, the watch window, and close-contact detection.

Device time is synchronized against the system start time to position a slot
cursor: an absolute slot counter plus the sampling-interval offset inside the
slot. Each sample record consumes one interval; a gap record consumes several
silently. A receiver seen in ``samples_per_slot`` consecutive intervals of a
sender's stream is a close contact and is installed into the graph at the
interval where the run completes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable

from csketch.core import TraceConfig, format_timestamp, minutes_between
from csketch.graph import ContactGraph
from csketch.ids import UnknownVirtualIdError, VirtualIdTable
from csketch.wire import End, Gap, Header, Record, Sample


class ProcessError(ValueError):
    pass


@dataclass(frozen=True)
class SlotCursor:
    """Position in a device timeline: absolute slot plus offset within it."""

    abs_slot: int
    sample_offset: int

    def interval_index(self, samples_per_slot: int) -> int:
        return self.abs_slot * samples_per_slot + self.sample_offset

    def array_index(self, window_slots: int) -> int:
        return self.abs_slot % window_slots


def sync_time(start: datetime, device_time: datetime, config: TraceConfig) -> SlotCursor:
    """Map a device timestamp onto the system slot grid.

    The elapsed whole minutes since deployment are divided into sampling
    intervals; the cursor is the interval's slot and in-slot offset.
    """
    elapsed = minutes_between(device_time, start)
    if elapsed < 0:
        raise ProcessError(
            f"device time {format_timestamp(device_time)} precedes deployment "
            f"{format_timestamp(start)}"
        )
    interval = elapsed // config.sample_minutes
    return SlotCursor(
        abs_slot=interval // config.samples_per_slot,
        sample_offset=interval % config.samples_per_slot,
    )


def apply_gap(cursor: SlotCursor, skipped: int, config: TraceConfig) -> SlotCursor:
    """Advance the cursor across ``skipped`` silent sampling intervals."""
    if skipped < 1:
        raise ProcessError(f"gap must skip at least one interval, got {skipped}")
    total = cursor.sample_offset + skipped
    rho = config.samples_per_slot
    return SlotCursor(abs_slot=cursor.abs_slot + total // rho, sample_offset=total % rho)


def advance_interval(cursor: SlotCursor, config: TraceConfig) -> SlotCursor:
    return apply_gap(cursor, 1, config)


class WatchWindow:
    """FIFO over the latest sampling intervals with per-user run counters.

    Frames keep the receiver sets of the most recent intervals for
    inspection; detection itself rides on the consecutive-appearance
    counters, which reset whenever a user misses an interval or a gap breaks
    every run. A counter reaching the window size signals one close contact
    and restarts that user's count, so a run of ``k * size`` intervals yields
    ``k`` contacts.
    """

    def __init__(self, size: int):
        self.size = size
        self.frames: deque[frozenset[int]] = deque(maxlen=size)
        self.counts: dict[int, int] = {}

    def observe(self, present: set[int]) -> list[int]:
        """Advance one interval; returns users whose run just completed,
        in ascending user order so downstream effects are deterministic."""
        self.frames.append(frozenset(present))
        completed = []
        counts = self.counts
        fresh: dict[int, int] = {}
        for user in present:
            run = counts.get(user, 0) + 1
            if run == self.size:
                completed.append(user)
                fresh[user] = 0
            else:
                fresh[user] = run
        self.counts = fresh
        completed.sort()
        return completed

    def break_all(self) -> None:
        self.frames.clear()
        self.counts.clear()


@dataclass
class ProcessStats:
    """Per-stream ingest accounting."""

    sender: int | None = None
    samples: int = 0
    gaps: int = 0
    skipped_intervals: int = 0
    contacts_installed: int = 0
    edges_created: int = 0
    diagnostics: list[str] = field(default_factory=list)


def process(
    graph: ContactGraph,
    records: Iterable[Record],
    table: VirtualIdTable,
    stats: ProcessStats | None = None,
) -> ProcessStats:
    """Feed one parsed stream into the graph.

    Samples whose virtual IDs cannot be resolved are dropped with a
    diagnostic; the interval still elapses, so unresolved samples break runs
    exactly like silence. Returns the per-stream statistics.
    """
    stats = stats or ProcessStats()
    config = graph.config
    cursor: SlotCursor | None = None
    start_slot = 0
    sender = -1
    window = WatchWindow(config.samples_per_slot)
    edges_before = graph.edge_count
    for record in records:
        if isinstance(record, Header):
            if cursor is not None:
                raise ProcessError("second header in one stream")
            if not 0 <= record.uid < config.population:
                raise ProcessError(f"unknown sender uid {record.uid}")
            sender = record.uid
            stats.sender = sender
            cursor = sync_time(config.start_time, record.start_time, config)
            start_slot = cursor.abs_slot
            continue
        if cursor is None:
            raise ProcessError("stream body before header")
        if isinstance(record, Sample):
            present = _resolve_sample(record, table, sender, cursor, stats)
            for other in window.observe(present):
                graph.install(sender, other, cursor.abs_slot, cursor.sample_offset)
                stats.contacts_installed += 1
            cursor = advance_interval(cursor, config)
            stats.samples += 1
        elif isinstance(record, Gap):
            window.break_all()
            cursor = apply_gap(cursor, record.count, config)
            stats.gaps += 1
            stats.skipped_intervals += record.count
        elif isinstance(record, End):
            break
        else:
            raise ProcessError(f"unexpected record {record!r}")
    if cursor is None:
        raise ProcessError("empty stream")
    # The clock has reached the last consumed interval (one before the
    # cursor); idle streams still vouch for their header slot.
    last_interval = cursor.interval_index(config.samples_per_slot) - 1
    seen_slot = max(start_slot, last_interval // config.samples_per_slot if last_interval >= 0 else 0)
    if seen_slot > graph.now:
        graph.now = seen_slot
    stats.edges_created = graph.edge_count - edges_before
    return stats


def _resolve_sample(
    record: Sample,
    table: VirtualIdTable,
    sender: int,
    cursor: SlotCursor,
    stats: ProcessStats,
) -> set[int]:
    where = f"slot {cursor.abs_slot} offset {cursor.sample_offset}"
    try:
        table.resolve(record.tran_vid)
    except UnknownVirtualIdError:
        stats.diagnostics.append(f"unresolved transmitter vid {record.tran_vid} at {where}; sample dropped")
        return set()
    present: set[int] = set()
    for vid in record.rec_vids:
        try:
            user = table.resolve(vid)
        except UnknownVirtualIdError:
            stats.diagnostics.append(f"unresolved receiver vid {vid} at {where}; sample dropped")
            return set()
        if user != sender:
            present.add(user)
    return present
