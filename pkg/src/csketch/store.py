"""On-disk state: binary graph snapshot, JSON sidecar, and the data store.

Snapshot layout (integers little-endian)::

    magic "CSKG" | version u16
    population u64 | avg_degree u64 | window_slots u64 | epoch u64 | now u64
    direct area   : population * (avg_degree + 1) records of
                    (uid: ceil(log2 N) bits, ref: ceil(log2 qN/2) bits),
                    each field padded to whole bytes; an all-ones ref marks an
                    empty record; the last record of each block instead holds
                    (overflow record count, first overflow record index)
    overflow area : u64 count, then records as above, each user's chain
                    stored contiguously in chain order
    vector pool   : u64 count, then per cell window_slots contact bits plus a
                    deletion flag packed into ceil((n+1)/8) bytes
    vacancy list  : u64 count, then u64 cell indexes

The sidecar (state.json) holds everything else: configuration, the ID
registry recipe, trace state and the infection forest. Both files are
replaced atomically (write to a temp name, then rename).
"""

from __future__ import annotations

import fcntl
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

from csketch.core import ContactVector, TraceConfig, config_from_dict, config_to_dict
from csketch.forest import InfectionForest
from csketch.graph import NO_REF, ContactGraph
from csketch.ids import IdRegistry
from csketch.processor import ProcessError, ProcessStats, process
from csketch.tracer import TraceResult, trace_contacts
from csketch.wire import Header, WireError, iter_records

MAGIC = b"CSKG"
VERSION = 1
SNAPSHOT_NAME = "graph.cskg"
SIDECAR_NAME = "state.json"
LOCK_NAME = "lock"

COVID_REFERENCE = {"population": 10**7, "avg_degree": 64, "window_slots": 1344}


class StoreError(Exception):
    """Data-level failure: missing/corrupt store, lock conflicts, bad input."""


def _field_bytes(max_value: int) -> int:
    bits = max(1, math.ceil(math.log2(max_value))) if max_value > 1 else 1
    return (bits + 7) // 8


def _widths(population: int, avg_degree: int) -> tuple[int, int]:
    uid_bytes = _field_bytes(population)
    ref_bytes = _field_bytes(max(avg_degree * population / 2, 2))
    return uid_bytes, ref_bytes


# -- snapshot codec -----------------------------------------------------------


def encode_snapshot(graph: ContactGraph, epoch: int) -> bytes:
    config = graph.config
    n_users = config.population
    q = config.avg_degree
    n_slots = config.window_slots
    uid_bytes, ref_bytes = _widths(n_users, q)
    ref_sentinel = (1 << (8 * ref_bytes)) - 1
    uid_max = (1 << (8 * uid_bytes)) - 1
    if len(graph._cells) >= ref_sentinel:
        raise StoreError("vector pool too large for the snapshot ref width")

    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", VERSION)
    out += struct.pack("<5Q", n_users, q, n_slots, epoch, graph.now)

    # Overflow chains are renumbered contiguously per user on the way out.
    overflow: list[tuple[int, int]] = []
    links: list[tuple[int, int]] = []  # (count, start) per user
    for user in range(n_users):
        head = graph._ref[user * (q + 1) + q]
        start = len(overflow)
        k = head
        while k != NO_REF:
            overflow.append((graph._ov_uid[k], graph._ov_ref[k]))
            k = graph._ov_next[k]
        count = len(overflow) - start
        if count > uid_max:
            raise StoreError(f"overflow chain of user {user} too long for the snapshot uid width")
        links.append((count, start if count else ref_sentinel))
    if len(overflow) >= ref_sentinel:
        raise StoreError("overflow area too large for the snapshot ref width")

    def put_record(uid: int, ref: int) -> None:
        out.extend(uid.to_bytes(uid_bytes, "little"))
        out.extend(ref.to_bytes(ref_bytes, "little"))

    for user in range(n_users):
        base = user * (q + 1)
        for i in range(base, base + q):
            if graph._ref[i] == NO_REF:
                put_record(0, ref_sentinel)
            else:
                put_record(graph._uid[i], graph._ref[i])
        put_record(*links[user])

    out += struct.pack("<Q", len(overflow))
    for uid, ref in overflow:
        put_record(uid, ref)

    cell_bytes = (n_slots + 1 + 7) // 8
    out += struct.pack("<Q", len(graph._cells))
    now = graph.now
    for cell in graph._cells:
        if cell is None:
            value = 1 << n_slots  # deletion flag
        else:
            value = cell.value(now)
        out.extend(value.to_bytes(cell_bytes, "little"))

    out += struct.pack("<Q", len(graph._vacant))
    for ref in graph._vacant:
        out += struct.pack("<Q", ref)
    return bytes(out)


def decode_snapshot(data: bytes, config: TraceConfig) -> tuple[ContactGraph, int]:
    view = memoryview(data)
    pos = 0

    def take(count: int) -> memoryview:
        nonlocal pos
        if pos + count > len(view):
            raise StoreError("snapshot truncated")
        chunk = view[pos : pos + count]
        pos += count
        return chunk

    if bytes(take(4)) != MAGIC:
        raise StoreError("not a contact graph snapshot (bad magic)")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise StoreError(f"unsupported snapshot version {version}")
    n_users, q, n_slots, epoch, now = struct.unpack("<5Q", take(40))
    if n_users != config.population or q != config.avg_degree or n_slots != config.window_slots:
        raise StoreError(
            "snapshot geometry does not match configuration "
            f"(snapshot {n_users}/{q}/{n_slots}, config {config.population}/"
            f"{config.avg_degree}/{config.window_slots})"
        )

    uid_bytes, ref_bytes = _widths(n_users, q)
    ref_sentinel = (1 << (8 * ref_bytes)) - 1

    def get_record(chunk: memoryview) -> tuple[int, int]:
        return (
            int.from_bytes(chunk[:uid_bytes], "little"),
            int.from_bytes(chunk[uid_bytes:], "little"),
        )

    graph = ContactGraph(config)
    graph.now = now
    record_size = uid_bytes + ref_bytes
    links: list[tuple[int, int]] = []
    for user in range(n_users):
        base = user * (q + 1)
        for i in range(q):
            uid, ref = get_record(take(record_size))
            if ref != ref_sentinel:
                graph._uid[base + i] = uid
                graph._ref[base + i] = ref
        links.append(get_record(take(record_size)))

    (ov_count,) = struct.unpack("<Q", take(8))
    ov_records = [get_record(take(record_size)) for _ in range(ov_count)]
    # Materialize the overflow pool verbatim, then thread per-user chains
    # (each chain was written contiguously in chain order).
    graph._ov_uid = [uid for uid, _ in ov_records]
    graph._ov_ref = [ref for _, ref in ov_records]
    graph._ov_next = [NO_REF] * ov_count
    for user, (count, start) in enumerate(links):
        if count == 0:
            continue
        if start + count > ov_count:
            raise StoreError(f"overflow chain of user {user} runs past the overflow area")
        graph._ref[user * (q + 1) + q] = start
        for k in range(start, start + count - 1):
            graph._ov_next[k] = k + 1

    cell_bytes = (n_slots + 1 + 7) // 8
    (pool,) = struct.unpack("<Q", take(8))
    mask = (1 << n_slots) - 1
    for ref in range(pool):
        value = int.from_bytes(take(cell_bytes), "little")
        deleted = bool(value >> n_slots & 1)
        if deleted:
            graph._cells.append(None)
            graph._ends.append(None)
        else:
            graph._cells.append(ContactVector.from_bits(n_slots, value & mask, last_slot=now))
            graph._ends.append(None)
            graph.edge_count += 1

    (vacant_count,) = struct.unpack("<Q", take(8))
    for _ in range(vacant_count):
        (ref,) = struct.unpack("<Q", take(8))
        if ref >= pool or graph._cells[ref] is not None:
            raise StoreError(f"vacancy list names live or out-of-range cell {ref}")
        graph._vacant.append(ref)
    if pos != len(view):
        raise StoreError(f"{len(view) - pos} trailing bytes after snapshot payload")

    # Endpoints are not stored; recover them from the index side and verify
    # that every live cell is referenced exactly once per endpoint.
    pairs: dict[int, list[int]] = {}
    for user in range(n_users):
        for uid, ref in graph.records_of(user):
            if not 0 <= ref < pool:
                raise StoreError(f"record ({user}, {uid}) references bad cell {ref}")
            pairs.setdefault(ref, []).append(user)
    for ref in range(pool):
        owners = pairs.get(ref, [])
        if graph._cells[ref] is None:
            if owners:
                raise StoreError(f"vacant cell {ref} referenced by {owners}")
            continue
        if len(owners) != 2:
            raise StoreError(f"cell {ref} referenced {len(owners)} times, expected 2")
        graph._ends[ref] = (owners[0], owners[1])
    try:
        graph.check_consistency()
    except ValueError as exc:
        raise StoreError(f"snapshot fails consistency check: {exc}")
    return graph, epoch


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(data)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, path)


# -- ingest reporting ----------------------------------------------------------


@dataclass
class IngestReport:
    streams: int = 0
    samples: int = 0
    gaps: int = 0
    contacts_installed: int = 0
    edges_created: int = 0
    edges_expired: int = 0
    parse_errors: int = 0
    diagnostics: list[str] = field(default_factory=list)

    def absorb(self, stats: ProcessStats) -> None:
        self.streams += 1
        self.samples += stats.samples
        self.gaps += stats.gaps
        self.contacts_installed += stats.contacts_installed
        self.edges_created += stats.edges_created
        self.diagnostics.extend(stats.diagnostics)

    def to_dict(self) -> dict:
        return {
            "streams": self.streams,
            "samples": self.samples,
            "gaps": self.gaps,
            "contactsInstalled": self.contacts_installed,
            "edgesCreated": self.edges_created,
            "edgesExpired": self.edges_expired,
            "parseErrors": self.parse_errors,
            "diagnostics": list(self.diagnostics),
        }


# -- the data store -------------------------------------------------------------


class DataStore:
    """All persistent engine state under one directory, single-writer.

    A POSIX lock file serializes writers; hold the store open for the whole
    command or service lifetime and close() (or use it as a context manager)
    when done.
    """

    def __init__(
        self,
        data_dir: Path,
        config: TraceConfig,
        registry: IdRegistry,
        graph: ContactGraph,
        trace_state: TraceResult,
        forest: InfectionForest,
        sweep_policy: str = "after-ingest",
        lock_handle=None,
    ):
        self.data_dir = Path(data_dir)
        self.config = config
        self.registry = registry
        self.graph = graph
        self.trace_state = trace_state
        self.forest = forest
        self.sweep_policy = sweep_policy
        self._lock_handle = lock_handle

    # -- lifecycle -----------------------------------------------------------

    @staticmethod
    def _acquire_lock(data_dir: Path):
        handle = open(data_dir / LOCK_NAME, "a+")
        try:
            fcntl.flock(handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            handle.close()
            raise StoreError(f"data directory {data_dir} is locked by another writer")
        return handle

    @classmethod
    def initialize(
        cls,
        data_dir: str | Path,
        config: TraceConfig,
        id_mode: str = "deterministic",
        id_seed: int | None = None,
        sweep_policy: str = "after-ingest",
        force: bool = False,
    ) -> "DataStore":
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        snapshot = data_dir / SNAPSHOT_NAME
        if snapshot.exists() and not force:
            raise StoreError(f"{snapshot} already exists (use force to overwrite)")
        if sweep_policy not in ("after-ingest", "manual"):
            raise StoreError(f"unknown sweep policy {sweep_policy!r}")
        lock = cls._acquire_lock(data_dir)
        registry = IdRegistry(config.population, config.ids_per_user, id_mode, id_seed)
        registry.current  # validates mode/seed eagerly
        store = cls(
            data_dir=data_dir,
            config=config,
            registry=registry,
            graph=ContactGraph(config),
            trace_state=TraceResult(),
            forest=InfectionForest(config.population),
            sweep_policy=sweep_policy,
            lock_handle=lock,
        )
        store.save()
        return store

    @classmethod
    def open(cls, data_dir: str | Path) -> "DataStore":
        data_dir = Path(data_dir)
        snapshot_path = data_dir / SNAPSHOT_NAME
        sidecar_path = data_dir / SIDECAR_NAME
        if not snapshot_path.exists() or not sidecar_path.exists():
            raise StoreError(f"no initialized store in {data_dir} (run init first)")
        lock = cls._acquire_lock(data_dir)
        try:
            sidecar = json.loads(sidecar_path.read_text())
            config = config_from_dict(sidecar["config"])
            graph, epoch = decode_snapshot(snapshot_path.read_bytes(), config)
            registry = IdRegistry.from_dict(sidecar["registry"])
            if epoch > registry.current_epoch:
                raise StoreError("snapshot epoch is newer than the ID registry")
            trace_state = TraceResult.from_dict(sidecar.get("trace", {}))
            forest = InfectionForest.from_dict(sidecar.get("forest", {}), config.population)
            return cls(
                data_dir=data_dir,
                config=config,
                registry=registry,
                graph=graph,
                trace_state=trace_state,
                forest=forest,
                sweep_policy=sidecar.get("sweep_policy", "after-ingest"),
                lock_handle=lock,
            )
        except StoreError:
            lock.close()
            raise
        except (ValueError, KeyError) as exc:
            lock.close()
            raise StoreError(f"corrupt store in {data_dir}: {exc}")

    def close(self) -> None:
        if self._lock_handle is not None:
            self._lock_handle.close()
            self._lock_handle = None

    def __enter__(self) -> "DataStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- persistence -----------------------------------------------------------

    def save(self) -> None:
        _atomic_write(
            self.data_dir / SNAPSHOT_NAME,
            encode_snapshot(self.graph, self.registry.current_epoch),
        )
        sidecar = {
            "version": VERSION,
            "config": config_to_dict(self.config),
            "registry": self.registry.to_dict(),
            "sweep_policy": self.sweep_policy,
            "trace": self.trace_state.to_dict(),
            "forest": self.forest.to_dict(),
        }
        _atomic_write(self.data_dir / SIDECAR_NAME, json.dumps(sidecar, indent=1).encode())

    # -- operations --------------------------------------------------------------

    def ingest_stream(self, data: bytes, source: str, report: IngestReport) -> None:
        """Parse and process one wire stream; failures are recorded, not raised."""
        try:
            records = list(iter_records(data))
            header = records[0]
            assert isinstance(header, Header)
            table = self.registry.table(header.epoch)
        except WireError as exc:
            report.parse_errors += 1
            report.diagnostics.append(f"{source}: {exc}")
            return
        except KeyError:
            report.parse_errors += 1
            report.diagnostics.append(f"{source}: stream epoch unknown to the ID registry")
            return
        try:
            stats = process(self.graph, records, table)
        except ProcessError as exc:
            report.parse_errors += 1
            report.diagnostics.append(f"{source}: {exc}")
            return
        report.absorb(stats)

    def ingest(self, payloads: list[tuple[str, bytes]]) -> IngestReport:
        """Process streams in order, sweep if configured, persist atomically."""
        report = IngestReport()
        for source, data in payloads:
            self.ingest_stream(data, source, report)
        if self.sweep_policy == "after-ingest":
            report.edges_expired = self.graph.expire()
        self.save()
        return report

    def ingest_paths(self, paths: list[str | Path]) -> IngestReport:
        payloads = []
        for path in paths:
            path = Path(path)
            try:
                payloads.append((str(path), path.read_bytes()))
            except OSError as exc:
                raise StoreError(f"cannot read stream file {path}: {exc}")
        return self.ingest(payloads)

    def sweep(self) -> int:
        removed = self.graph.expire()
        self.save()
        return removed

    def trace(self, infected: list[int], levels: int) -> dict:
        """Run a trace query, fold results into the forest, persist, report."""
        edges_before = len(self.trace_state.edges)
        trace_contacts(self.graph, infected, self.trace_state, levels)
        new_edges = self.trace_state.edges[edges_before:]
        self.forest.build(
            new_edges,
            infected=self.trace_state.infected_users,
            suspected=[e.user for e in self.trace_state.entries.values()],
        )
        self.save()
        return {
            "infected": self.trace_state.infected_users,
            "entries": [
                {"user": e.user, "level": e.level, "via": e.via}
                for e in self.trace_state.entries_by_level()
            ],
            "edges": [list(edge) for edge in self.trace_state.edges],
            "new_edges": [list(edge) for edge in new_edges],
        }

    def clusters(self) -> list[dict]:
        return [
            {
                "root": c.root,
                "size": c.size,
                "members": c.members,
                "infected": c.infected,
                "suspected": c.suspected,
                "edges": [list(e) for e in c.edges],
            }
            for c in self.forest.clusters()
        ]

    def stats(self) -> dict:
        from csketch.graph import space_estimate, space_estimate_gb

        config = self.config
        return {
            "population": config.population,
            "avg_degree": config.avg_degree,
            "window_slots": config.window_slots,
            "now_slot": self.graph.now,
            "edges": self.graph.edge_count,
            "pool_cells": len(self.graph._cells),
            "vacant_cells": len(self.graph._vacant),
            "infected": len(self.trace_state.infected),
            "suspected": len(self.trace_state.entries),
            "epoch": self.registry.current_epoch,
            "space_estimate_bits": space_estimate(
                config.population, config.avg_degree, config.window_slots
            ),
            "space_estimate_gb": space_estimate_gb(
                config.population, config.avg_degree, config.window_slots
            ),
            "covid_reference_gb": space_estimate_gb(**COVID_REFERENCE),
        }
