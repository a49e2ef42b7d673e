"""Multilevel contact tracing over the graph sketch.

Direct contacts of an infected user are every neighbor with a live edge
vector. Indirect contacts are filtered by a binary operator on edge vectors:
infection can cross a two-hop path only if some contact on the second edge
happens at or after some contact on the first. With slot index 0 the most
recent slot, that reads: oldest set slot of the inbound edge >= most recent
set slot of the outbound edge.

The traversal is breadth-first by level. Each discovered user carries the
vector of the edge it was discovered through, and that vector is what the
operator compares against every outgoing edge; the first discovery of a user
wins and later paths to it are ignored.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from csketch.core import ContactVector
from csketch.graph import ContactGraph


class TraceError(ValueError):
    pass


def can_transmit(inbound: ContactVector, outbound: ContactVector, now: int | None = None) -> bool:
    """True when infection may flow across the two-hop path inbound -> outbound.

    Both vectors must be nonzero at ``now`` (defaults to the later of the two
    vectors' own update slots). Staged evaluation: a value comparison settles
    most pairs, both-oldest-slots-set settles the rest cheaply, and only then
    are the slot indexes compared.
    """
    if now is None:
        candidates = [s for s in (inbound.last_slot, outbound.last_slot) if s is not None]
        now = max(candidates) if candidates else 0
    v1 = inbound.value(now)
    v2 = outbound.value(now)
    if not v1 or not v2:
        raise TraceError("transmission test needs two nonzero contact vectors")
    if v1 >= v2:
        return True
    top = 1 << (inbound.slots - 1)
    if v1 & top and v2 & top:
        return True
    oldest_in = v1.bit_length() - 1
    newest_out = ((v2 & -v2).bit_length()) - 1
    return oldest_in >= newest_out


@dataclass(frozen=True)
class TraceEntry:
    """One suspected user: contact level (1 = direct) and discovery predecessor."""

    user: int
    level: int
    via: int


@dataclass
class TraceStats:
    records_scanned: int = 0
    operator_calls: int = 0


class TraceResult:
    """Accumulated tracing state: infected set, suspected entries, pathway edges.

    ``entries`` maps user -> TraceEntry in discovery order; ``edges`` is the
    directed who-infected-whom list, append-only across trace calls.
    """

    def __init__(self):
        self.infected: dict[int, None] = {}
        self.entries: dict[int, TraceEntry] = {}
        self.edges: list[tuple[int, int]] = []
        self.stats = TraceStats()

    @property
    def infected_users(self) -> list[int]:
        return list(self.infected)

    def entries_by_level(self) -> list[TraceEntry]:
        return sorted(self.entries.values(), key=lambda e: e.level)

    def to_dict(self) -> dict:
        return {
            "infected": list(self.infected),
            "entries": [[e.user, e.level, e.via] for e in self.entries.values()],
            "edges": [list(edge) for edge in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TraceResult":
        result = cls()
        for user in data.get("infected", []):
            result.infected[user] = None
        for user, level, via in data.get("entries", []):
            result.entries[user] = TraceEntry(user=user, level=level, via=via)
        result.edges = [tuple(edge) for edge in data.get("edges", [])]
        return result


def trace_contacts(
    graph: ContactGraph,
    new_infected: list[int],
    result: TraceResult | None = None,
    max_level: int = 1,
) -> TraceResult:
    """Trace direct and indirect contacts of newly infected users.

    Updates ``result`` in place (a fresh one is created if omitted): the new
    users join the infected set, every admitted suspect gets a level and a
    discovery edge, and users already infected or already suspected are never
    admitted again. Infected users themselves never appear as suspects; if a
    previous suspect is reported infected its suspect entry is dropped.
    """
    if max_level < 1:
        raise TraceError(f"trace depth must be >= 1, got {max_level}")
    result = result if result is not None else TraceResult()
    stats = TraceStats()
    result.stats = stats
    population = graph.config.population
    for user in new_infected:
        if not 0 <= user < population:
            raise TraceError(f"unknown user {user} in infected list")
    fresh: list[int] = []
    for user in new_infected:
        if user in result.infected:
            continue
        result.infected[user] = None
        result.entries.pop(user, None)
        fresh.append(user)

    def admit(user: int, level: int, via: int, vector: ContactVector) -> None:
        result.entries[user] = TraceEntry(user=user, level=level, via=via)
        result.edges.append((via, user))
        queue.append((user, vector))

    queue: deque[tuple[int, ContactVector]] = deque()
    for user in fresh:
        for other, ref in graph.neighbors(user):
            stats.records_scanned += 1
            if other in result.infected or other in result.entries:
                continue
            admit(other, 1, user, graph.vector(ref))
    level = 2
    now = graph.now
    while level <= max_level and queue:
        frontier, queue = queue, deque()
        for user, inbound in frontier:
            for other, ref in graph.neighbors(user):
                stats.records_scanned += 1
                if other in result.infected or other in result.entries:
                    continue
                stats.operator_calls += 1
                if can_transmit(inbound, graph.vector(ref), now):
                    admit(other, level, user, graph.vector(ref))
        level += 1
    return result
