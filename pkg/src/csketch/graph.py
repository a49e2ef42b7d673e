"""Contact graph sketch: indexed adjacency store plus contact-vector pool.

The index store gives every user a fixed block of ``avg_degree + 1`` records;
the first ``avg_degree`` hold (neighbor uid, vector ref) pairs as a packed
prefix, the extra record links into a shared overflow pool for users whose
degree exceeds the average. Every edge owns exactly one cell in the vector
pool, referenced from both endpoints' records. Expired cells are recycled
through a vacancy list.
"""

from __future__ import annotations

import math
from typing import Iterator

from csketch.core import ContactVector, TraceConfig

NO_REF = -1


class GraphError(ValueError):
    pass


class ContactGraph:
    """Sliding-window close-contact graph over a fixed population."""

    def __init__(self, config: TraceConfig):
        self.config = config
        n_users = config.population
        stride = config.avg_degree + 1
        self._stride = stride
        # Direct area: per user, slots [base, base+q) hold neighbor records as a
        # packed prefix; slot base+q holds only the overflow chain head.
        self._uid = [0] * (n_users * stride)
        self._ref = [NO_REF] * (n_users * stride)
        # Overflow pool: parallel arrays chained per user, with a free list
        # threaded through _ov_next (free entries have uid == NO_REF).
        self._ov_uid: list[int] = []
        self._ov_ref: list[int] = []
        self._ov_next: list[int] = []
        self._ov_free = NO_REF
        # Vector pool and its vacancy list; _ends mirrors each cell's endpoints.
        self._cells: list[ContactVector | None] = []
        self._ends: list[tuple[int, int] | None] = []
        self._vacant: list[int] = []
        self.now = 0
        self.edge_count = 0

    # -- positions ----------------------------------------------------------
    # search() returns positions in a single space: direct-area indexes first,
    # overflow pool indexes offset by the direct-area size.

    @property
    def _direct_size(self) -> int:
        return self.config.population * self._stride

    def _base(self, user: int) -> int:
        if not 0 <= user < self.config.population:
            raise GraphError(f"unknown user {user}")
        return user * self._stride

    def record_at(self, position: int) -> tuple[int, int]:
        """(neighbor uid, vector ref) stored at a position returned by search()."""
        if position < self._direct_size:
            return self._uid[position], self._ref[position]
        k = position - self._direct_size
        return self._ov_uid[k], self._ov_ref[k]

    def search(self, user: int, other: int) -> int | None:
        """Position of ``other``'s record in ``user``'s adjacency, or None."""
        if user == other:
            raise GraphError(f"self edge query for user {user}")
        base = self._base(user)
        self._base(other)
        q = self._stride - 1
        for i in range(base, base + q):
            if self._ref[i] == NO_REF:
                return None
            if self._uid[i] == other:
                return i
        k = self._ref[base + q]
        while k != NO_REF:
            if self._ov_uid[k] == other:
                return self._direct_size + k
            k = self._ov_next[k]
        return None

    # -- edge installation ----------------------------------------------------

    def install(self, user: int, other: int, abs_slot: int, sample_offset: int) -> int:
        """Record a detected close contact; returns the edge's vector ref.

        Creates the edge (one shared vector cell, one record under each
        endpoint) if it does not exist yet, then marks the contact slot.
        """
        pos = self.search(user, other)
        if pos is not None:
            ref = self.record_at(pos)[1]
        else:
            ref = self._alloc_cell(user, other)
            self._add_record(user, other, ref)
            self._add_record(other, user, ref)
        cell = self._cells[ref]
        cell.mark(abs_slot, sample_offset, self.config.samples_per_slot)
        if abs_slot > self.now:
            self.now = abs_slot
        return ref

    def _alloc_cell(self, user: int, other: int) -> int:
        vec = ContactVector(self.config.window_slots)
        if self._vacant:
            ref = self._vacant.pop()
            self._cells[ref] = vec
            self._ends[ref] = (user, other)
        else:
            ref = len(self._cells)
            self._cells.append(vec)
            self._ends.append((user, other))
        self.edge_count += 1
        return ref

    def _add_record(self, user: int, other: int, ref: int) -> None:
        base = self._base(user)
        q = self._stride - 1
        for i in range(base, base + q):
            if self._ref[i] == NO_REF:
                self._uid[i] = other
                self._ref[i] = ref
                return
        # Direct block full: append to the end of the user's overflow chain.
        k = self._alloc_overflow(other, ref)
        head = self._ref[base + q]
        if head == NO_REF:
            self._ref[base + q] = k
            return
        while self._ov_next[head] != NO_REF:
            head = self._ov_next[head]
        self._ov_next[head] = k

    def _alloc_overflow(self, uid: int, ref: int) -> int:
        if self._ov_free != NO_REF:
            k = self._ov_free
            self._ov_free = self._ov_next[k]
            self._ov_uid[k] = uid
            self._ov_ref[k] = ref
            self._ov_next[k] = NO_REF
        else:
            k = len(self._ov_uid)
            self._ov_uid.append(uid)
            self._ov_ref.append(ref)
            self._ov_next.append(NO_REF)
        return k

    # -- traversal ------------------------------------------------------------

    def records_of(self, user: int) -> Iterator[tuple[int, int]]:
        """All (neighbor, ref) records of ``user`` in insertion order."""
        base = self._base(user)
        q = self._stride - 1
        for i in range(base, base + q):
            if self._ref[i] == NO_REF:
                break
            yield self._uid[i], self._ref[i]
        k = self._ref[base + q]
        while k != NO_REF:
            yield self._ov_uid[k], self._ov_ref[k]
            k = self._ov_next[k]

    def neighbors(self, user: int) -> Iterator[tuple[int, int]]:
        """Current neighbors of ``user``; edges whose window is empty are skipped."""
        now = self.now
        for uid, ref in self.records_of(user):
            if self._cells[ref].value(now):
                yield uid, ref

    def vector(self, ref: int) -> ContactVector:
        cell = self._cells[ref]
        if cell is None:
            raise GraphError(f"vector ref {ref} is vacant")
        return cell

    def endpoints(self, ref: int) -> tuple[int, int]:
        ends = self._ends[ref]
        if ends is None:
            raise GraphError(f"vector ref {ref} is vacant")
        return ends

    def live_refs(self) -> Iterator[int]:
        for ref, cell in enumerate(self._cells):
            if cell is not None:
                yield ref

    # -- expiry -----------------------------------------------------------------

    def expire(self, now_abs_slot: int | None = None) -> int:
        """Free every edge whose window is empty at ``now_abs_slot``; returns count."""
        if now_abs_slot is not None:
            if now_abs_slot < self.now:
                raise GraphError(f"cannot sweep at {now_abs_slot}, already at {self.now}")
            self.now = now_abs_slot
        removed = 0
        for ref, cell in enumerate(self._cells):
            if cell is not None and not cell.value(self.now):
                a, b = self._ends[ref]
                self._remove_record(a, b)
                self._remove_record(b, a)
                self._cells[ref] = None
                self._ends[ref] = None
                self._vacant.append(ref)
                self.edge_count -= 1
                removed += 1
        return removed

    def _remove_record(self, user: int, other: int) -> None:
        base = self._base(user)
        q = self._stride - 1
        filled = 0
        hit = -1
        for i in range(base, base + q):
            if self._ref[i] == NO_REF:
                break
            if self._uid[i] == other:
                hit = i
            filled += 1
        if hit >= 0:
            # Compact the prefix, then pull the oldest overflow record (the
            # chain head) back into the direct block to keep it maximal.
            for i in range(hit, base + filled - 1):
                self._uid[i] = self._uid[i + 1]
                self._ref[i] = self._ref[i + 1]
            last = base + filled - 1
            head = self._ref[base + q]
            if head != NO_REF:
                self._uid[last] = self._ov_uid[head]
                self._ref[last] = self._ov_ref[head]
                self._ref[base + q] = self._ov_next[head]
                self._free_overflow(head)
            else:
                self._ref[last] = NO_REF
            return
        prev = -1
        k = self._ref[base + q]
        while k != NO_REF:
            if self._ov_uid[k] == other:
                if prev < 0:
                    self._ref[base + q] = self._ov_next[k]
                else:
                    self._ov_next[prev] = self._ov_next[k]
                self._free_overflow(k)
                return
            prev, k = k, self._ov_next[k]
        raise GraphError(f"no record for ({user}, {other})")

    def _free_overflow(self, k: int) -> None:
        self._ov_uid[k] = NO_REF
        self._ov_ref[k] = NO_REF
        self._ov_next[k] = self._ov_free
        self._ov_free = k

    # -- integrity ---------------------------------------------------------------

    def check_consistency(self) -> None:
        """Assert structural invariants; used by tests and the snapshot loader."""
        seen: dict[int, list[int]] = {}
        q = self._stride - 1
        for user in range(self.config.population):
            base = user * self._stride
            in_prefix = True
            for i in range(base, base + q):
                if self._ref[i] == NO_REF:
                    in_prefix = False
                elif not in_prefix:
                    raise GraphError(f"direct block of user {user} is not compact")
            direct_count = sum(1 for i in range(base, base + q) if self._ref[i] != NO_REF)
            if self._ref[base + q] != NO_REF and direct_count < q:
                raise GraphError(f"user {user} overflows with a non-full direct block")
            for uid, ref in self.records_of(user):
                if uid == user:
                    raise GraphError(f"self edge stored for user {user}")
                if self._cells[ref] is None:
                    raise GraphError(f"record ({user}, {uid}) points at vacant cell {ref}")
                seen.setdefault(ref, []).append(user)
        for ref, cell in enumerate(self._cells):
            users = sorted(seen.get(ref, []))
            if cell is None:
                if users:
                    raise GraphError(f"vacant cell {ref} still referenced by {users}")
                continue
            if users != sorted(self._ends[ref]):
                raise GraphError(f"cell {ref} referenced by {users}, endpoints {self._ends[ref]}")
        live = sum(1 for c in self._cells if c is not None)
        if live != self.edge_count:
            raise GraphError(f"edge_count {self.edge_count} != live cells {live}")
        if live + len(self._vacant) != len(self._cells):
            raise GraphError("vacancy list does not account for the whole pool")
        if len(set(self._vacant)) != len(self._vacant):
            raise GraphError("duplicate entries in vacancy list")


def space_estimate(population: int, avg_degree: int, window_slots: int) -> float:
    """Storage bound in bits for the index store plus the vector pool.

    Per user: ``avg_degree + 1`` index records of one uid field and one
    vector-ref field; per edge (``avg_degree/2`` per user on average): a cell
    of ``window_slots`` contact bits plus a deletion flag.
    """
    if population < 1 or avg_degree < 1 or window_slots < 1:
        raise ValueError("population, avg_degree and window_slots must be >= 1")
    index_bits = (avg_degree + 1) * (2 * math.log2(population) + math.log2(avg_degree) - 1)
    vector_bits = (window_slots + 1) * avg_degree / 2
    return population * (index_bits + vector_bits)


def space_estimate_gb(population: int, avg_degree: int, window_slots: int) -> float:
    return space_estimate(population, avg_degree, window_slots) / 2**33
