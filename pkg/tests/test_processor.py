import random

import pytest

from csketch.core import parse_timestamp
from csketch.graph import ContactGraph
from csketch.ids import assign
from csketch.processor import (
    ProcessError,
    SlotCursor,
    WatchWindow,
    apply_gap,
    process,
    sync_time,
)
from csketch.wire import End, Gap, Header, Sample

from conftest import small_config

CFG = small_config()  # 5 day window, day slots, 5 samples per slot
START = CFG.start_time


def minutes_later(minutes: int):
    from datetime import timedelta

    return START + timedelta(minutes=minutes)


# -- time synchronization -----------------------------------------------------


def test_sync_at_deployment_instant():
    assert sync_time(START, START, CFG) == SlotCursor(0, 0)


def test_sync_at_slot_boundary():
    assert sync_time(START, minutes_later(CFG.slot_minutes), CFG) == SlotCursor(1, 0)


def test_sync_multi_slot_offset():
    # 3000 elapsed minutes with 1440-minute slots and 288-minute samples.
    cursor = sync_time(START, minutes_later(3000), CFG)
    assert cursor == SlotCursor(2, 0)
    assert cursor.array_index(CFG.window_slots) == 2


def test_sync_rejects_time_before_deployment():
    with pytest.raises(ProcessError):
        sync_time(START, minutes_later(-1), CFG)


def test_sync_midslot():
    cfg = small_config(slot_minutes=15, sample_minutes=3, samples_per_slot=5, incubation_days=14)
    cursor = sync_time(cfg.start_time, parse_timestamp("12/01/2021:12:56"), cfg)
    elapsed = 11 * 1440 + 12 * 60 + 56
    assert cursor.abs_slot == elapsed // 15
    assert cursor.sample_offset == (elapsed // 3) % 5


# -- gap arithmetic --------------------------------------------------------------


def test_gap_whole_slot():
    assert apply_gap(SlotCursor(3, 0), CFG.samples_per_slot, CFG) == SlotCursor(4, 0)


def test_gap_within_slot():
    assert apply_gap(SlotCursor(3, 3), 1, CFG) == SlotCursor(3, 4)


def test_gap_spanning_slots():
    assert apply_gap(SlotCursor(3, 4), 7, CFG) == SlotCursor(5, 1)


def test_gap_rejects_zero():
    with pytest.raises(ProcessError):
        apply_gap(SlotCursor(0, 0), 0, CFG)


def test_cursor_interval_arithmetic_is_consistent():
    rng = random.Random(7)
    cursor = SlotCursor(0, 0)
    consumed = 0
    for _ in range(200):
        step = rng.randint(1, 9)
        cursor = apply_gap(cursor, step, CFG)
        consumed += step
        assert cursor.interval_index(CFG.samples_per_slot) == consumed


# -- watch window -------------------------------------------------------------------


def test_watch_window_completes_run():
    w = WatchWindow(3)
    assert w.observe({1}) == []
    assert w.observe({1, 2}) == []
    assert w.observe({1}) == [1]
    assert len(w.frames) == 3


def test_watch_window_counter_resets_on_absence():
    w = WatchWindow(3)
    w.observe({1})
    w.observe({1})
    w.observe(set())
    assert w.counts.get(1, 0) == 0
    assert w.observe({1}) == []


def test_watch_window_gap_breaks_all_runs():
    w = WatchWindow(3)
    w.observe({1, 2})
    w.observe({1, 2})
    w.break_all()
    assert w.observe({1, 2}) == []
    assert len(w.frames) == 1


def test_watch_window_bounded_frames():
    w = WatchWindow(4)
    for _ in range(10):
        w.observe({1, 2, 3})
    assert len(w.frames) == 4


# -- stream processing ------------------------------------------------------------------


def build_stream(sender: int, present: list[set[int]], table, start=START):
    """Records for a stream where present[i] is who sender hears in interval i."""
    records = [Header(uid=sender, start_time=start, epoch=table.epoch)]
    gap = 0
    for i, others in enumerate(present):
        if not others:
            gap += 1
            continue
        if gap:
            records.append(Gap(gap))
            gap = 0
        tran = table.ids_of(sender)[i % table.ids_per_user]
        recs = tuple(table.ids_of(o)[i % table.ids_per_user] for o in sorted(others))
        records.append(Sample(tran_vid=tran, rec_vids=recs))
    if gap:
        records.append(Gap(gap))
    records.append(End())
    return records


@pytest.fixture()
def table():
    return assign(CFG.population, CFG.ids_per_user)


def test_full_run_installs_contact(table):
    g = ContactGraph(CFG)
    timeline = [{1}] * 5 + [{3}] * 3  # 3 appears fewer than 5 times
    stats = process(g, build_stream(2, timeline, table), table)
    assert stats.contacts_installed == 1
    assert stats.edges_created == 1
    assert g.search(2, 1) is not None and g.search(2, 3) is None


def test_broken_run_installs_nothing(table):
    g = ContactGraph(CFG)
    timeline = [{1}] * 4 + [set()] + [{1}] * 4
    stats = process(g, build_stream(2, timeline, table), table)
    assert stats.contacts_installed == 0
    assert g.edge_count == 0


def test_double_length_run_installs_twice(table):
    g = ContactGraph(CFG)
    stats = process(g, build_stream(2, [{1}] * 10, table), table)
    assert stats.contacts_installed == 2
    assert g.edge_count == 1
    ref = g.record_at(g.search(2, 1))[1]
    assert g.vector(ref).value(g.now) == 0b11  # slots 0 and 1


def test_unresolvable_vid_drops_sample_with_diagnostic(table):
    g = ContactGraph(CFG)
    records = [Header(uid=2, start_time=START, epoch=0)]
    records += [Sample(tran_vid=5, rec_vids=(3,))] * 4
    records += [Sample(tran_vid=5, rec_vids=(3, 999))]  # 999 unassigned
    records += [Sample(tran_vid=5, rec_vids=(3,))] * 5
    records += [End()]
    stats = process(g, records, table)
    assert len(stats.diagnostics) == 1
    assert "999" in stats.diagnostics[0]
    # The poisoned interval broke the first run; one full run follows it.
    assert stats.contacts_installed == 1


def test_unknown_sender_rejected(table):
    g = ContactGraph(CFG)
    with pytest.raises(ProcessError):
        process(g, [Header(uid=99, start_time=START, epoch=0), End()], table)


def test_self_vid_in_receivers_is_ignored(table):
    g = ContactGraph(CFG)
    records = [Header(uid=2, start_time=START, epoch=0)]
    own = table.ids_of(2)[0]
    other = table.ids_of(1)[0]
    records += [Sample(tran_vid=own, rec_vids=(own, other))] * 5
    records += [End()]
    stats = process(g, records, table)
    assert stats.contacts_installed == 1
    assert g.search(2, 1) is not None


def test_symmetric_streams_share_one_edge(table):
    g = ContactGraph(CFG)
    process(g, build_stream(2, [{1}] * 5, table), table)
    process(g, build_stream(1, [{2}] * 5, table), table)
    assert g.edge_count == 1
    ref = g.record_at(g.search(1, 2))[1]
    assert g.vector(ref).value(g.now) == 0b1


def test_header_only_stream_vouches_for_start_slot(table):
    g = ContactGraph(CFG)
    late = minutes_later(3 * 1440)  # slot 3
    process(g, [Header(uid=0, start_time=late, epoch=0), End()], table)
    assert g.now == 3


def test_trailing_gap_advances_clock_to_last_consumed_interval(table):
    g = ContactGraph(CFG)
    records = [Header(uid=0, start_time=START, epoch=0), Gap(30), End()]
    process(g, records, table)
    assert g.now == (30 - 1) // 5  # slot of the last skipped interval


# -- run-splitting equivalence ------------------------------------------------------------


def oracle_contact_count(timeline: list[bool], rho: int) -> int:
    """Independent count: floor(run length / rho) summed over maximal runs."""
    total = 0
    run = 0
    for present in timeline:
        if present:
            run += 1
        else:
            total += run // rho
            run = 0
    return total + run // rho


@pytest.mark.parametrize("rho", [3, 5])
def test_run_splitting_matches_oracle_on_random_timelines(rho):
    rng = random.Random(42 + rho)
    cfg = small_config(
        population=4,
        incubation_days=30,
        slot_minutes=rho * 288,
        sample_minutes=288,
        samples_per_slot=rho,
    )
    table = assign(cfg.population, cfg.ids_per_user)
    for _ in range(300):
        length = rng.randint(1, 40)
        timeline = [rng.random() < 0.6 for _ in range(length)]
        # absence is encoded as a gap or as a sample naming a bystander, whose
        # own runs the engine must count by the same rule
        present = [({1} if p else ({3} if rng.random() < 0.5 else set())) for p in timeline]
        g = ContactGraph(cfg)
        stats = process(g, build_stream(0, present, table, start=cfg.start_time), table)
        expected = oracle_contact_count([1 in s for s in present], rho)
        expected += oracle_contact_count([3 in s for s in present], rho)
        assert stats.contacts_installed == expected
