"""Synthetic proximity scenarios with an independent verification oracle.

A scenario scripts who is near whom over a horizon of sampling intervals,
either explicitly or from a seeded random model. ``generate`` renders the
wire streams every participating device would upload, together with a ground
truth computed straight from the detection and tracing definitions - runs of
consecutive presence, slot assignment, window visibility, and level-by-level
chain search. The ground-truth side deliberately shares no code with the
engine so the two can check each other.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from csketch.core import TraceConfig, config_from_dict, config_to_dict
from csketch.ids import assign
from csketch.wire import Gap, Header, Record, Sample, write_stream


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ContactSpan:
    """Users ``a`` and ``b`` are in proximity for ``length`` consecutive
    sampling intervals starting at ``start``."""

    a: int
    b: int
    start: int
    length: int


@dataclass(frozen=True)
class RandomSpec:
    seed: int
    mean_contacts_per_user_per_day: float = 1.0
    run_length_min: int = 1
    run_length_max: int = 12


@dataclass
class Scenario:
    config: TraceConfig
    horizon_intervals: int
    script: list[ContactSpan] = field(default_factory=list)
    random_spec: RandomSpec | None = None
    id_mode: str = "deterministic"
    id_seed: int | None = None

    def to_dict(self) -> dict:
        data = {
            "config": config_to_dict(self.config),
            "horizon_intervals": self.horizon_intervals,
            "id_mode": self.id_mode,
        }
        if self.id_seed is not None:
            data["id_seed"] = self.id_seed
        if self.random_spec is not None:
            data["random"] = {
                "seed": self.random_spec.seed,
                "mean_contacts_per_user_per_day": self.random_spec.mean_contacts_per_user_per_day,
                "run_length": [self.random_spec.run_length_min, self.random_spec.run_length_max],
            }
        if self.script:
            data["script"] = [
                {"a": s.a, "b": s.b, "start": s.start, "length": s.length} for s in self.script
            ]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        config = config_from_dict(data["config"])
        script = [
            ContactSpan(a=int(s["a"]), b=int(s["b"]), start=int(s["start"]), length=int(s["length"]))
            for s in data.get("script", [])
        ]
        spec = None
        if "random" in data:
            r = data["random"]
            lo, hi = r.get("run_length", [1, 12])
            spec = RandomSpec(
                seed=int(r["seed"]),
                mean_contacts_per_user_per_day=float(r.get("mean_contacts_per_user_per_day", 1.0)),
                run_length_min=int(lo),
                run_length_max=int(hi),
            )
        return cls(
            config=config,
            horizon_intervals=int(data["horizon_intervals"]),
            script=script,
            random_spec=spec,
            id_mode=data.get("id_mode", "deterministic"),
            id_seed=data.get("id_seed"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def materialize_script(scenario: Scenario) -> list[ContactSpan]:
    """The effective span list: explicit script plus seeded random spans."""
    spans = list(scenario.script)
    spec = scenario.random_spec
    if spec is not None:
        rng = random.Random(spec.seed)
        config = scenario.config
        intervals_per_day = 1440 // config.sample_minutes
        days = scenario.horizon_intervals / max(intervals_per_day, 1)
        count = max(1, round(config.population * spec.mean_contacts_per_user_per_day * days / 2))
        for _ in range(count):
            a = rng.randrange(config.population)
            b = rng.randrange(config.population - 1)
            if b >= a:
                b += 1
            length = rng.randint(spec.run_length_min, min(spec.run_length_max, scenario.horizon_intervals))
            start = rng.randint(0, scenario.horizon_intervals - length)
            spans.append(ContactSpan(a=a, b=b, start=start, length=length))
    return spans


def _validate(scenario: Scenario, spans: list[ContactSpan]) -> None:
    n_users = scenario.config.population
    horizon = scenario.horizon_intervals
    if horizon < 1:
        raise ScenarioError("horizon must cover at least one interval")
    for i, span in enumerate(spans):
        where = f"script entry {i} ({span.a},{span.b},{span.start},{span.length})"
        if span.a == span.b:
            raise ScenarioError(f"{where}: users must differ")
        if not (0 <= span.a < n_users and 0 <= span.b < n_users):
            raise ScenarioError(f"{where}: user outside population of {n_users}")
        if span.length < 1 or span.start < 0 or span.start + span.length > horizon:
            raise ScenarioError(f"{where}: outside horizon of {horizon} intervals")


# -- ground truth -------------------------------------------------------------


@dataclass
class GroundTruth:
    """Expected engine outcomes derived from the definitions alone."""

    config: TraceConfig
    horizon_intervals: int
    now_slot: int
    pair_slots: dict[tuple[int, int], list[int]]
    creation_key: dict[tuple[int, int], tuple[int, int, int]]
    pair_completions: dict[tuple[int, int], int]
    detections: int
    samples: int
    gaps: int

    @property
    def edge_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pair_slots)

    def visible_slots(self, pair: tuple[int, int]) -> list[int]:
        window = self.config.window_slots
        return [s for s in self.pair_slots.get(pair, []) if self.now_slot - s < window]

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "horizon_intervals": self.horizon_intervals,
            "now_slot": self.now_slot,
            "pair_slots": {f"{a}-{b}": slots for (a, b), slots in sorted(self.pair_slots.items())},
            "detections": self.detections,
            "samples": self.samples,
            "gaps": self.gaps,
        }


class _PairState:
    __slots__ = ("slots", "last")

    def __init__(self):
        self.slots: set[int] = set()
        self.last: int | None = None


def _register(state: _PairState, abs_slot: int, offset: int, rho: int, window: int) -> None:
    # Slot assignment rule, restated from scratch: a run completing early in a
    # slot credits the previous slot when that slot exists and is in window.
    last = abs_slot if state.last is None else max(state.last, abs_slot)
    target = abs_slot if offset > rho // 2 else abs_slot - 1
    if target < 0 or last - target >= window:
        target = abs_slot
    if 0 <= last - target < window:
        state.slots.add(target)
    state.last = last


def _presence(spans: list[ContactSpan]) -> dict[tuple[int, int], set[int]]:
    by_pair: dict[tuple[int, int], set[int]] = {}
    for span in spans:
        pair = (min(span.a, span.b), max(span.a, span.b))
        by_pair.setdefault(pair, set()).update(range(span.start, span.start + span.length))
    return by_pair


def _maximal_runs(intervals: set[int]) -> list[tuple[int, int]]:
    runs = []
    ordered = sorted(intervals)
    start = prev = ordered[0]
    for i in ordered[1:]:
        if i != prev + 1:
            runs.append((start, prev - start + 1))
            start = i
        prev = i
    runs.append((start, prev - start + 1))
    return runs


def _completions(intervals: set[int], rho: int) -> list[int]:
    out = []
    for start, length in _maximal_runs(intervals):
        out.extend(start + k * rho - 1 for k in range(1, length // rho + 1))
    return sorted(out)


def generate(scenario: Scenario) -> tuple[dict[int, bytes], GroundTruth]:
    """Render one wire stream per user plus the scenario's ground truth.

    Every user uploads a stream starting at the deployment time: users with
    scripted proximity get samples and gaps padded out to the horizon
    (symmetric in both endpoints' streams); idle users upload a bare header.
    Deterministic for a fixed scenario.
    """
    config = scenario.config
    spans = materialize_script(scenario)
    _validate(scenario, spans)
    table = assign(config.population, config.ids_per_user, scenario.id_mode, scenario.id_seed)
    presence = _presence(spans)
    completions = {pair: _completions(intervals, config.samples_per_slot) for pair, intervals in presence.items()}

    partners: dict[int, dict[int, list[int]]] = {}
    for (a, b), intervals in presence.items():
        for i in sorted(intervals):
            partners.setdefault(a, {}).setdefault(i, []).append(b)
            partners.setdefault(b, {}).setdefault(i, []).append(a)

    streams: dict[int, bytes] = {}
    samples_total = 0
    gaps_total = 0
    for user in range(config.population):
        header = Header(uid=user, start_time=config.start_time, epoch=table.epoch)
        body: list[Record] = []
        timeline = partners.get(user)
        if timeline:
            pending_gap = 0
            for interval in range(scenario.horizon_intervals):
                others = timeline.get(interval)
                if not others:
                    pending_gap += 1
                    continue
                if pending_gap:
                    body.append(Gap(pending_gap))
                    gaps_total += 1
                    pending_gap = 0
                tran = table.ids_of(user)[interval % config.ids_per_user]
                recs = tuple(
                    table.ids_of(other)[interval % config.ids_per_user] for other in sorted(others)
                )
                body.append(Sample(tran_vid=tran, rec_vids=recs))
                samples_total += 1
            if pending_gap:
                body.append(Gap(pending_gap))
                gaps_total += 1
        streams[user] = write_stream(header, body)

    # Replay detections in ingest order (stream by stream, interval by
    # interval, partners ascending) to fix registered slots and edge birth.
    states: dict[tuple[int, int], _PairState] = {}
    creation_key: dict[tuple[int, int], tuple[int, int, int]] = {}
    detections = 0
    rho = config.samples_per_slot
    window = config.window_slots
    for user in range(config.population):
        events = []
        for pair, comps in completions.items():
            if user in pair:
                other = pair[0] if pair[1] == user else pair[1]
                events.extend((c, other, pair) for c in comps)
        for interval, other, pair in sorted(events):
            detections += 1
            creation_key.setdefault(pair, (user, interval, other))
            state = states.setdefault(pair, _PairState())
            _register(state, interval // rho, interval % rho, rho, window)

    now_slot = (scenario.horizon_intervals - 1) // rho if partners else 0
    truth = GroundTruth(
        config=config,
        horizon_intervals=scenario.horizon_intervals,
        now_slot=now_slot,
        pair_slots={pair: sorted(state.slots) for pair, state in states.items()},
        creation_key=creation_key,
        pair_completions={pair: len(c) for pair, c in completions.items() if c},
        detections=detections,
        samples=samples_total,
        gaps=gaps_total,
    )
    return streams, truth


# -- oracle trace --------------------------------------------------------------


def oracle_trace(
    truth: GroundTruth,
    infected: list[int],
    max_level: int,
) -> tuple[dict[int, tuple[int, int]], list[tuple[int, int]]]:
    """Level-by-level chain search over the ground truth.

    Walks users breadth first from the infected set: level 1 admits every
    user sharing a visibly non-empty pair with an infected user; deeper
    levels admit a user when its connecting pair has some visible slot at or
    after the oldest visible slot of the pair its predecessor was reached
    through. First discovery fixes a user's level and predecessor, matching
    the engine's queue order (edge birth order within each adjacency).

    Returns ({user: (level, via)}, pathway edge list).
    """
    if max_level < 1:
        raise ScenarioError("max_level must be >= 1")
    visible: dict[tuple[int, int], list[int]] = {}
    for pair in truth.pair_slots:
        slots = truth.visible_slots(pair)
        if slots:
            visible[pair] = slots
    adjacency: dict[int, list[tuple[int, tuple[int, int]]]] = {}
    for pair in sorted(visible, key=lambda p: truth.creation_key[p]):
        a, b = pair
        adjacency.setdefault(a, []).append((b, pair))
        adjacency.setdefault(b, []).append((a, pair))

    sources = list(dict.fromkeys(infected))
    source_set = set(sources)
    admitted: dict[int, tuple[int, int]] = {}
    edges: list[tuple[int, int]] = []
    queue: list[tuple[int, list[int]]] = []
    for user in sources:
        for other, pair in adjacency.get(user, []):
            if other in source_set or other in admitted:
                continue
            admitted[other] = (1, user)
            edges.append((user, other))
            queue.append((other, visible[pair]))
    level = 2
    while level <= max_level and queue:
        frontier, queue = queue, []
        for user, inbound_slots in frontier:
            for other, pair in adjacency.get(user, []):
                if other in source_set or other in admitted:
                    continue
                # Chain condition: the first inbound contact happens at or
                # before the last contact of the next hop (absolute slots).
                if min(inbound_slots) <= max(visible[pair]):
                    admitted[other] = (level, user)
                    edges.append((user, other))
                    queue.append((other, visible[pair]))
        level += 1
    return admitted, edges
