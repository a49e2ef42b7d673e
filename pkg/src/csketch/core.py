"""Foundational types: engine configuration, timestamps, and contact vectors.

A contact vector is the edge label of the contact graph: a fixed number of
binary slots covering the latest incubation window, one slot per proximity
duration. Slot index 0 is the most recent slot and index n-1 the oldest;
as time advances old slots fall out of the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime

TIMESTAMP_FORMAT = "%d/%m/%Y:%H:%M"


class ConfigError(ValueError):
    """Invalid engine configuration."""


def parse_timestamp(text: str) -> datetime:
    """Parse a ``dd/mm/yyyy:hh:mm`` timestamp (minute resolution)."""
    try:
        return datetime.strptime(text, TIMESTAMP_FORMAT)
    except ValueError as exc:
        raise ValueError(f"bad timestamp {text!r}: expected dd/mm/yyyy:hh:mm") from exc


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def minutes_between(later: datetime, earlier: datetime) -> int:
    """Whole minutes from ``earlier`` to ``later``; sub-minute parts are dropped."""
    return int((later - earlier).total_seconds()) // 60


@dataclass(frozen=True)
class TraceConfig:
    """Close-contact parameters plus derived window geometry.

    ``slot_minutes`` is the minimum continuous exposure that counts as a close
    contact; it is subdivided into ``samples_per_slot`` sampling intervals of
    ``sample_minutes`` each. The window covers ``incubation_days`` days, so a
    vector has ``window_slots`` slots and a device timeline has
    ``window_samples`` sample intervals per window.
    """

    incubation_days: int
    slot_minutes: int
    sample_minutes: int
    samples_per_slot: int
    population: int
    avg_degree: int
    ids_per_user: int = 1
    start_time: datetime = field(default_factory=lambda: datetime(2021, 1, 1))

    def __post_init__(self) -> None:
        if self.incubation_days < 1:
            raise ConfigError("incubation_days must be >= 1")
        if self.population < 1 or self.avg_degree < 1 or self.ids_per_user < 1:
            raise ConfigError("population, avg_degree and ids_per_user must be >= 1")
        if self.samples_per_slot < 2:
            raise ConfigError("samples_per_slot must be an integer > 1")
        if self.sample_minutes < 1:
            raise ConfigError("sample_minutes must be a whole number of minutes >= 1")
        if self.slot_minutes != self.sample_minutes * self.samples_per_slot:
            raise ConfigError(
                f"slot_minutes must equal sample_minutes * samples_per_slot "
                f"({self.slot_minutes} != {self.sample_minutes} * {self.samples_per_slot})"
            )
        if self.start_time.second or self.start_time.microsecond:
            object.__setattr__(self, "start_time", self.start_time.replace(second=0, microsecond=0))

    @classmethod
    def build(
        cls,
        incubation_days: int,
        slot_minutes: int,
        sample_minutes: int | None = None,
        samples_per_slot: int | None = None,
        **kwargs,
    ) -> "TraceConfig":
        """Build a config from any two of slot/sample/samples-per-slot."""
        if sample_minutes is None and samples_per_slot is None:
            raise ConfigError("need sample_minutes or samples_per_slot")
        if sample_minutes is None:
            if slot_minutes % samples_per_slot:
                raise ConfigError(
                    f"slot_minutes {slot_minutes} not divisible by samples_per_slot {samples_per_slot}"
                )
            sample_minutes = slot_minutes // samples_per_slot
        elif samples_per_slot is None:
            if slot_minutes % sample_minutes:
                raise ConfigError(
                    f"slot_minutes {slot_minutes} not divisible by sample_minutes {sample_minutes}"
                )
            samples_per_slot = slot_minutes // sample_minutes
        return cls(
            incubation_days=incubation_days,
            slot_minutes=slot_minutes,
            sample_minutes=sample_minutes,
            samples_per_slot=samples_per_slot,
            **kwargs,
        )

    @property
    def window_slots(self) -> int:
        """Number of slots covering the incubation window."""
        return slot_count(self)

    @property
    def window_samples(self) -> int:
        """Number of sampling intervals covering the incubation window."""
        return math.ceil(1440 * self.incubation_days / self.sample_minutes)


def slot_count(config: TraceConfig) -> int:
    """Slots needed to cover ``incubation_days`` at one slot per ``slot_minutes``."""
    return math.ceil(1440 * config.incubation_days / config.slot_minutes)


def config_to_dict(config: TraceConfig) -> dict:
    return {
        "incubation_days": config.incubation_days,
        "slot_minutes": config.slot_minutes,
        "sample_minutes": config.sample_minutes,
        "samples_per_slot": config.samples_per_slot,
        "population": config.population,
        "avg_degree": config.avg_degree,
        "ids_per_user": config.ids_per_user,
        "start_time": format_timestamp(config.start_time),
    }


def config_from_dict(data: dict) -> TraceConfig:
    """Build a TraceConfig from JSON-ish keys; sampling may be given as
    sample_minutes, samples_per_slot, or both (checked for consistency)."""
    known = {
        "incubation_days",
        "slot_minutes",
        "sample_minutes",
        "samples_per_slot",
        "population",
        "avg_degree",
        "ids_per_user",
        "start_time",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        kwargs = {
            "incubation_days": int(data["incubation_days"]),
            "slot_minutes": int(data["slot_minutes"]),
            "population": int(data["population"]),
            "avg_degree": int(data["avg_degree"]),
        }
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc.args[0]}")
    if "ids_per_user" in data:
        kwargs["ids_per_user"] = int(data["ids_per_user"])
    if "start_time" in data:
        kwargs["start_time"] = parse_timestamp(data["start_time"])
    sample_minutes = data.get("sample_minutes")
    samples_per_slot = data.get("samples_per_slot")
    if sample_minutes is not None and samples_per_slot is not None:
        return TraceConfig(
            sample_minutes=int(sample_minutes),
            samples_per_slot=int(samples_per_slot),
            **kwargs,
        )
    return TraceConfig.build(
        sample_minutes=None if sample_minutes is None else int(sample_minutes),
        samples_per_slot=None if samples_per_slot is None else int(samples_per_slot),
        **kwargs,
    )


class ContactVector:
    """Sliding binary window of close-contact slots for one user pair.

    Internally the vector keeps an integer whose bit ``j`` records a contact
    at absolute slot ``last_slot - j``, plus ``last_slot`` itself, the most
    recent absolute slot the vector has been advanced to. Reading at a later
    absolute slot shifts the window forward, so bits older than the window
    silently read as zero; no periodic maintenance is needed on idle edges.
    """

    __slots__ = ("slots", "_bits", "_last_slot")

    def __init__(self, slots: int):
        if slots < 1:
            raise ValueError("a contact vector needs at least one slot")
        self.slots = slots
        self._bits = 0
        self._last_slot: int | None = None

    @classmethod
    def from_bits(cls, slots: int, bits: int, last_slot: int = 0) -> "ContactVector":
        """Build a vector from an explicit bit pattern (bit 0 = most recent slot)."""
        if bits < 0 or bits >> slots:
            raise ValueError(f"bit pattern {bits:#x} does not fit in {slots} slots")
        vec = cls(slots)
        if bits:
            vec._bits = bits
            vec._last_slot = last_slot
        return vec

    @property
    def last_slot(self) -> int | None:
        """Absolute slot of the most recent update, or None if never written."""
        return self._last_slot

    @property
    def array_index(self) -> int | None:
        """Circular-array position of the most recent slot (last_slot mod n)."""
        return None if self._last_slot is None else self._last_slot % self.slots

    def _advance(self, to_slot: int) -> None:
        # Shifting left ages every stored bit; bits pushed past the window drop.
        if self._last_slot is None:
            self._last_slot = to_slot
            return
        if to_slot > self._last_slot:
            delta = to_slot - self._last_slot
            self._bits = (self._bits << delta) & ((1 << self.slots) - 1) if delta < self.slots else 0
            self._last_slot = to_slot

    def mark(self, abs_slot: int, sample_offset: int, samples_per_slot: int) -> None:
        """Record a detected close contact that completed at ``abs_slot``.

        ``sample_offset`` is the sampling interval within the slot at which the
        detection fired. When the detection fires in the first half of the slot
        the bulk of the exposure lies in the previous slot, so that slot gets
        the bit; otherwise the current slot does. The previous slot is used
        only when it exists and still lies inside the window.
        """
        if not 0 <= sample_offset < samples_per_slot:
            raise ValueError(f"sample_offset {sample_offset} out of range [0, {samples_per_slot})")
        if abs_slot < 0:
            raise ValueError("abs_slot must be >= 0")
        self._advance(abs_slot)
        last = self._last_slot
        if sample_offset > samples_per_slot // 2:
            target = abs_slot
        else:
            target = abs_slot - 1
        if target < 0 or last - target >= self.slots:
            target = abs_slot
        index = last - target
        if 0 <= index < self.slots:
            self._bits |= 1 << index

    def value(self, now: int | None = None) -> int:
        """Decimal value of the logical window as seen at absolute slot ``now``.

        Bit 0 is the most recent slot. ``now`` defaults to the vector's own
        last update; it may not lie in the vector's past.
        """
        if self._last_slot is None:
            return 0
        if now is None or now == self._last_slot:
            return self._bits
        if now < self._last_slot:
            raise ValueError(f"cannot view vector at slot {now} before last update {self._last_slot}")
        delta = now - self._last_slot
        if delta >= self.slots:
            return 0
        return (self._bits << delta) & ((1 << self.slots) - 1)

    def earliest_index(self, now: int | None = None) -> int | None:
        """Logical index of the oldest set slot, or None if the window is empty."""
        v = self.value(now)
        return v.bit_length() - 1 if v else None

    def latest_index(self, now: int | None = None) -> int | None:
        """Logical index of the most recent set slot, or None if empty."""
        v = self.value(now)
        return (v & -v).bit_length() - 1 if v else None

    def is_live(self, now: int | None = None) -> bool:
        return self.value(now) != 0

    def __repr__(self) -> str:
        pattern = format(self._bits, f"0{self.slots}b")
        return f"ContactVector({pattern}, last_slot={self._last_slot})"
