"""Line-oriented wire format for device proximity streams.

One stream per upload::

    H <uid> <dd/mm/yyyy:hh:mm> <epoch>     header: sender, start time, ID epoch
    S <tranVid> <recVid>[,<recVid>...]     one sampling interval with receivers
    G <x>                                  x >= 1 silent sampling intervals
    E                                      end of stream

UTF-8, LF-terminated lines. A stream is exactly one header, any number of
samples and gaps, then the end marker; anything else is rejected with the
byte offset of the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Iterator, Union

from csketch.core import format_timestamp, parse_timestamp


class WireError(ValueError):
    """Malformed stream data. ``kind`` is a stable machine-readable tag."""

    def __init__(self, kind: str, offset: int, line_no: int, message: str):
        super().__init__(f"{kind} at byte {offset} (line {line_no}): {message}")
        self.kind = kind
        self.offset = offset
        self.line_no = line_no


@dataclass(frozen=True)
class Header:
    uid: int
    start_time: datetime
    epoch: int


@dataclass(frozen=True)
class Sample:
    tran_vid: int
    rec_vids: tuple[int, ...]


@dataclass(frozen=True)
class Gap:
    count: int


@dataclass(frozen=True)
class End:
    pass


Record = Union[Header, Sample, Gap, End]


def parse_user(token: str) -> int:
    """User token: canonical ``P<k>``, bare integers accepted."""
    raw = token[1:] if token[:1] in ("P", "p") else token
    if not raw.isdigit():
        raise ValueError(f"bad user id {token!r}")
    return int(raw)


def format_user(user: int) -> str:
    return f"P{user}"


def _positive_int(token: str, minimum: int = 1) -> int:
    if not token.isdigit():
        raise ValueError(f"not a number: {token!r}")
    value = int(token)
    if value < minimum:
        raise ValueError(f"{value} < {minimum}")
    return value


def iter_records(data: bytes) -> Iterator[Record]:
    """Yield stream records in order; raises WireError on any malformation."""
    offset = 0
    line_no = 0
    state = "header"  # header -> body -> done
    for raw in data.splitlines(keepends=True):
        line_no += 1
        line_offset = offset
        offset += len(raw)
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise WireError("malformed-line", line_offset, line_no, "not valid UTF-8")
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split()
        tag = parts[0]
        if state == "done":
            raise WireError("trailing-garbage", line_offset, line_no, f"content after end marker: {line!r}")
        if state == "header":
            if tag != "H":
                raise WireError("malformed-header", line_offset, line_no, f"stream must start with H, got {line!r}")
            if len(parts) != 4:
                raise WireError("malformed-header", line_offset, line_no, "expected: H <uid> <timestamp> <epoch>")
            try:
                uid = parse_user(parts[1])
                start = parse_timestamp(parts[2])
                epoch = _positive_int(parts[3], minimum=0)
            except ValueError as exc:
                raise WireError("malformed-header", line_offset, line_no, str(exc))
            yield Header(uid=uid, start_time=start, epoch=epoch)
            state = "body"
            continue
        if tag == "S":
            if len(parts) != 3:
                raise WireError("malformed-sample", line_offset, line_no, "expected: S <tranVid> <recVids>")
            try:
                tran = _positive_int(parts[1])
                recs = tuple(_positive_int(v) for v in parts[2].split(","))
            except ValueError as exc:
                raise WireError("malformed-sample", line_offset, line_no, str(exc))
            if not recs:
                raise WireError("malformed-sample", line_offset, line_no, "empty receiver list")
            yield Sample(tran_vid=tran, rec_vids=recs)
        elif tag == "G":
            if len(parts) != 2:
                raise WireError("malformed-gap", line_offset, line_no, "expected: G <x>")
            try:
                count = _positive_int(parts[1])
            except ValueError as exc:
                raise WireError("malformed-gap", line_offset, line_no, str(exc))
            yield Gap(count=count)
        elif tag == "E":
            if len(parts) != 1:
                raise WireError("malformed-line", line_offset, line_no, "end marker takes no fields")
            yield End()
            state = "done"
        else:
            raise WireError("unknown-record-tag", line_offset, line_no, f"unknown tag {tag!r}")
    if state != "done":
        raise WireError("truncated-stream", offset, line_no, "stream ended without end marker")


def parse_stream(data: bytes) -> list[Record]:
    return list(iter_records(data))


def write_stream(header: Header, body: list[Record]) -> bytes:
    """Serialize a stream back to wire bytes (used by the generator and tests)."""
    lines = [f"H {format_user(header.uid)} {format_timestamp(header.start_time)} {header.epoch}"]
    for rec in body:
        if isinstance(rec, Sample):
            lines.append(f"S {rec.tran_vid} {','.join(str(v) for v in rec.rec_vids)}")
        elif isinstance(rec, Gap):
            lines.append(f"G {rec.count}")
        else:
            raise TypeError(f"unexpected record in body: {rec!r}")
    lines.append("E")
    return ("\n".join(lines) + "\n").encode("utf-8")
