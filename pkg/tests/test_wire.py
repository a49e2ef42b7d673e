import pytest

from csketch.core import parse_timestamp
from csketch.wire import (
    End,
    Gap,
    Header,
    Sample,
    WireError,
    format_user,
    iter_records,
    parse_stream,
    parse_user,
    write_stream,
)

UPLOAD_SAMPLE_STREAM = b"H P2 12/01/2021:12:56 0\nS 5 4,8\nS 6 4,8\nE\n"


def test_parse_basic_stream():
    records = parse_stream(UPLOAD_SAMPLE_STREAM)
    assert records == [
        Header(uid=2, start_time=parse_timestamp("12/01/2021:12:56"), epoch=0),
        Sample(tran_vid=5, rec_vids=(4, 8)),
        Sample(tran_vid=6, rec_vids=(4, 8)),
        End(),
    ]


def test_parse_gap_only_stream():
    records = parse_stream(b"H P0 01/01/2021:00:00 0\nG 3\nE\n")
    assert records[1] == Gap(count=3)
    assert isinstance(records[-1], End)


def test_missing_header_is_rejected():
    with pytest.raises(WireError) as err:
        parse_stream(b"S 5 4\n")
    assert err.value.kind == "malformed-header"
    assert err.value.offset == 0


def test_unknown_tag_reports_byte_offset():
    data = b"H P0 01/01/2021:00:00 0\nQ nope\nE\n"
    with pytest.raises(WireError) as err:
        parse_stream(data)
    assert err.value.kind == "unknown-record-tag"
    assert err.value.offset == data.index(b"Q")


def test_truncated_stream_is_rejected():
    with pytest.raises(WireError) as err:
        parse_stream(b"H P0 01/01/2021:00:00 0\nS 1 3\n")
    assert err.value.kind == "truncated-stream"


def test_trailing_garbage_is_rejected():
    with pytest.raises(WireError) as err:
        parse_stream(b"H P0 01/01/2021:00:00 0\nE\nS 1 3\n")
    assert err.value.kind == "trailing-garbage"


@pytest.mark.parametrize(
    "line,kind",
    [
        (b"S 5\n", "malformed-sample"),
        (b"S x 4\n", "malformed-sample"),
        (b"S 5 4,,8\n", "malformed-sample"),
        (b"S 5 0\n", "malformed-sample"),
        (b"G 0\n", "malformed-gap"),
        (b"G -2\n", "malformed-gap"),
        (b"G\n", "malformed-gap"),
    ],
)
def test_malformed_body_lines(line, kind):
    with pytest.raises(WireError) as err:
        parse_stream(b"H P0 01/01/2021:00:00 0\n" + line + b"E\n")
    assert err.value.kind == kind


def test_bad_header_fields():
    for data in (b"H P0 31/02/2021:00:00 0\nE\n", b"H P0 01/01/2021:00:00\nE\n", b"H Px 01/01/2021:00:00 0\nE\n"):
        with pytest.raises(WireError) as err:
            parse_stream(data)
        assert err.value.kind == "malformed-header"


def test_user_token_forms():
    assert parse_user("P2") == 2
    assert parse_user("17") == 17
    assert format_user(2) == "P2"
    with pytest.raises(ValueError):
        parse_user("P-1")


def test_write_stream_roundtrips():
    header = Header(uid=3, start_time=parse_timestamp("02/03/2021:08:30"), epoch=1)
    body = [Sample(tran_vid=7, rec_vids=(1, 2)), Gap(count=4), Sample(tran_vid=8, rec_vids=(9,))]
    data = write_stream(header, body)
    assert parse_stream(data) == [header, *body, End()]


def test_iter_records_is_lazy():
    gen = iter_records(b"H P0 01/01/2021:00:00 0\nE\n")
    assert isinstance(next(gen), Header)
