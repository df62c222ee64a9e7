import io
import json
from datetime import date

import pytest
from hypothesis import given, strategies as st

from scade.errors import CorpusQualityError, PayloadError
from scade.ingest import (
    DEFAULT_ATTRIBUTE_ORDER,
    build_payload,
    filter_process_creation,
    ingest,
    normalize,
    normalize_text,
    parse_events,
    parse_timestamp,
)

from conftest import make_event, record, write_lines


def test_single_well_formed_line(tmp_path):
    events, skipped = parse_events(write_lines(tmp_path / "a.jsonl", [record()]))
    assert len(events) == 1 and skipped == 0
    ev = events[0]
    assert ev.event_id == 4688
    assert ev.command_line == "whoami.exe"
    assert ev.day == date(2026, 3, 2)


def test_empty_stream():
    assert parse_events(io.StringIO("")) == ([], 0)


def test_missing_command_line_is_skipped(tmp_path):
    # 10 lines, 3 without command_line -> 7 events, 3 skips
    recs = [record(record_id=f"r{i}") for i in range(7)]
    for i in range(3):
        bad = record(record_id=f"b{i}")
        del bad["command_line"]
        recs.insert(2 * i, bad)
    events, skipped = parse_events(write_lines(tmp_path / "a.jsonl", recs))
    assert (len(events), skipped) == (7, 3)


def test_non_process_events_need_no_command_line(tmp_path):
    rec = record(event_id=4624)
    del rec["command_line"]
    events, skipped = parse_events(write_lines(tmp_path / "a.jsonl", [rec]))
    assert skipped == 0 and events[0].command_line == ""


def test_garbage_lines_counted_and_majority_garbage_rejected():
    text = json.dumps(record()) + "\n{not json\n" + json.dumps(record(record_id="x")) + "\n"
    events, skipped = parse_events(io.StringIO(text))
    assert (len(events), skipped) == (2, 1)
    with pytest.raises(CorpusQualityError):
        parse_events(io.StringIO("nope\nnope\n" + json.dumps(record()) + "\n"))


def test_csv_input(tmp_path):
    rec = record()
    path = tmp_path / "a.csv"
    path.write_text(",".join(rec) + "\n" + ",".join(str(v).replace(",", " ") for v in rec.values()) + "\n")
    events, skipped = parse_events(path, fmt="csv")
    assert len(events) == 1 and skipped == 0 and events[0].device_id == "ws-001"


def test_threaded_parse_matches_serial(tmp_path):
    recs = [record(record_id=f"r{i}", command_line=f"cmd {i}") for i in range(500)]
    path = write_lines(tmp_path / "a.jsonl", recs)
    assert parse_events(path, threads=4) == parse_events(path, threads=1)


def test_timestamps():
    assert parse_timestamp("2026-03-02T23:30:00-02:00").date() == date(2026, 3, 3)
    assert parse_timestamp("2026-03-02T10:00:00").tzinfo is not None
    with pytest.raises(ValueError):
        parse_timestamp(17)


def test_filter_process_creation():
    evs = [make_event("a"), make_event("b", event_id=4624), make_event("c")]
    assert [e.ref for e in filter_process_creation(evs)] == ["a", "c"]
    assert filter_process_creation([evs[1]]) == []
    assert filter_process_creation([evs[0], evs[2]]) == [evs[0], evs[2]]


def test_normalization_examples():
    assert normalize_text("  CertUtil   -urlcache ") == "certutil -urlcache"
    ev = normalize(make_event(account_domain="CORP\\Admin"))
    assert ev.account_domain == "corp\\admin"
    assert normalize(ev) == ev


def test_reserved_separators_are_scrubbed():
    assert normalize_text("a\u241eb\u241dc") == "a\ufffdb\ufffdc"


def test_payload_examples():
    ev = normalize(make_event(command_line="  CertUtil  -f X ", file_path=""))
    p = build_payload(ev, ["account_name", "device_id", "process_name", "command_line"])
    assert p.text == "admin ws-001 c:\\windows\\system32\\whoami.exe certutil -f x"
    assert build_payload(ev, ["command_line"]).text == "certutil -f x"
    full = build_payload(ev, DEFAULT_ATTRIBUTE_ORDER)
    assert "  " not in full.text and not full.text.endswith(" ")
    assert full.parts[-1] == "certutil -f x"


def test_payload_errors():
    with pytest.raises(PayloadError):
        build_payload(make_event(), ["nonsense"])
    with pytest.raises(PayloadError):
        build_payload(make_event(file_path=""), ["file_path"])


def test_ingest_end_to_end(tmp_path):
    recs = [record(record_id="a", command_line="WHOAMI.EXE  /all"), record(record_id="b", event_id=4624)]
    events, payloads, skipped = ingest(write_lines(tmp_path / "a.jsonl", recs))
    assert [e.ref for e in events] == ["a"]
    assert "whoami.exe /all" in payloads[0].text


text_st = st.text(alphabet=st.sampled_from("aB \t\u241eZ9-\\"), max_size=30)
eid_st = st.sampled_from([4688, 4624, 1])


@given(st.lists(st.tuples(text_st, eid_st), max_size=8))
def test_filter_and_normalize_commute(items):
    evs = [make_event(f"e{i}", event_id=eid, command_line=cmd or "x") for i, (cmd, eid) in enumerate(items)]
    a = [normalize(e) for e in filter_process_creation(evs)]
    b = filter_process_creation([normalize(e) for e in evs])
    assert a == b


@given(text_st)
def test_normalize_idempotent(s):
    assert normalize_text(normalize_text(s)) == normalize_text(s)


@given(st.integers(min_value=0, max_value=10**9), st.integers(-12, 12))
def test_payload_day_is_utc_date(seconds, offset):
    from datetime import datetime, timedelta, timezone

    when = datetime(2000, 1, 1, tzinfo=timezone(timedelta(hours=offset))) + timedelta(seconds=seconds)
    ev = make_event(ts=when.isoformat())
    assert build_payload(ev).day == when.astimezone(timezone.utc).date()
