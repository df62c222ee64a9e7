"""Telemetry ingestion: parse, filter to process creation, normalize, build payloads."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import date, datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Sequence

from .errors import CorpusQualityError, DataError, PayloadError

logger = logging.getLogger(__name__)

PROCESS_CREATION = 4688

STRING_FIELDS = (
    "account_name",
    "account_domain",
    "device_id",
    "parent_process_name",
    "process_name",
    "command_line",
    "file_path",
)
EVENT_FIELDS = ("timestamp", "event_id") + STRING_FIELDS

DEFAULT_ATTRIBUTE_ORDER = (
    "account_domain",
    "account_name",
    "device_id",
    "parent_process_name",
    "process_name",
    "command_line",
    "file_path",
)

# a record without these cannot be scored or attributed to an asset
_REQUIRED = ("timestamp", "event_id", "device_id")

_WS_RUN = re.compile(r"[ \t\n\r\f\v]+")

# reserved by the tokenizer to join n-gram parts; scrubbed from normalized text
RESERVED_CHARS = ("\u241e", "\u241d")

MAX_MALFORMED_FRACTION = 0.5


@dataclass(frozen=True)
class ProcessEvent:
    timestamp: datetime
    event_id: int
    account_name: str
    account_domain: str
    device_id: str
    parent_process_name: str
    process_name: str
    command_line: str
    file_path: str
    ref: str = ""

    @property
    def day(self) -> date:
        return self.timestamp.astimezone(timezone.utc).date()

    def to_record(self) -> dict:
        rec = {"timestamp": format_timestamp(self.timestamp), "event_id": self.event_id}
        for name in STRING_FIELDS:
            rec[name] = getattr(self, name)
        rec["record_id"] = self.ref
        return rec


@dataclass(frozen=True)
class PayloadItem:
    event_ref: str
    text: str
    day: date
    # the non-empty attribute values that make up ``text``, in order
    parts: tuple[str, ...] = ()


def parse_timestamp(value) -> datetime:
    """Parse an ISO-8601 instant; values without an offset are taken as UTC."""
    if isinstance(value, datetime):
        ts = value
    elif isinstance(value, str):
        s = value.strip()
        if s.endswith(("Z", "z")):
            s = s[:-1] + "+00:00"
        ts = datetime.fromisoformat(s)
    else:
        raise ValueError(f"timestamp must be a string, got {type(value).__name__}")
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def event_from_record(rec: dict, ref: str) -> ProcessEvent:
    """Build a ProcessEvent from a decoded record; raises ValueError when malformed."""
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    for key in _REQUIRED:
        val = rec.get(key)
        if val is None or (isinstance(val, str) and not val.strip()):
            raise ValueError(f"missing {key}")
    eid = rec["event_id"]
    if isinstance(eid, bool):
        raise ValueError("event_id must be an integer")
    if isinstance(eid, str):
        eid = int(eid.strip())
    elif isinstance(eid, float) and eid.is_integer():
        eid = int(eid)
    elif not isinstance(eid, int):
        raise ValueError("event_id must be an integer")
    if eid == PROCESS_CREATION and not str(rec.get("command_line") or "").strip():
        raise ValueError("process creation without command_line")

    values = {}
    for name in STRING_FIELDS:
        val = rec.get(name)
        if val is None:
            val = ""
        if not isinstance(val, str):
            raise ValueError(f"{name} must be a string")
        values[name] = val
    record_id = rec.get("record_id")
    if record_id not in (None, ""):
        ref = str(record_id)
    return ProcessEvent(timestamp=parse_timestamp(rec["timestamp"]), event_id=eid, ref=ref, **values)


def _parse_jsonl_chunk(lines: Sequence[tuple[int, str]]) -> list[tuple[int, ProcessEvent | None]]:
    out = []
    for lineno, line in lines:
        try:
            ev = event_from_record(json.loads(line), f"line:{lineno}")
        except (ValueError, TypeError) as exc:
            logger.debug("line %d skipped: %s", lineno, exc)
            ev = None
        out.append((lineno, ev))
    return out


def _read_text(source) -> str:
    try:
        if isinstance(source, (str, Path)):
            return Path(source).read_bytes().decode("utf-8")
        data = source.read()
    except OSError as exc:
        raise DataError(f"cannot read telemetry source: {exc}", stage="ingest") from exc
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def parse_events(source: str | Path | IO, fmt: str = "jsonl", threads: int = 1) -> tuple[list[ProcessEvent], int]:
    """Parse a JSONL or CSV telemetry stream.

    Returns ``(events, skipped)``.  Malformed records are skipped and counted;
    when more than half the records are malformed a CorpusQualityError is
    raised since the declared format is most likely wrong.  Output order is
    input order regardless of ``threads``.
    """
    text = _read_text(source)
    if fmt == "jsonl":
        numbered = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
        if threads > 1 and len(numbered) > 1000:
            size = -(-len(numbered) // threads)
            chunks = [numbered[i : i + size] for i in range(0, len(numbered), size)]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parsed = [item for part in pool.map(_parse_jsonl_chunk, chunks) for item in part]
        else:
            parsed = _parse_jsonl_chunk(numbered)
    elif fmt == "csv":
        reader = csv.DictReader(io.StringIO(text, newline=""))
        if text.strip() and reader.fieldnames is None:
            raise CorpusQualityError("CSV input has no header row", stage="ingest")
        parsed = []
        for rownum, row in enumerate(reader, start=1):
            try:
                if None in row:
                    raise ValueError("more fields than header columns")
                parsed.append((rownum, event_from_record(row, f"row:{rownum}")))
            except (ValueError, TypeError) as exc:
                logger.debug("row %d skipped: %s", rownum, exc)
                parsed.append((rownum, None))
    else:
        raise DataError(f"unknown input format {fmt!r}", stage="ingest")

    events = [ev for _, ev in parsed if ev is not None]
    skipped = len(parsed) - len(events)
    if parsed and skipped / len(parsed) > MAX_MALFORMED_FRACTION:
        raise CorpusQualityError(
            f"{skipped} of {len(parsed)} records malformed; is the input really {fmt}?", stage="ingest"
        )
    if skipped:
        logger.warning("skipped %d malformed records of %d", skipped, len(parsed))
    return events, skipped


def filter_process_creation(events: Iterable[ProcessEvent]) -> list[ProcessEvent]:
    return [ev for ev in events if ev.event_id == PROCESS_CREATION]


def normalize_text(value: str) -> str:
    value = value.lower()
    for ch in RESERVED_CHARS:
        if ch in value:
            value = value.replace(ch, "\ufffd")
    return _WS_RUN.sub(" ", value).strip(" \t\n\r\f\v")


def normalize(event: ProcessEvent) -> ProcessEvent:
    return replace(event, **{name: normalize_text(getattr(event, name)) for name in STRING_FIELDS})


def validate_attribute_order(attribute_order: Sequence[str]) -> tuple[str, ...]:
    order = tuple(attribute_order)
    if not order:
        raise PayloadError("attribute_order must not be empty")
    bad = [a for a in order if a not in STRING_FIELDS]
    if bad:
        raise PayloadError(f"unknown payload attributes: {', '.join(bad)}")
    return order


def build_payload(event: ProcessEvent, attribute_order: Sequence[str] = DEFAULT_ATTRIBUTE_ORDER) -> PayloadItem:
    parts = tuple(v for v in (getattr(event, a) for a in validate_attribute_order(attribute_order)) if v)
    if not parts:
        raise PayloadError(f"event {event.ref}: every payload attribute is empty")
    return PayloadItem(event_ref=event.ref, text=" ".join(parts), day=event.day, parts=parts)


def ingest(
    source, fmt: str = "jsonl", attribute_order: Sequence[str] = DEFAULT_ATTRIBUTE_ORDER, threads: int = 1
) -> tuple[list[ProcessEvent], list[PayloadItem], int]:
    """Parse, filter, normalize and build payloads; returns (events, payloads, skipped)."""
    events, skipped = parse_events(source, fmt, threads=threads)
    events = [normalize(ev) for ev in filter_process_creation(events)]
    return events, [build_payload(ev, attribute_order) for ev in events], skipped

