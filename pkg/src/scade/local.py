"""Per-day execution statistics for flagged commands and the local Isolation Forest check."""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, fields
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .ingest import ProcessEvent
from .iforest import IsolationForest

logger = logging.getLogger(__name__)

MIN_TRAINING_ROWS = 8

FEATURES = (
    "flagged_cmd_count_on_asset",
    "total_cmds_on_asset",
    "distinct_assets_running_cmd",
    "user_total_cmd_count",
)


def command_key(event: ProcessEvent) -> tuple[str, str]:
    # user/asset independent identity of "the same command"
    return (event.process_name, event.command_line)


def user_key(event: ProcessEvent) -> str:
    return f"{event.account_domain}\\{event.account_name}"


@dataclass(frozen=True)
class ExecutionStatsRow:
    event_ref: str
    day: date
    flagged_cmd_count_on_asset: int
    total_cmds_on_asset: int
    distinct_assets_running_cmd: int
    user_total_cmd_count: int

    def features(self) -> tuple[int, int, int, int]:
        return tuple(getattr(self, f) for f in FEATURES)


class EventStore:
    """Daily execution counters over an event history, indexed for stats lookups."""

    def __init__(self, events: Iterable[ProcessEvent]):
        self.by_ref: dict[str, ProcessEvent] = {}
        self.asset_total: Counter = Counter()
        self.cmd_on_asset: Counter = Counter()
        self.user_total: Counter = Counter()
        assets: dict[tuple, set] = defaultdict(set)
        days = set()
        for ev in events:
            d = ev.day
            days.add(d)
            self.by_ref[ev.ref] = ev
            key = command_key(ev)
            self.asset_total[d, ev.device_id] += 1
            self.cmd_on_asset[d, ev.device_id, key] += 1
            self.user_total[d, user_key(ev)] += 1
            assets[d, key].add(ev.device_id)
        self.cmd_assets = {k: len(v) for k, v in assets.items()}
        self.first_day = min(days) if days else None
        self.last_day = max(days) if days else None

    def __len__(self):
        return len(self.by_ref)

    def covers(self, run_date: date, days: int) -> bool:
        return self.first_day is not None and self.first_day <= run_date - timedelta(days=days - 1)

    def features(self, event: ProcessEvent, day: date) -> tuple[int, int, int, int]:
        key = command_key(event)
        return (
            self.cmd_on_asset[day, event.device_id, key],
            self.asset_total[day, event.device_id],
            self.cmd_assets.get((day, key), 0),
            self.user_total[day, user_key(event)],
        )

    def rows_for(self, event: ProcessEvent, run_date: date, days: int) -> list[ExecutionStatsRow]:
        out = []
        for back in range(days - 1, -1, -1):
            d = run_date - timedelta(days=back)
            out.append(ExecutionStatsRow(event.ref, d, *self.features(event, d)))
        return out


def generate_execution_stats(
    flagged: Iterable[str], history: EventStore | Iterable[ProcessEvent], days: int = 5, run_date: date | None = None
) -> list[ExecutionStatsRow]:
    """One row per (flagged payload, day) for the ``days`` days ending at ``run_date``.

    Days on which nothing relevant ran still produce a row (all-zero counters),
    so every flagged payload contributes exactly ``days`` rows.
    """
    store = history if isinstance(history, EventStore) else EventStore(history)
    if run_date is None:
        run_date = store.last_day
    rows = []
    for ref in flagged:
        ev = store.by_ref.get(ref)
        if ev is None:
            raise DataError(f"flagged payload {ref} not found in the event history", stage="localize")
        rows.extend(store.rows_for(ev, run_date, days))
    return rows


def to_matrix(rows: Sequence[ExecutionStatsRow], transform: str = "log1p") -> np.ndarray:
    X = np.array([r.features() for r in rows], dtype=np.float64).reshape(-1, len(FEATURES))
    if transform == "log1p":
        return np.log1p(X)
    if transform == "raw":
        return X
    raise ValueError(f"unknown feature transform {transform!r}")


@dataclass
class StatsForest(IsolationForest):
    """Isolation Forest that remembers how execution counters were transformed."""

    transform: str = "log1p"


def fit_isolation_forest(
    rows: Sequence[ExecutionStatsRow],
    n_trees: int = 100,
    subsample: int = 256,
    seed: int = 0,
    contamination: float = 0.0175,
    transform: str = "log1p",
    threads: int = 1,
    days: int | None = None,
) -> StatsForest | None:
    """Fit on the four counters of each row; None signals too little data to judge.

    With ``days``, consecutive blocks of that many rows form one unit and the
    cutoff is calibrated on unit mean scores, as ``score_local_anomaly`` reports.
    """
    if len(rows) < MIN_TRAINING_ROWS:
        return None
    forest = StatsForest(
        n_trees=n_trees,
        subsample_size=min(subsample, len(rows)),
        contamination=contamination,
        seed=seed,
        threads=threads,
        transform=transform,
    )
    groups = np.arange(len(rows)) // days if days else None
    return forest.fit(to_matrix(rows, transform), groups)


def score_local_anomaly(model: StatsForest, rows: Sequence[ExecutionStatsRow]) -> tuple[float, bool]:
    """Mean anomaly score of one payload's daily rows, and whether it clears the cutoff."""
    score = float(np.mean(model.score_samples(to_matrix(rows, model.transform))))
    return score, model.is_anomalous(score)


@dataclass
class LocalParams:
    history_days: int = 5
    n_trees: int = 100
    subsample: int = 256
    contamination: float = 0.0175
    seed: int = 0
    transform: str = "log1p"
    # "flagged": fit on the flagged payloads' rows; "baseline": on every command active in the history
    training: str = "baseline"
    threads: int = 1


@dataclass
class LocalResult:
    event_ref: str
    score: float | None
    anomalous: bool | None
    abstained: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def analyze(
    flagged: Sequence[str], store: EventStore, run_date: date, params: LocalParams
) -> tuple[dict[str, LocalResult], list[ExecutionStatsRow], StatsForest | None]:
    """Local verdict input for every flagged payload.

    Payloads with the same (command, asset, user) share identical rows, so the
    forest is fitted once per distinct key rather than once per event.
    """
    if not flagged:
        return {}, [], None
    rows = generate_execution_stats(flagged, store, params.history_days, run_date)
    per_ref = {ref: rows[i * params.history_days : (i + 1) * params.history_days] for i, ref in enumerate(flagged)}

    def abstain(reason: str):
        logger.warning("local analysis abstains: %s", reason)
        return {ref: LocalResult(ref, None, None, True, reason) for ref in flagged}, rows, None

    if not store.covers(run_date, params.history_days):
        return abstain(f"history starts {store.first_day}, need {params.history_days} days ending {run_date}")

    key_of = {}
    for ref in flagged:
        ev = store.by_ref[ref]
        key_of[ref] = (command_key(ev), ev.device_id, user_key(ev))
    if params.training == "flagged":
        seen = {}
        for ref in flagged:
            seen.setdefault(key_of[ref], per_ref[ref])
        training = [r for rs in seen.values() for r in rs]
    elif params.training == "baseline":
        seen = {}
        for ev in store.by_ref.values():
            if run_date - timedelta(days=params.history_days - 1) <= ev.day <= run_date:
                k = (command_key(ev), ev.device_id, user_key(ev))
                if k not in seen:
                    seen[k] = store.rows_for(ev, run_date, params.history_days)
        training = [r for _, rs in sorted(seen.items()) for r in rs]
    else:
        raise ValueError(f"unknown local training population {params.training!r}")

    model = fit_isolation_forest(
        training,
        params.n_trees,
        params.subsample,
        params.seed,
        params.contamination,
        params.transform,
        params.threads,
        days=params.history_days,
    )
    if model is None:
        return abstain(f"only {len(training)} training rows (< {MIN_TRAINING_ROWS})")

    results = {}
    cache: dict = {}
    for ref in flagged:
        k = key_of[ref]
        if k not in cache:
            cache[k] = score_local_anomaly(model, per_ref[ref])
        score, anomalous = cache[k]
        results[ref] = LocalResult(ref, score, anomalous, False)
    return results, rows, model


def write_stats_csv(rows: Sequence[ExecutionStatsRow], path: str | Path) -> None:
    names = [f.name for f in fields(ExecutionStatsRow)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for r in rows:
            writer.writerow([getattr(r, n).isoformat() if n == "day" else getattr(r, n) for n in names])


def read_stats_csv(path: str | Path) -> list[ExecutionStatsRow]:
    with open(path, newline="") as fh:
        return [
            ExecutionStatsRow(
                rec["event_ref"], date.fromisoformat(rec["day"]), *(int(rec[f]) for f in FEATURES)
            )
            for rec in csv.DictReader(fh)
        ]


def results_from_records(records: Iterable[Mapping]) -> dict[str, LocalResult]:
    return {r["event_ref"]: LocalResult(**r) for r in records}
