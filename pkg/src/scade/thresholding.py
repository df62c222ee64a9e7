"""Dynamic mean/standard-deviation thresholds and severity tiers."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CalibrationError

logger = logging.getLogger(__name__)

HIGH_SIGMAS = 2
MEDIUM_SIGMAS = Fraction(3, 2)

SCORE_KINDS = ("bm25", "log_entropy")
GRAM_KINDS = ("unigram", "bigram")
MODEL_TAGS = tuple(f"{s}:{g}" for s in SCORE_KINDS for g in GRAM_KINDS)


class Severity(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: str) -> "Severity":
        return cls[value.upper()]


@dataclass(frozen=True)
class ThresholdModel:
    """Population mean/std of one score stream over the calibration window.

    Exact rational moments are kept next to the float ones so that the tier
    boundaries (strictly above mean + 2 std is high, the half-open interval
    (mean + 1.5 std, mean + 2 std] is medium) are decided without rounding.
    """

    mean: float
    std: float
    window_days: int = 2
    model_tag: str = ""
    n: int = 0
    _mean_q: Fraction = field(default=Fraction(0), repr=False, compare=False)
    _var_q: Fraction = field(default=Fraction(0), repr=False, compare=False)

    @property
    def degenerate(self) -> bool:
        return self._var_q == 0

    def z(self, score: float) -> float:
        if self.degenerate:
            return 0.0
        return (score - self.mean) / self.std

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "mean": self.mean,
            "std": self.std,
            "n": self.n,
            "window_days": self.window_days,
            "degenerate": self.degenerate,
            "mean_exact": _frac_str(self._mean_q),
            "var_exact": _frac_str(self._var_q),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdModel":
        return cls(
            mean=data["mean"],
            std=data["std"],
            window_days=data["window_days"],
            model_tag=data["model_tag"],
            n=data["n"],
            _mean_q=Fraction(data["mean_exact"]),
            _var_q=Fraction(data["var_exact"]),
        )


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def calibrate(scores: Iterable[float], window_days: int = 2, model_tag: str = "") -> ThresholdModel:
    values = [Fraction(s) for s in scores]
    n = len(values)
    if n < 2:
        raise CalibrationError(f"need at least 2 scores to calibrate {model_tag or 'threshold'}, got {n}")
    mean_q = sum(values, Fraction(0)) / n
    var_q = sum(((v - mean_q) ** 2 for v in values), Fraction(0)) / n
    if var_q == 0:
        logger.warning("zero score variance for %s; every score will be labelled low", model_tag or "threshold")
    return ThresholdModel(
        mean=float(mean_q),
        std=math.sqrt(var_q),
        window_days=window_days,
        model_tag=model_tag,
        n=n,
        _mean_q=mean_q,
        _var_q=var_q,
    )


def _beyond(dev: Fraction, sigmas: Fraction | int, var: Fraction, strict: bool) -> bool:
    # dev > sigmas * sqrt(var)  <=>  dev > 0 and dev^2 > sigmas^2 * var
    if dev <= 0:
        return False
    lhs, rhs = dev * dev, sigmas * sigmas * var
    return lhs > rhs if strict else lhs >= rhs


def classify(score: float, model: ThresholdModel) -> Severity:
    if model.degenerate:
        return Severity.LOW
    # far from both cut points the float z-score is decisive; a subnormal
    # variance can round std to 0, in which case only exact arithmetic works
    z = (score - model.mean) / model.std if model.std > 0 else math.nan
    if math.isfinite(z) and abs(z - 2) > 1e-6 and abs(z - 1.5) > 1e-6:
        if z > 2:
            return Severity.HIGH
        return Severity.MEDIUM if z > 1.5 else Severity.LOW
    dev = Fraction(score) - model._mean_q
    if _beyond(dev, HIGH_SIGMAS, model._var_q, strict=True):
        return Severity.HIGH
    if _beyond(dev, MEDIUM_SIGMAS, model._var_q, strict=True):
        return Severity.MEDIUM
    return Severity.LOW


@dataclass
class ScoreStore:
    """Day-keyed score history per model tag, persisted as JSONL."""

    entries: list[tuple[date, str, str, float]] = field(default_factory=list)

    def add(self, day: date, model_tag: str, event_ref: str, score: float) -> None:
        self.entries.append((day, model_tag, event_ref, score))

    def extend(self, other: "ScoreStore") -> None:
        seen = {(d, t, r) for d, t, r, _ in self.entries}
        self.entries.extend(e for e in other.entries if (e[0], e[1], e[2]) not in seen)

    def window(self, model_tag: str, now: date, window_days: int) -> list[float]:
        start = now - timedelta(days=window_days - 1)
        return [s for d, t, _, s in self.entries if t == model_tag and start <= d <= now]

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for d, t, r, s in sorted(self.entries, key=lambda e: (e[0], e[1], e[2])):
                fh.write(json.dumps({"day": d.isoformat(), "model_tag": t, "event_ref": r, "score": s}) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ScoreStore":
        store = cls()
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    store.add(date.fromisoformat(rec["day"]), rec["model_tag"], rec["event_ref"], rec["score"])
        return store


def recalibrate(history: ScoreStore, now: date | datetime, window_days: int = 2, model_tag: str = "") -> ThresholdModel:
    """Calibrate on the stored scores whose day falls in the trailing window ending at ``now``."""
    if isinstance(now, datetime):
        now = now.date()
    scores = history.window(model_tag, now, window_days)
    if not scores:
        raise CalibrationError(f"no {model_tag or ''} scores in the {window_days}-day window ending {now}")
    return calibrate(scores, window_days, model_tag)


def severity_counts(scores: Sequence[float], model: ThresholdModel) -> dict[str, int]:
    counts = {s.label: 0 for s in reversed(Severity)}
    for s in scores:
        counts[classify(s, model).label] += 1
    return counts
