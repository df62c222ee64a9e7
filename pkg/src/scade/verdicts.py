"""Combine global severities with the local check into final classifications."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Iterable, Mapping

from .local import LocalResult
from .thresholding import MODEL_TAGS, Severity


class Classification(str, Enum):
    TRUE_POSITIVE = "TruePositive"
    BENIGN_POSITIVE = "BenignPositive"
    LEGITIMATE = "Legitimate"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {Classification.TRUE_POSITIVE: 0, Classification.BENIGN_POSITIVE: 1, Classification.LEGITIMATE: 2}


@dataclass
class SeverityRecord:
    """Global-analysis outcome for one payload across the four score streams."""

    event_ref: str
    severities: dict[str, Severity]
    scores: dict[str, float] = field(default_factory=dict)
    z: dict[str, float] = field(default_factory=dict)
    top_attributions: list = field(default_factory=list)
    day: date | None = None

    @property
    def flagged(self) -> bool:
        return is_flagged(self.severities)

    @property
    def max_z(self) -> float:
        return max(self.z.values(), default=0.0)

    def to_dict(self) -> dict:
        return {
            "event_ref": self.event_ref,
            "day": self.day.isoformat() if self.day else None,
            "severities": {t: s.label for t, s in self.severities.items()},
            "scores": self.scores,
            "z": self.z,
            "top_attributions": self.top_attributions,
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "SeverityRecord":
        return cls(
            event_ref=rec["event_ref"],
            severities={t: Severity.parse(s) for t, s in rec["severities"].items()},
            scores=dict(rec["scores"]),
            z=dict(rec["z"]),
            top_attributions=[tuple(a) for a in rec["top_attributions"]],
            day=date.fromisoformat(rec["day"]) if rec.get("day") else None,
        )


def is_flagged(severities: Mapping[str, Severity]) -> bool:
    # union over models and gram modes: one medium/high anywhere is enough
    return any(s >= Severity.MEDIUM for s in severities.values())


def filter_flagged(records: Iterable[SeverityRecord]) -> list[str]:
    missing = [r.event_ref for r in records if set(r.severities) != set(MODEL_TAGS)]
    if missing:
        raise ValueError(f"severity labels incomplete for {missing[:3]}")
    return [r.event_ref for r in records if r.flagged]


@dataclass
class Verdict:
    event_ref: str
    classification: Classification
    confidence: str
    global_evidence: dict
    local_evidence: dict
    sort_key: float = 0.0

    def to_record(self, n_attributions: int = 5) -> dict:
        ge = self.global_evidence
        return {
            "event_ref": self.event_ref,
            "classification": self.classification.value,
            "confidence": self.confidence,
            "severities": ge["severities"],
            "scores": ge["scores"],
            "max_z": ge["max_z"],
            "local_score": self.local_evidence.get("score"),
            "local_anomalous": self.local_evidence.get("anomalous"),
            "local_abstained": self.local_evidence.get("abstained", False),
            "top_attributions": [list(a) for a in ge["top_attributions"][:n_attributions]],
        }


def _global_evidence(rec: SeverityRecord) -> dict:
    return {
        "severities": {t: rec.severities[t].label for t in sorted(rec.severities)},
        "scores": rec.scores,
        "max_z": rec.max_z,
        "top_attributions": rec.top_attributions,
    }


def combine(rec: SeverityRecord, local: LocalResult | None) -> Verdict:
    """Classify a flagged payload from its local result.

    Locally anomalous -> TruePositive; locally normal -> BenignPositive; no
    local judgement (cold start) -> TruePositive with low confidence.
    """
    if local is None or local.abstained:
        cls, confidence = Classification.TRUE_POSITIVE, "low"
        evidence = {"score": None, "anomalous": None, "abstained": True, "reason": local.reason if local else "missing"}
    else:
        cls = Classification.TRUE_POSITIVE if local.anomalous else Classification.BENIGN_POSITIVE
        confidence = "normal"
        evidence = {"score": local.score, "anomalous": bool(local.anomalous), "abstained": False}
    return Verdict(rec.event_ref, cls, confidence, _global_evidence(rec), evidence, rec.max_z)


def finalize(records: Iterable[SeverityRecord], local: Mapping[str, LocalResult], include_bp: bool = True) -> list[Verdict]:
    """Verdict for every payload: flagged ones via ``combine``, the rest Legitimate.

    Sorted TruePositive, BenignPositive, Legitimate, then by descending
    largest z-score, then by event_ref.
    """
    out = []
    for rec in records:
        if rec.flagged:
            v = combine(rec, local.get(rec.event_ref))
        else:
            v = Verdict(rec.event_ref, Classification.LEGITIMATE, "normal", _global_evidence(rec), {}, rec.max_z)
        out.append(v)
    out.sort(key=lambda v: (v.classification.rank, -v.sort_key, v.event_ref))
    if not include_bp:
        out = [v for v in out if v.classification is not Classification.BENIGN_POSITIVE]
    return out


def class_counts(verdicts: Iterable[Verdict]) -> dict[str, int]:
    counts = {c.value: 0 for c in Classification}
    for v in verdicts:
        counts[v.classification.value] += 1
    return counts
